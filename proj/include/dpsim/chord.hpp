// Chord ring: successor ownership, finger i -> successor(n + 2^i), closest-preceding-finger routing.
// Successor lists have length 1; a departing node's successor takes over its keys.

#pragma once

#include "dpsim/protocol.hpp"

#include <set>

namespace dpsim
{
    class Chord : public Protocol
    {
    public:
        explicit Chord(unsigned key_bits);

        std::string_view name() const override { return "chord"; }

        void bootstrap(Engine &engine, NodeId first) override;
        Key join_target(const Engine &engine, NodeId joiner, NodeId contact) const override;
        std::vector<Maintenance> commit_join(Engine &engine, NodeId joiner, NodeId contact) override;
        DeparturePlan plan_departure(const Engine &engine, NodeId leaving) const override;
        std::vector<Maintenance> commit_departure(Engine &engine, const DeparturePlan &plan) override;

        bool owns(const Engine &engine, NodeId node, Key key) const override;
        std::vector<NodeId> next_hops(const Engine &engine, NodeId at, Key key) const override;
        std::optional<NodeId> owner_of(const Engine &engine, Key key) const override;
        RoutingTable routing_table(const Engine &engine, NodeId node) const override;

        // Ring members, including failed peers and orphans that were never repaired.
        const std::set<NodeId> &ring() const { return ring_; }
        NodeId successor_of_key(Key key) const;
        NodeId successor(NodeId n) const;   // next member after n
        NodeId predecessor(NodeId n) const; // previous member before n
        NodeId finger(NodeId n, unsigned i) const;

    private:
        // key in the half-open ring interval (a, b]
        static bool in_interval(Key key, Key a, Key b);
        void hand_over(Engine &engine, NodeId from, NodeId to, Key after, Key upto);

        std::set<NodeId> ring_;
    };
} // namespace dpsim

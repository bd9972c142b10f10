// Minimal protocol: a directory at the first node knows every member, so a lookup goes straight
// to the owner in one hop (a self-addressed message when the origin owns the key). Keys are owned
// by their ring successor. Meant as the smallest working plug-in and as a test double.

#pragma once

#include "dpsim/protocol.hpp"

#include <set>

namespace dpsim
{
    class Dummy : public Protocol
    {
    public:
        explicit Dummy(unsigned key_bits) : Protocol(key_bits) {}

        std::string_view name() const override { return "dummy"; }

        void bootstrap(Engine &engine, NodeId first) override;
        Key join_target(const Engine &engine, NodeId joiner, NodeId contact) const override;
        NodeId join_entry(const Engine &engine, NodeId joiner, NodeId contact) const override;
        std::vector<Maintenance> commit_join(Engine &engine, NodeId joiner, NodeId contact) override;
        DeparturePlan plan_departure(const Engine &engine, NodeId leaving) const override;
        std::vector<Maintenance> commit_departure(Engine &engine, const DeparturePlan &plan) override;

        bool owns(const Engine &engine, NodeId node, Key key) const override;
        bool accepts(const Engine &engine, NodeId at, const Message &msg) const override;
        std::vector<NodeId> next_hops(const Engine &engine, NodeId at, Key key) const override;
        std::optional<NodeId> owner_of(const Engine &engine, Key key) const override;
        RoutingTable routing_table(const Engine &engine, NodeId node) const override;

        NodeId directory() const { return directory_; }

    private:
        NodeId successor_of_key(Key key) const;

        std::set<NodeId> members_;
        NodeId directory_;
    };
} // namespace dpsim

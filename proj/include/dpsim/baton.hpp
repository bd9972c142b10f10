// BATON*-style fanout-m balanced tree.
//
// Positions are heap slots in level order (root 0, children of p are p*m+1 .. p*m+m). Joins fill
// the lowest free slot whose parent slot is occupied, so the tree stays balanced. Keys are laid
// out in in-order: a node's first m/2 children come before it, the rest after. Each node owns a
// contiguous [lo, hi) of the key space.
//
// Routing table of a node: parent, children, left/right adjacent (in-order neighbours) and
// left/right sideways entries at distances j*m^i (j = 1..m-1) within its level.

#pragma once

#include "dpsim/protocol.hpp"

#include <map>
#include <set>
#include <unordered_map>

namespace dpsim
{
    class BatonStar : public Protocol
    {
    public:
        using Slot = std::uint64_t;
        using Order = unsigned __int128;

        BatonStar(unsigned key_bits, unsigned fanout);

        std::string_view name() const override { return "baton_star"; }
        unsigned fanout() const { return m_; }

        void bootstrap(Engine &engine, NodeId first) override;
        Key join_target(const Engine &engine, NodeId joiner, NodeId contact) const override;
        std::vector<Maintenance> commit_join(Engine &engine, NodeId joiner, NodeId contact) override;
        DeparturePlan plan_departure(const Engine &engine, NodeId leaving) const override;
        std::vector<Maintenance> commit_departure(Engine &engine, const DeparturePlan &plan) override;

        bool owns(const Engine &engine, NodeId node, Key key) const override;
        std::vector<NodeId> next_hops(const Engine &engine, NodeId at, Key key) const override;
        std::vector<NodeId> detour_hops(const Engine &engine, NodeId at, Key key) const override;
        std::optional<NodeId> owner_of(const Engine &engine, Key key) const override;
        RoutingTable routing_table(const Engine &engine, NodeId node) const override;

        bool supports_range() const override { return true; }
        std::optional<KeyRange> owned_range(const Engine &engine, NodeId node) const override;
        std::optional<NodeId> range_next(const Engine &engine, NodeId node) const override;

        // ------------------------------------------------------------------- structural queries
        std::size_t size() const { return nodes_.size(); }
        std::optional<Slot> slot_of(NodeId node) const;
        std::optional<NodeId> at_slot(Slot s) const;
        unsigned level_of(Slot s) const;
        // Number of edges on the longest root-to-node path; 0 for a single node.
        unsigned height() const;
        std::pair<Key, Key> range_of(NodeId node) const; // [lo, hi)
        // Slot the next joiner takes: the lowest free slot in level order.
        Slot join_slot(NodeId contact) const;
        // Occupied slots in in-order.
        std::vector<NodeId> in_order() const;

    private:
        struct Info
        {
            Slot slot = 0;
            Key lo = 0;
            Key hi = 0; // exclusive
            Order order = 0;
        };

        Order order_key(Slot s) const;
        Slot parent(Slot s) const { return (s - 1) / m_; }
        Slot child(Slot s, unsigned c) const { return s * m_ + 1 + c; }
        Slot level_first(unsigned level) const;
        std::uint64_t level_width(unsigned level) const;

        std::optional<NodeId> occupant(Slot s) const;
        std::optional<NodeId> in_order_prev(NodeId node) const;
        std::optional<NodeId> in_order_next(NodeId node) const;
        bool has_children(Slot s) const;
        Key span_lo(Slot s) const; // lo of the leftmost node in the subtree
        Key span_hi(Slot s) const; // hi of the rightmost node in the subtree
        // Every sideways position on one side that exists on the level is occupied.
        bool tables_full(Slot s, bool right) const;
        // Sideways neighbours on one side, nearest first.
        std::vector<NodeId> sideways(Slot s, bool right) const;

        void place(NodeId node, Slot s, Key lo, Key hi);
        void vacate(NodeId node);
        void set_range(NodeId node, Key lo, Key hi);
        // Even partition by in-order rank; stored keys follow.
        void rebalance(Engine &engine);

        unsigned m_;
        unsigned half_;      // children [0, half_) precede their parent in key order
        unsigned max_depth_; // deepest level the in-order key can encode
        std::unordered_map<NodeId, Info> nodes_;
        std::unordered_map<Slot, NodeId> slots_;
        std::map<Order, NodeId> order_;
        std::map<Key, NodeId> by_lo_;
        void add_free(Slot s);
        void remove_free(Slot s);

        std::set<Slot> free_; // unoccupied slots whose parent is occupied
        std::map<unsigned, std::size_t> per_level_;
    };
} // namespace dpsim

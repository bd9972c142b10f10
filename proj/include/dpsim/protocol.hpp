// Overlay protocol plug-in contract.
//
// A protocol keeps the structural view of the overlay (ring membership, tree positions, key
// ownership) replicated on every engine, and decides per hop where a message goes next. The
// generic parts of message handling (operation completion, failure replies, join and
// substitution flows) live in this base class so that a new protocol only supplies ownership,
// candidate next hops and structural updates.

#pragma once

#include "dpsim/engine.hpp"
#include "dpsim/message.hpp"
#include "dpsim/types.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace dpsim
{
    struct RoutingEntry
    {
        int slot = 0;
        NodeId neighbor;

        friend bool operator==(const RoutingEntry &, const RoutingEntry &) = default;
    };

    struct RoutingTable
    {
        std::vector<RoutingEntry> entries;
        std::size_t capacity = 0;

        std::size_t size() const { return entries.size(); }
        bool contains(NodeId id) const;
        std::vector<NodeId> neighbors() const;
        // Appends unless `id` is `self` or already present.
        void add(int slot, NodeId id, NodeId self);
    };

    struct ProtocolSpec
    {
        std::string name = "baton_star"; // chord, baton_star, dummy; art/nbdt/nbdt_star/r_nbdt_star reserved
        unsigned fanout = 2;
        unsigned key_bits = 32;

        void validate() const; // throws InvalidParams / UnsupportedOperation

        friend bool operator==(const ProtocolSpec &, const ProtocolSpec &) = default;
    };

    // Notifications a structural change asks for: `from` sends MAINTENANCE to each of `to`.
    struct Maintenance
    {
        NodeId from;
        std::vector<NodeId> to;
    };

    class Protocol
    {
    public:
        // Hop budget after which an operation is abandoned with QUERYFAILED_RES.
        static constexpr std::uint32_t kMaxHops = 256;

        explicit Protocol(unsigned key_bits) : key_bits_(key_bits) {}
        virtual ~Protocol() = default;

        virtual std::string_view name() const = 0;
        unsigned key_bits() const noexcept { return key_bits_; }
        Key key_limit() const noexcept { return key_space(key_bits_); }

        // ---------------------------------------------------------------- structure (replicated)
        virtual void bootstrap(Engine &engine, NodeId first) = 0;
        // Key the JOIN_REQ of `joiner` is routed to; its owner accepts the join.
        virtual Key join_target(const Engine &engine, NodeId joiner, NodeId contact) const = 0;
        virtual NodeId join_entry(const Engine &engine, NodeId joiner, NodeId contact) const;
        virtual std::vector<Maintenance> commit_join(Engine &engine, NodeId joiner, NodeId contact) = 0;
        virtual DeparturePlan plan_departure(const Engine &engine, NodeId leaving) const = 0;
        virtual std::vector<Maintenance> commit_departure(Engine &engine, const DeparturePlan &plan) = 0;

        // ------------------------------------------------------------------------------ routing
        virtual bool owns(const Engine &engine, NodeId node, Key key) const = 0;
        // Whether `at` completes `msg` instead of forwarding it. Defaults to ownership of the key.
        virtual bool accepts(const Engine &engine, NodeId at, const Message &msg) const;
        // Candidate next hops in preference order. Every candidate must make progress.
        virtual std::vector<NodeId> next_hops(const Engine &engine, NodeId at, Key key) const = 0;
        // Tried once every next hop is down and none of them owned the key. Need not make
        // progress; nodes already on the path are skipped. Defaults to the routing table.
        virtual std::vector<NodeId> detour_hops(const Engine &engine, NodeId at, Key key) const;
        virtual std::optional<NodeId> owner_of(const Engine &engine, Key key) const = 0;
        virtual RoutingTable routing_table(const Engine &engine, NodeId node) const = 0;

        virtual bool supports_range() const { return false; }
        // [lo, hi] owned by `node`; only needed by range-capable protocols.
        virtual std::optional<KeyRange> owned_range(const Engine &engine, NodeId node) const;
        // Next owner to the right in key order.
        virtual std::optional<NodeId> range_next(const Engine &engine, NodeId node) const;

        // ---------------------------------------------------------------------- message flows
        void start_join(Engine &engine, NodeId joiner, NodeId contact);
        void start_operation(Engine &engine, const OperationSpec &op);
        void start_substitution(Engine &engine, const DeparturePlan &plan);

        virtual void on_message(Engine &engine, const Message &msg);
        // A message was dropped in flight because its receiver went down.
        virtual void on_dropped(Engine &engine, const Message &msg);

    protected:
        void handle_routed(Engine &engine, NodeId at, const Message &msg);
        void forward(Engine &engine, NodeId at, const Message &msg, Key key);
        void complete(Engine &engine, NodeId at, const Message &msg);
        void range_step(Engine &engine, NodeId at, const Message &msg);
        void fail(Engine &engine, NodeId at, const Message &msg);
        void handle_replacement(Engine &engine, NodeId at, const Message &msg);

    private:
        unsigned key_bits_;
    };

    std::unique_ptr<Protocol> make_protocol(const ProtocolSpec &spec);
} // namespace dpsim

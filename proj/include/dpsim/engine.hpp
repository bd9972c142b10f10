// Deterministic virtual-time engine.
//
// Peers exchange Messages through per-peer outboxes, a tick-indexed network and per-peer inboxes.
// A message sent at tick t is due at t + base_latency * step(receiver). step() advances one tick,
// moves due messages into inboxes in (deliver_time, sequence) order and runs the protocol handler
// for each, peer by peer in order of first arrival. Messages sent by handlers sit in outboxes
// until the end of the tick.
//
// Every send is appended to the message log. Each sent message ends up exactly once in
// delivered, undeliverable (unknown receiver or queue overflow), receiver_down, forwarded (handed
// to another shard) or still in flight.

#pragma once

#include "dpsim/command.hpp"
#include "dpsim/message.hpp"
#include "dpsim/metrics.hpp"
#include "dpsim/rng.hpp"
#include "dpsim/types.hpp"

#include <array>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace dpsim
{
    class Protocol;
    struct Maintenance;

    struct NetworkModel
    {
        Tick base_latency = 1;
        std::map<NodeId, Tick> per_node_step; // tick multiplier per receiver, default 1
        double background_traffic_rate = 0.0; // no-op MAINTENANCE messages injected per tick
        std::uint64_t seed = 1;
        std::size_t queue_cap = std::size_t{1} << 16;

        void validate() const; // throws InvalidParams
        Tick step_of(NodeId id) const;

        friend bool operator==(const NetworkModel &, const NetworkModel &) = default;
    };

    enum class SendStatus : std::uint8_t
    {
        Scheduled,
        UnknownReceiver,
        ReceiverDown,
    };

    struct SendReceipt
    {
        SendStatus status = SendStatus::Scheduled;
        Tick deliver_time = 0;

        bool ok() const noexcept { return status == SendStatus::Scheduled; }
    };

    struct LogRecord
    {
        Tick tick = 0;
        MessageKind kind = MessageKind::MAINTENANCE;
        NodeId sender;
        NodeId receiver;
        std::uint32_t hops = 0;

        friend auto operator<=>(const LogRecord &, const LogRecord &) = default;
    };

    // "tick,kind,sender,receiver,hops"
    std::string format_log_record(const LogRecord &r);

    struct Counters
    {
        std::uint64_t sent = 0;
        std::uint64_t delivered = 0;
        std::uint64_t undeliverable = 0;
        std::uint64_t receiver_down = 0;
        std::uint64_t forwarded = 0;   // handed to a remote shard
        std::uint64_t injected = 0;    // received from a remote shard
        std::uint64_t illegal_transitions = 0;
    };

    enum class OpStatus : std::uint8_t
    {
        Pending,
        Ok,
        NotFound,
        Failed,
    };

    // Outcome of one tracked operation as seen by this engine.
    struct OpResult
    {
        std::uint64_t op_id = 0;
        MessageKind kind = MessageKind::SEARCH;
        NodeId origin;
        OpStatus status = OpStatus::Pending;
        NodeId owner;
        std::uint32_t hops = 0;
        std::vector<NodeId> path;
        std::optional<std::vector<std::uint8_t>> value;
        std::vector<std::pair<Key, std::vector<std::uint8_t>>> matches; // RANGE
        std::vector<NodeId> visited_owners;                              // RANGE
    };

    struct Peer
    {
        NodeId id;
        PeerState state = PeerState::WORKING;
        bool joined = false; // part of the overlay structure
        std::vector<Message> inbox;
        std::vector<Message> outbox;
        std::map<Key, std::vector<std::uint8_t>> store;
        std::uint32_t received_queries = 0;
    };

    // Substitution flow of one departing peer, identical on every replica.
    struct DeparturePlan
    {
        NodeId leaving;
        std::optional<NodeId> substitute;
        std::vector<NodeId> route; // leaving ... substitute; empty without substitute
        NodeId notify;             // receiver of REPLACEMENT_RESP
        bool succeeds = false;
    };

    class Engine
    {
    public:
        using LocalPredicate = std::function<bool(NodeId)>;

        Engine(std::unique_ptr<Protocol> protocol, NetworkModel model = {});
        ~Engine();

        Engine(Engine &&) noexcept;
        Engine &operator=(Engine &&) noexcept;
        Engine(const Engine &) = delete;
        Engine &operator=(const Engine &) = delete;

        // Restricts hosting to the given ids; messages to other receivers go to take_remote().
        void set_local_predicate(LocalPredicate pred) { local_ = std::move(pred); }
        bool is_local(NodeId id) const { return !local_ || local_(id); }

        // -------------------------------------------------------------------------------- peers
        Peer &add_peer(NodeId id); // throws DuplicateId
        bool has_peer(NodeId id) const { return index_.contains(id); }
        std::uint32_t index_of(NodeId id) const; // throws UnknownNode
        Peer &peer(NodeId id) { return peers_[index_of(id)]; }
        const Peer &peer(NodeId id) const { return peers_[index_of(id)]; }
        Peer &peer_at(std::uint32_t index) { return peers_[index]; }
        const Peer &peer_at(std::uint32_t index) const { return peers_[index]; }
        std::size_t peer_count() const { return peers_.size(); }
        const std::vector<Peer> &peers() const { return peers_; }

        PeerState state(NodeId id) const { return peer(id).state; }
        // Applies a legal transition; illegal ones are counted and rejected (returns false).
        bool set_state(NodeId id, PeerState to);
        // Marks a peer as inside / outside the overlay structure.
        void set_joined(NodeId id, bool joined);

        // Joined live peers, sorted by id. Identical on every replica (substitute candidacy is local).
        const std::vector<NodeId> &working_members() const;
        std::size_t member_count() const; // joined peers, any state

        // ------------------------------------------------------------------------------ network
        SendReceipt send(Message msg);
        std::size_t broadcast(NodeId sender, MessageKind kind, const Data &data, std::span<const NodeId> targets);

        std::size_t step();
        Tick run_until_quiescent(Tick max_ticks);
        Tick now() const noexcept { return now_; }
        std::size_t in_flight() const noexcept { return in_flight_; }
        // No pending work: nothing in outboxes and nothing but background traffic in flight.
        bool quiescent() const noexcept;

        // Messages produced for receivers hosted elsewhere since the last call.
        std::vector<Message> take_remote();
        // Enqueues a message that was sent on another shard; keeps its deliver_time.
        void inject_remote(Message msg);

        // ----------------------------------------------------------------------------- commands
        void apply(const Command &command);

        // Substitution searches started here minus those resolved here. Summed across shards this
        // is the number still in progress.
        std::int64_t substitutions_started() const noexcept { return subs_started_; }
        std::int64_t substitutions_resolved() const noexcept { return subs_resolved_; }
        const std::map<NodeId, DeparturePlan> &pending_departures() const { return pending_departures_; }

        // ---------------------------------------------------------------------------------- log
        std::uint64_t log_count(MessageKind kind) const { return kind_counts_[static_cast<std::size_t>(kind)]; }
        void reset_log_counts() { kind_counts_.fill(0); }
        const std::vector<LogRecord> &log() const { return log_; }
        void set_keep_log(bool keep) { keep_log_ = keep; }
        // Streams every record as it is logged; nullptr disables.
        void set_log_sink(std::ostream *sink) { sink_ = sink; }
        void export_log(std::ostream &out) const;
        std::uint64_t log_digest() const noexcept { return digest_; }
        const Counters &counters() const noexcept { return counters_; }

        // -------------------------------------------------------------------- stats and results
        MetricRegistry &stats() { return stats_; }
        const MetricRegistry &stats() const { return stats_; }

        OpResult &op_result(std::uint64_t op_id) { return ops_[op_id]; }
        const OpResult *find_op(std::uint64_t op_id) const;
        const std::map<std::uint64_t, OpResult> &ops() const { return ops_; }
        void clear_ops() { ops_.clear(); }

        Protocol &protocol() { return *protocol_; }
        const Protocol &protocol() const { return *protocol_; }
        const NetworkModel &network_model() const { return model_; }

        // Moves stored keys in [lo, hi) between two peers when both are hosted here.
        void move_keys(NodeId from, NodeId to, Key lo, Key hi);

        // Substitution bookkeeping used by protocol handlers.
        void note_substitution_resolved() { ++subs_resolved_; }

    private:
        void record_log(const Message &m);
        void flush_outboxes();
        void deliver_due();
        void inject_background();
        void enqueue_network(Message &&m);

        void send_maintenance(const std::vector<Maintenance> &notes, bool record);
        void apply_join(const cmd::Join &c);
        void apply_operation(const OperationSpec &op);
        void apply_fail(const cmd::Fail &c);
        void apply_depart(const cmd::Depart &c);
        void apply_commit_departures(const cmd::CommitDepartures &c);

        std::unique_ptr<Protocol> protocol_;
        NetworkModel model_;
        LocalPredicate local_;

        Tick now_ = 0;
        std::vector<Peer> peers_;
        std::unordered_map<NodeId, std::uint32_t> index_;
        std::map<Tick, std::vector<Message>> network_;
        std::size_t in_flight_ = 0;
        std::size_t in_flight_work_ = 0; // excluding MAINTENANCE
        std::size_t outbox_pending_ = 0;
        std::vector<std::uint32_t> outbox_senders_;
        std::vector<std::uint32_t> receivers_this_tick_;
        std::vector<Message> remote_out_;

        mutable std::vector<NodeId> working_cache_;
        mutable bool working_dirty_ = true;
        std::size_t members_ = 0;

        std::array<std::uint64_t, kMessageKindCount> kind_counts_{};
        std::vector<LogRecord> log_;
        bool keep_log_ = true;
        std::ostream *sink_ = nullptr;
        std::uint64_t digest_ = 0xcbf29ce484222325ULL;
        Counters counters_;

        MetricRegistry stats_;
        std::map<std::uint64_t, OpResult> ops_;
        std::map<NodeId, DeparturePlan> pending_departures_;
        std::map<NodeId, NodeId> pending_joins_; // joiner -> contact
        std::int64_t subs_started_ = 0;
        std::int64_t subs_resolved_ = 0;

        Rng background_rng_;

        friend class Protocol;
    };
} // namespace dpsim

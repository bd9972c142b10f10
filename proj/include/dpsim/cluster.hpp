// Lockstep execution over one engine or several shards.
//
// A Cluster advances virtual time for every shard together. Commands passed to apply() take
// effect at the current tick boundary on every replica, before the next step().

#pragma once

#include "dpsim/engine.hpp"
#include "dpsim/protocol.hpp"

#include <array>
#include <memory>
#include <vector>

namespace dpsim
{
    using KindCounts = std::array<std::uint64_t, kMessageKindCount>;

    class Cluster
    {
    public:
        virtual ~Cluster() = default;

        virtual void apply(const std::vector<Command> &commands) = 0;
        void apply(const Command &command) { apply(std::vector<Command>{command}); }
        virtual void step() = 0;
        virtual bool quiescent() = 0;
        // Substitution searches started but not yet resolved, over all shards.
        virtual std::int64_t substitutions_pending() = 0;
        virtual Tick now() const = 0;

        // Structural replica: peer states, membership and protocol structure.
        virtual const Engine &view() const = 0;

        virtual std::vector<MetricSummary> stats() = 0; // merged over shards
        virtual KindCounts log_counts() = 0;
        virtual void reset_log_counts() = 0;
        virtual Counters counters() = 0;
        // Retained log records of every shard, sorted.
        virtual std::vector<LogRecord> log() = 0;
        // Per-shard message-log digests, in shard order.
        virtual std::vector<std::uint64_t> log_digests() = 0;
        // Operation outcomes merged over shards, by op id.
        virtual std::map<std::uint64_t, OpResult> op_results() = 0;
        virtual std::size_t shard_count() const = 0;
        virtual void shutdown() {}
    };

    class LocalCluster : public Cluster
    {
    public:
        explicit LocalCluster(Engine engine) : engine_(std::move(engine)) {}
        LocalCluster(const ProtocolSpec &protocol, const NetworkModel &model)
            : engine_(make_protocol(protocol), model)
        {
        }

        using Cluster::apply;
        void apply(const std::vector<Command> &commands) override;
        void step() override { engine_.step(); }
        bool quiescent() override { return engine_.quiescent(); }
        std::int64_t substitutions_pending() override
        {
            return engine_.substitutions_started() - engine_.substitutions_resolved();
        }
        Tick now() const override { return engine_.now(); }
        const Engine &view() const override { return engine_; }

        std::vector<MetricSummary> stats() override { return engine_.stats().summaries(); }
        KindCounts log_counts() override;
        void reset_log_counts() override { engine_.reset_log_counts(); }
        Counters counters() override { return engine_.counters(); }
        std::vector<LogRecord> log() override;
        std::vector<std::uint64_t> log_digests() override { return {engine_.log_digest()}; }
        std::map<std::uint64_t, OpResult> op_results() override;
        std::size_t shard_count() const override { return 1; }

        Engine &engine() { return engine_; }

    private:
        Engine engine_;
    };

    // Merges partial results of one operation reported by different shards.
    void merge_op_result(OpResult &into, const OpResult &part);

    // ----------------------------------------------------------------------------- driving helpers

    // Steps until no work is in flight and no substitution is pending. Returns ticks taken.
    Tick settle(Cluster &cluster, Tick max_ticks);

    // Bootstraps with the first id, then joins the rest one at a time through `contacts`
    // (contact for ids[i] is contacts[i]; contacts[0] is ignored).
    void build_overlay(Cluster &cluster, const std::vector<NodeId> &ids, const std::vector<NodeId> &contacts,
                       Tick max_ticks_per_join = 100000);

    void join_node(Cluster &cluster, NodeId node, NodeId contact, Tick max_ticks = 100000);

    // All nodes leave in the same tick; substitution searches run in parallel.
    void depart_concurrent(Cluster &cluster, const std::vector<NodeId> &nodes, Tick max_ticks = 100000);
    // Nodes leave one at a time, each after the previous substitution completed.
    void depart_sequential(Cluster &cluster, const std::vector<NodeId> &nodes, Tick max_ticks = 100000);
} // namespace dpsim

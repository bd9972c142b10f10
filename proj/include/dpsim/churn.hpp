// Departures, failures, live-node sampling and partition detection.

#pragma once

#include "dpsim/cluster.hpp"
#include "dpsim/distribution.hpp"
#include "dpsim/engine.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <vector>

namespace dpsim
{
    // Round half to even, as used for every "fraction of nodes" count.
    std::size_t round_count(double x);

    // Draws ranks out of a fixed candidate list (sorted by id) while excluding some of them.
    class LiveSelector
    {
    public:
        explicit LiveSelector(std::vector<NodeId> candidates);

        std::size_t remaining() const noexcept { return remaining_; }
        bool excluded(NodeId id) const;
        void exclude(NodeId id); // no-op for unknown or already excluded ids
        // Rank = floor(u * remaining) over the remaining candidates in id order.
        NodeId pick(double u) const; // throws NoEligibleNode
        NodeId draw(Sampler &sampler) const { return pick(sampler.draw_unit()); }

    private:
        std::vector<NodeId> ids_;
        std::vector<std::uint32_t> tree_; // Fenwick tree over 1 = still eligible
        std::vector<bool> out_;
        std::size_t remaining_ = 0;
    };

    // WORKING joined nodes, except `exceptions`.
    NodeId sample_live(const Engine &engine, Sampler &sampler, const std::set<NodeId> &exceptions = {});

    // Distinct live nodes: round_count(fraction * live) draws without replacement.
    std::vector<NodeId> select_fraction(const Engine &engine, double fraction, Sampler &sampler);

    struct ChurnPlan
    {
        enum class Mode : std::uint8_t
        {
            concurrent,
            sequential,
        };
        enum class Kind : std::uint8_t
        {
            departure,
            failure,
        };

        Mode mode = Mode::concurrent;
        Kind kind = Kind::failure;
        std::vector<NodeId> ids;        // explicit selection, or
        std::optional<double> fraction; // a fraction of live nodes drawn per `distribution`
        DistributionSpec distribution;

        void validate() const; // throws InvalidPlan

        friend bool operator==(const ChurnPlan &, const ChurnPlan &) = default;
    };

    struct ChurnReport
    {
        std::vector<NodeId> nodes;
        Tick tick = 0;                          // tick the plan took effect
        std::uint64_t replacements = 0;         // REPLACEMENT_RESP messages logged meanwhile
        std::uint64_t substitutes_not_found = 0;
    };

    // Nodes a plan applies to. Explicit ids must all be WORKING members.
    std::vector<NodeId> resolve_plan(const Engine &engine, const ChurnPlan &plan);

    ChurnReport execute_plan(Cluster &cluster, const ChurnPlan &plan, Tick max_ticks = 100000);

    // ------------------------------------------------------------------------------ partitions

    // Directed contact lists. Entries may name nodes outside the graph (stale pointers).
    using ContactMap = std::map<NodeId, std::vector<NodeId>>;

    // Routing tables of the WORKING members.
    ContactMap contact_map(const Engine &engine);

    struct SeparationReport
    {
        bool partitioned = false;
        std::vector<std::vector<NodeId>> components; // sorted; largest first, ties by smallest id
        std::vector<std::int64_t> s_values;          // S of each component
    };

    // Components of the undirected closure over the keys of `contacts`.
    SeparationReport separation_report(const ContactMap &contacts);
    SeparationReport is_partitioned(const Engine &engine);

    // Directed entries of group members pointing outside the group.
    std::int64_t separation_cost(const ContactMap &contacts, const std::set<NodeId> &group); // UnknownNode
    std::int64_t separation_cost(const Engine &engine, const std::set<NodeId> &group);

    struct ResistanceResult
    {
        double fraction = 0.0; // failed share of the initial population at the first partition
        std::size_t failed = 0;
        std::size_t rounds = 0;
        bool partitioned = false; // false when it stopped because at most one node was left
    };

    // Fails initial_fraction of the members, then increment more per round, until the live
    // contact graph splits or at most one live node remains.
    ResistanceResult resistance_experiment(Cluster &cluster, double initial_fraction, double increment,
                                           Sampler &sampler);
} // namespace dpsim

#include "dpsim/cluster.hpp"

#include <algorithm>

namespace dpsim
{
    void LocalCluster::apply(const std::vector<Command> &commands)
    {
        for (const auto &c : commands)
            engine_.apply(c);
    }

    KindCounts LocalCluster::log_counts()
    {
        KindCounts out{};
        for (std::size_t k = 0; k < kMessageKindCount; ++k)
            out[k] = engine_.log_count(static_cast<MessageKind>(k));
        return out;
    }

    std::vector<LogRecord> LocalCluster::log()
    {
        auto out = engine_.log();
        std::sort(out.begin(), out.end());
        return out;
    }

    std::map<std::uint64_t, OpResult> LocalCluster::op_results()
    {
        return engine_.ops();
    }

    void merge_op_result(OpResult &into, const OpResult &part)
    {
        into.op_id = part.op_id;
        into.kind = part.kind;
        into.origin = part.origin;
        if (part.status == OpStatus::Failed || into.status == OpStatus::Failed)
            into.status = OpStatus::Failed;
        else if (part.status != OpStatus::Pending)
        {
            into.status = part.status;
            into.owner = part.owner;
            into.hops = part.hops;
            into.path = part.path;
            into.value = part.value;
        }
        into.matches.insert(into.matches.end(), part.matches.begin(), part.matches.end());
        into.visited_owners.insert(into.visited_owners.end(), part.visited_owners.begin(), part.visited_owners.end());
        std::sort(into.matches.begin(), into.matches.end());
    }

    Tick settle(Cluster &cluster, Tick max_ticks)
    {
        Tick ticks = 0;
        while (!cluster.quiescent() || cluster.substitutions_pending() > 0)
        {
            if (ticks == max_ticks)
                throw QuiescenceTimeout("no quiescence after " + std::to_string(max_ticks) + " ticks");
            cluster.step();
            ++ticks;
        }
        return ticks;
    }

    void join_node(Cluster &cluster, NodeId node, NodeId contact, Tick max_ticks)
    {
        cluster.apply(cmd::Join{node, contact});
        settle(cluster, max_ticks);
        cluster.apply(cmd::CommitJoin{node});
    }

    void build_overlay(Cluster &cluster, const std::vector<NodeId> &ids, const std::vector<NodeId> &contacts,
                       Tick max_ticks_per_join)
    {
        if (ids.empty())
            return;
        cluster.apply(cmd::Bootstrap{ids.front()});
        for (std::size_t i = 1; i < ids.size(); ++i)
            join_node(cluster, ids[i], contacts.at(i), max_ticks_per_join);
        settle(cluster, max_ticks_per_join);
    }

    void depart_concurrent(Cluster &cluster, const std::vector<NodeId> &nodes, Tick max_ticks)
    {
        if (nodes.empty())
            return;
        cluster.apply(cmd::Depart{nodes});
        settle(cluster, max_ticks);
        cluster.apply(cmd::CommitDepartures{nodes});
    }

    void depart_sequential(Cluster &cluster, const std::vector<NodeId> &nodes, Tick max_ticks)
    {
        for (auto n : nodes)
        {
            depart_concurrent(cluster, {n}, max_ticks);
            settle(cluster, max_ticks);
        }
    }
} // namespace dpsim

#include "dpsim/churn.hpp"

#include "dpsim/protocol.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

namespace dpsim
{
    std::size_t round_count(double x)
    {
        if (!(x > 0.0))
            return 0;
        return static_cast<std::size_t>(std::nearbyint(x)); // default FE_TONEAREST: ties to even
    }

    // ----------------------------------------------------------------------------- LiveSelector

    LiveSelector::LiveSelector(std::vector<NodeId> candidates) : ids_(std::move(candidates))
    {
        std::sort(ids_.begin(), ids_.end());
        ids_.erase(std::unique(ids_.begin(), ids_.end()), ids_.end());
        const std::size_t n = ids_.size();
        tree_.assign(n + 1, 0);
        out_.assign(n, false);
        for (std::size_t i = 1; i <= n; ++i)
        {
            tree_[i] += 1;
            if (const std::size_t up = i + (i & -i); up <= n)
                tree_[up] += tree_[i];
        }
        remaining_ = n;
    }

    bool LiveSelector::excluded(NodeId id) const
    {
        auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
        return it == ids_.end() || *it != id || out_[static_cast<std::size_t>(it - ids_.begin())];
    }

    void LiveSelector::exclude(NodeId id)
    {
        auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
        if (it == ids_.end() || *it != id)
            return;
        const auto pos = static_cast<std::size_t>(it - ids_.begin());
        if (out_[pos])
            return;
        out_[pos] = true;
        --remaining_;
        for (std::size_t i = pos + 1; i < tree_.size(); i += i & -i)
            --tree_[i];
    }

    NodeId LiveSelector::pick(double u) const
    {
        if (remaining_ == 0)
            throw NoEligibleNode("no eligible live node to sample");
        auto rank = static_cast<std::size_t>(std::clamp(u, 0.0, 1.0) * static_cast<double>(remaining_));
        rank = std::min(rank, remaining_ - 1);
        // Smallest position whose prefix count exceeds rank.
        std::size_t pos = 0;
        std::size_t left = rank;
        for (std::size_t step = std::bit_floor(tree_.size() - 1); step > 0; step >>= 1)
        {
            if (pos + step < tree_.size() && tree_[pos + step] <= left)
            {
                pos += step;
                left -= tree_[pos];
            }
        }
        return ids_[pos];
    }

    namespace
    {
        std::vector<NodeId> live_members(const Engine &engine)
        {
            std::vector<NodeId> out;
            for (NodeId id : engine.working_members())
                if (engine.state(id) == PeerState::WORKING)
                    out.push_back(id);
            return out;
        }
    } // namespace

    NodeId sample_live(const Engine &engine, Sampler &sampler, const std::set<NodeId> &exceptions)
    {
        LiveSelector sel(live_members(engine));
        for (NodeId id : exceptions)
            sel.exclude(id);
        return sel.draw(sampler);
    }

    std::vector<NodeId> select_fraction(const Engine &engine, double fraction, Sampler &sampler)
    {
        LiveSelector sel(live_members(engine));
        const std::size_t want = std::min(round_count(fraction * static_cast<double>(sel.remaining())),
                                          sel.remaining());
        std::vector<NodeId> out;
        out.reserve(want);
        while (out.size() < want)
        {
            const NodeId id = sel.draw(sampler);
            sel.exclude(id);
            out.push_back(id);
        }
        return out;
    }

    // ------------------------------------------------------------------------------- ChurnPlan

    void ChurnPlan::validate() const
    {
        if (!ids.empty() && fraction)
            throw InvalidPlan("churn plan gives both explicit ids and a fraction");
        if (fraction && !(*fraction >= 0.0 && *fraction <= 1.0))
            throw InvalidPlan("churn fraction must lie in [0, 1]");
        try
        {
            dpsim::validate(distribution);
        }
        catch (const InvalidParams &e)
        {
            throw InvalidPlan(std::string("churn distribution: ") + e.what());
        }
    }

    std::vector<NodeId> resolve_plan(const Engine &engine, const ChurnPlan &plan)
    {
        plan.validate();
        if (plan.fraction)
        {
            Sampler sampler(plan.distribution);
            return select_fraction(engine, *plan.fraction, sampler);
        }
        const auto &members = engine.working_members();
        std::set<NodeId> seen;
        for (NodeId id : plan.ids)
        {
            if (!engine.has_peer(id) || !std::binary_search(members.begin(), members.end(), id) ||
                engine.state(id) != PeerState::WORKING)
                throw InvalidPlan("node " + to_string(id) + " is not a WORKING member");
            if (!seen.insert(id).second)
                throw InvalidPlan("node " + to_string(id) + " listed twice");
        }
        return plan.ids;
    }

    ChurnReport execute_plan(Cluster &cluster, const ChurnPlan &plan, Tick max_ticks)
    {
        ChurnReport report;
        report.nodes = resolve_plan(cluster.view(), plan);
        report.tick = cluster.now();
        if (report.nodes.empty())
            return report;
        const auto before = cluster.log_counts()[static_cast<std::size_t>(MessageKind::REPLACEMENT_RESP)];
        auto not_found = [&] {
            for (const auto &s : cluster.stats())
                if (s.name == "substitute_not_found")
                    return s.count;
            return std::uint64_t{0};
        };
        const auto nf_before = not_found();
        if (plan.kind == ChurnPlan::Kind::failure)
        {
            cluster.apply(cmd::Fail{report.nodes});
            return report;
        }
        if (plan.mode == ChurnPlan::Mode::concurrent)
            depart_concurrent(cluster, report.nodes, max_ticks);
        else
            depart_sequential(cluster, report.nodes, max_ticks);
        report.replacements =
            cluster.log_counts()[static_cast<std::size_t>(MessageKind::REPLACEMENT_RESP)] - before;
        report.substitutes_not_found = not_found() - nf_before;
        return report;
    }

    // ------------------------------------------------------------------------------ partitions

    ContactMap contact_map(const Engine &engine)
    {
        ContactMap out;
        for (NodeId id : live_members(engine))
            out.emplace(id, engine.protocol().routing_table(engine, id).neighbors());
        return out;
    }

    namespace
    {
        struct DisjointSets
        {
            std::vector<std::uint32_t> parent;
            std::vector<std::uint32_t> size;

            explicit DisjointSets(std::size_t n) : parent(n), size(n, 1)
            {
                std::iota(parent.begin(), parent.end(), 0u);
            }

            std::uint32_t find(std::uint32_t x)
            {
                while (parent[x] != x)
                {
                    parent[x] = parent[parent[x]];
                    x = parent[x];
                }
                return x;
            }

            void unite(std::uint32_t a, std::uint32_t b)
            {
                a = find(a);
                b = find(b);
                if (a == b)
                    return;
                if (size[a] < size[b])
                    std::swap(a, b);
                parent[b] = a;
                size[a] += size[b];
            }
        };
    } // namespace

    SeparationReport separation_report(const ContactMap &contacts)
    {
        std::vector<NodeId> ids;
        ids.reserve(contacts.size());
        for (const auto &[id, _] : contacts)
            ids.push_back(id); // map order: sorted
        auto index = [&](NodeId id) -> std::optional<std::uint32_t> {
            auto it = std::lower_bound(ids.begin(), ids.end(), id);
            if (it == ids.end() || *it != id)
                return std::nullopt;
            return static_cast<std::uint32_t>(it - ids.begin());
        };
        DisjointSets sets(ids.size());
        std::uint32_t i = 0;
        for (const auto &[id, out] : contacts)
        {
            for (NodeId to : out)
                if (auto j = index(to))
                    sets.unite(i, *j);
            ++i;
        }
        std::map<std::uint32_t, std::vector<NodeId>> groups;
        for (std::uint32_t k = 0; k < ids.size(); ++k)
            groups[sets.find(k)].push_back(ids[k]);

        SeparationReport report;
        for (auto &[_, members] : groups)
            report.components.push_back(std::move(members));
        std::sort(report.components.begin(), report.components.end(), [](const auto &a, const auto &b) {
            return a.size() != b.size() ? a.size() > b.size() : a.front() < b.front();
        });
        report.partitioned = report.components.size() > 1;
        for (const auto &c : report.components)
            report.s_values.push_back(separation_cost(contacts, std::set<NodeId>(c.begin(), c.end())));
        return report;
    }

    SeparationReport is_partitioned(const Engine &engine) { return separation_report(contact_map(engine)); }

    std::int64_t separation_cost(const ContactMap &contacts, const std::set<NodeId> &group)
    {
        std::int64_t total = 0, internal = 0;
        for (NodeId v : group)
        {
            auto it = contacts.find(v);
            if (it == contacts.end())
                throw UnknownNode("node " + to_string(v) + " is not in the contact graph");
            for (NodeId u : it->second)
            {
                if (u == v)
                    continue; // self-loops are not contacts
                ++total;
                if (group.contains(u))
                    ++internal;
            }
        }
        return total - internal;
    }

    std::int64_t separation_cost(const Engine &engine, const std::set<NodeId> &group)
    {
        ContactMap contacts;
        for (NodeId v : group)
        {
            if (!engine.has_peer(v) || engine.state(v) != PeerState::WORKING || !engine.peer(v).joined)
                throw UnknownNode("node " + to_string(v) + " is not a WORKING member");
            contacts.emplace(v, engine.protocol().routing_table(engine, v).neighbors());
        }
        return separation_cost(contacts, group);
    }

    ResistanceResult resistance_experiment(Cluster &cluster, double initial_fraction, double increment,
                                           Sampler &sampler)
    {
        if (!(initial_fraction > 0.0 && initial_fraction < 1.0))
            throw InvalidParams("initial_fraction must lie in (0, 1)");
        if (!(increment > 0.0 && increment <= 1.0))
            throw InvalidParams("increment must lie in (0, 1]");

        const auto population = live_members(cluster.view());
        const double n0 = static_cast<double>(population.size());
        LiveSelector live(population);
        ResistanceResult result;
        for (std::size_t round = 0;; ++round)
        {
            // Computed from the round number to keep rounding drift out of the schedule.
            const double f = std::min(1.0, initial_fraction + static_cast<double>(round) * increment);
            const std::size_t target = std::min(round_count(f * n0), population.size());
            std::vector<NodeId> batch;
            while (result.failed + batch.size() < target)
            {
                const NodeId id = live.draw(sampler);
                live.exclude(id);
                batch.push_back(id);
            }
            if (!batch.empty())
                cluster.apply(cmd::Fail{batch});
            result.failed += batch.size();
            result.rounds = round + 1;
            result.fraction = f;
            if (live.remaining() <= 1)
                return result;
            if (is_partitioned(cluster.view()).partitioned)
            {
                result.partitioned = true;
                return result;
            }
            if (f >= 1.0)
                return result;
        }
    }
} // namespace dpsim

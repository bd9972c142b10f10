#pragma once

#include "dpsim/cluster.hpp"
#include "dpsim/rng.hpp"

#include <numeric>
#include <set>

namespace testing
{
    using namespace dpsim;

    inline std::vector<NodeId> ids_of(std::initializer_list<std::uint64_t> values)
    {
        std::vector<NodeId> out;
        for (auto v : values)
            out.emplace_back(v);
        return out;
    }

    // Distinct ids drawn from [0, 2^bits).
    inline std::vector<NodeId> random_ids(std::size_t n, unsigned bits, std::uint64_t seed)
    {
        Rng rng(seed);
        std::set<std::uint64_t> seen;
        std::vector<NodeId> out;
        while (out.size() < n)
        {
            auto v = rng.below(key_space(bits));
            if (seen.insert(v).second)
                out.emplace_back(v);
        }
        return out;
    }

    // Each node joins through a random earlier member.
    inline std::unique_ptr<LocalCluster> build(const ProtocolSpec &spec, const std::vector<NodeId> &ids,
                                               std::uint64_t seed = 7, NetworkModel model = {})
    {
        auto c = std::make_unique<LocalCluster>(spec, model);
        Rng rng(seed);
        std::vector<NodeId> contacts(ids.size());
        for (std::size_t i = 1; i < ids.size(); ++i)
            contacts[i] = ids[rng.below(i)];
        build_overlay(*c, ids, contacts);
        return c;
    }

    inline OpResult run_op(LocalCluster &c, MessageKind kind, NodeId origin, Key key, Key hi = 0,
                           std::vector<std::uint8_t> value = {})
    {
        static std::uint64_t next_id = 1;
        OperationSpec op{next_id++, kind, origin, key, hi, std::move(value)};
        c.apply(cmd::Operation{op});
        settle(c, 10000);
        return c.engine().ops().at(op.op_id);
    }
} // namespace testing

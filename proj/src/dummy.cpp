#include "dpsim/dummy.hpp"

namespace dpsim
{
    NodeId Dummy::successor_of_key(Key key) const
    {
        auto it = members_.lower_bound(NodeId{key});
        return it == members_.end() ? *members_.begin() : *it;
    }

    void Dummy::bootstrap(Engine &, NodeId first)
    {
        members_ = {first};
        directory_ = first;
    }

    Key Dummy::join_target(const Engine &, NodeId, NodeId) const { return directory_.value; }

    NodeId Dummy::join_entry(const Engine &, NodeId, NodeId) const { return directory_; }

    std::vector<Maintenance> Dummy::commit_join(Engine &engine, NodeId joiner, NodeId)
    {
        if (!members_.insert(joiner).second)
            throw DuplicateId("node " + to_string(joiner) + " already joined");
        auto next = members_.upper_bound(joiner);
        const NodeId succ = next == members_.end() ? *members_.begin() : *next;
        if (succ != joiner)
        {
            auto prev = members_.find(joiner);
            const NodeId pred = prev == members_.begin() ? *members_.rbegin() : *std::prev(prev);
            if (pred.value < joiner.value)
                engine.move_keys(succ, joiner, pred.value + 1, joiner.value + 1);
            else
            {
                engine.move_keys(succ, joiner, pred.value + 1, key_limit());
                engine.move_keys(succ, joiner, 0, joiner.value + 1);
            }
        }
        return {Maintenance{joiner, {directory_}}};
    }

    DeparturePlan Dummy::plan_departure(const Engine &, NodeId leaving) const
    {
        DeparturePlan plan;
        plan.leaving = leaving;
        plan.notify = directory_;
        return plan;
    }

    std::vector<Maintenance> Dummy::commit_departure(Engine &engine, const DeparturePlan &plan)
    {
        const NodeId x = plan.leaving;
        members_.erase(x);
        engine.set_joined(x, false);
        if (members_.empty())
            return {};
        const NodeId heir = successor_of_key(x.value);
        engine.move_keys(x, heir, 0, key_limit());
        if (x == directory_)
            directory_ = heir;
        return {};
    }

    bool Dummy::owns(const Engine &, NodeId node, Key key) const
    {
        return !members_.empty() && successor_of_key(key) == node;
    }

    bool Dummy::accepts(const Engine &engine, NodeId at, const Message &msg) const
    {
        // Everything goes through exactly one delivery, even when the origin is the owner.
        return msg.hops >= 1 && owns(engine, at, *msg.data.key);
    }

    std::vector<NodeId> Dummy::next_hops(const Engine &, NodeId, Key key) const
    {
        if (members_.empty())
            return {};
        return {successor_of_key(key)};
    }

    std::optional<NodeId> Dummy::owner_of(const Engine &, Key key) const
    {
        if (members_.empty())
            return std::nullopt;
        return successor_of_key(key);
    }

    RoutingTable Dummy::routing_table(const Engine &, NodeId node) const
    {
        RoutingTable t;
        t.capacity = 1;
        if (members_.contains(node))
            t.add(0, directory_, node);
        return t;
    }
} // namespace dpsim

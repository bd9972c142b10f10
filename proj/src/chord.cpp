#include "dpsim/chord.hpp"

namespace dpsim
{
    Chord::Chord(unsigned key_bits) : Protocol(key_bits) {}

    bool Chord::in_interval(Key key, Key a, Key b)
    {
        if (a < b)
            return key > a && key <= b;
        return key > a || key <= b; // wraps (a == b covers the whole ring)
    }

    NodeId Chord::successor_of_key(Key key) const
    {
        auto it = ring_.lower_bound(NodeId{key});
        return it == ring_.end() ? *ring_.begin() : *it;
    }

    NodeId Chord::successor(NodeId n) const
    {
        auto it = ring_.upper_bound(n);
        return it == ring_.end() ? *ring_.begin() : *it;
    }

    NodeId Chord::predecessor(NodeId n) const
    {
        auto it = ring_.lower_bound(n);
        return it == ring_.begin() ? *ring_.rbegin() : *std::prev(it);
    }

    NodeId Chord::finger(NodeId n, unsigned i) const
    {
        return successor_of_key((n.value + (Key{1} << i)) & (key_limit() - 1));
    }

    void Chord::bootstrap(Engine &, NodeId first)
    {
        ring_.clear();
        ring_.insert(first);
    }

    Key Chord::join_target(const Engine &, NodeId joiner, NodeId) const { return joiner.value; }

    void Chord::hand_over(Engine &engine, NodeId from, NodeId to, Key after, Key upto)
    {
        // keys in (after, upto] on the ring
        if (after < upto)
            engine.move_keys(from, to, after + 1, upto + 1);
        else
        {
            engine.move_keys(from, to, after + 1, key_limit());
            engine.move_keys(from, to, 0, upto + 1);
        }
    }

    std::vector<Maintenance> Chord::commit_join(Engine &engine, NodeId joiner, NodeId)
    {
        if (ring_.contains(joiner))
            throw DuplicateId("node " + to_string(joiner) + " already on the ring");
        ring_.insert(joiner);
        const NodeId pred = predecessor(joiner);
        const NodeId succ = successor(joiner);
        if (succ != joiner)
            hand_over(engine, succ, joiner, pred.value, joiner.value);

        // Stabilization: the new node tells its neighbours and every node whose finger now points to it.
        std::set<NodeId> affected;
        if (pred != joiner)
            affected.insert(pred);
        if (succ != joiner)
            affected.insert(succ);
        const Key mask = key_limit() - 1;
        for (unsigned i = 0; i < key_bits(); ++i)
        {
            // members p with p + 2^i in (pred, joiner]
            const Key span = (joiner.value - pred.value) & mask;
            if (span == 0)
                break;
            const Key first = (pred.value + 1 - (Key{1} << i)) & mask;
            auto it = ring_.lower_bound(NodeId{first});
            for (Key walked = 0; walked < ring_.size(); ++walked)
            {
                if (it == ring_.end())
                    it = ring_.begin();
                if (((it->value - first) & mask) >= span)
                    break;
                if (*it != joiner)
                    affected.insert(*it);
                ++it;
            }
        }
        return {Maintenance{joiner, {affected.begin(), affected.end()}}};
    }

    DeparturePlan Chord::plan_departure(const Engine &, NodeId leaving) const
    {
        DeparturePlan plan;
        plan.leaving = leaving;
        plan.notify = leaving;
        if (ring_.size() < 2)
            return plan;
        const NodeId succ = successor(leaving);
        plan.substitute = succ;
        plan.route = {leaving, succ};
        plan.notify = predecessor(leaving);
        return plan;
    }

    std::vector<Maintenance> Chord::commit_departure(Engine &engine, const DeparturePlan &plan)
    {
        if (!plan.substitute)
        {
            // last member leaves
            ring_.erase(plan.leaving);
            engine.set_joined(plan.leaving, false);
            return {};
        }
        if (!plan.succeeds)
            return {}; // stays on the ring as an orphan; its keys are unreachable
        const NodeId pred = predecessor(plan.leaving);
        hand_over(engine, plan.leaving, *plan.substitute, pred.value, plan.leaving.value);
        ring_.erase(plan.leaving);
        engine.set_joined(plan.leaving, false);
        if (pred == *plan.substitute)
            return {};
        return {Maintenance{*plan.substitute, {pred}}};
    }

    bool Chord::owns(const Engine &, NodeId node, Key key) const
    {
        if (ring_.size() == 1)
            return ring_.contains(node);
        return in_interval(key, predecessor(node).value, node.value);
    }

    std::vector<NodeId> Chord::next_hops(const Engine &, NodeId at, Key key) const
    {
        const NodeId succ = successor(at);
        if (in_interval(key, at.value, succ.value))
            return {succ};
        std::vector<NodeId> out;
        for (unsigned i = key_bits(); i-- > 0;)
        {
            const NodeId f = finger(at, i);
            // A finger sitting exactly on the key is its owner: go straight there.
            if (f != at && in_interval(f.value, at.value, key) && (out.empty() || out.back() != f))
                out.push_back(f);
        }
        if (out.empty() || out.back() != succ)
            out.push_back(succ);
        return out;
    }

    std::optional<NodeId> Chord::owner_of(const Engine &, Key key) const
    {
        if (ring_.empty())
            return std::nullopt;
        return successor_of_key(key);
    }

    RoutingTable Chord::routing_table(const Engine &, NodeId node) const
    {
        RoutingTable t;
        t.capacity = key_bits() + 1;
        if (!ring_.contains(node))
            return t;
        for (unsigned i = 0; i < key_bits(); ++i)
            t.add(static_cast<int>(i), finger(node, i), node);
        t.add(static_cast<int>(key_bits()), predecessor(node), node);
        return t;
    }
} // namespace dpsim

#include "dpsim/baton.hpp"

#include <algorithm>

namespace dpsim
{
    BatonStar::BatonStar(unsigned key_bits, unsigned fanout) : Protocol(key_bits), m_(fanout), half_(fanout / 2)
    {
        if (fanout < 2 || fanout > 10)
            throw InvalidParams("baton_star fanout must be in [2, 10], got " + std::to_string(fanout));
        // Largest depth D with (m+1)^(D) still representable below 2^127.
        const Order limit = Order{1} << 127;
        Order p = 1;
        max_depth_ = 0;
        while (p <= limit / (m_ + 1))
        {
            p *= m_ + 1;
            ++max_depth_;
        }
    }

    // ---------------------------------------------------------------------------------- geometry

    unsigned BatonStar::level_of(Slot s) const
    {
        unsigned level = 0;
        while (s > 0)
        {
            s = parent(s);
            ++level;
        }
        return level;
    }

    BatonStar::Slot BatonStar::level_first(unsigned level) const
    {
        Slot first = 0, width = 1;
        for (unsigned l = 0; l < level; ++l)
        {
            first += width;
            width *= m_;
        }
        return first;
    }

    std::uint64_t BatonStar::level_width(unsigned level) const
    {
        std::uint64_t w = 1;
        for (unsigned l = 0; l < level; ++l)
            w *= m_;
        return w;
    }

    BatonStar::Order BatonStar::order_key(Slot s) const
    {
        unsigned digits[128];
        unsigned depth = 0;
        for (Slot x = s; x > 0; x = parent(x))
        {
            if (depth + 1 >= max_depth_)
                throw InvalidParams("tree deeper than the in-order encoding supports");
            digits[depth++] = static_cast<unsigned>((x - 1) % m_);
        }
        std::reverse(digits, digits + depth);
        Order key = 0;
        for (unsigned k = 0; k < max_depth_; ++k)
        {
            unsigned d = 0;
            if (k < depth)
                d = digits[k] < half_ ? digits[k] : digits[k] + 1;
            else if (k == depth)
                d = half_;
            key = key * (m_ + 1) + d;
        }
        return key;
    }

    // --------------------------------------------------------------------------------- lookups

    std::optional<BatonStar::Slot> BatonStar::slot_of(NodeId node) const
    {
        auto it = nodes_.find(node);
        if (it == nodes_.end())
            return std::nullopt;
        return it->second.slot;
    }

    std::optional<NodeId> BatonStar::at_slot(Slot s) const { return occupant(s); }

    std::optional<NodeId> BatonStar::occupant(Slot s) const
    {
        auto it = slots_.find(s);
        if (it == slots_.end())
            return std::nullopt;
        return it->second;
    }

    unsigned BatonStar::height() const { return per_level_.empty() ? 0 : per_level_.rbegin()->first; }

    std::pair<Key, Key> BatonStar::range_of(NodeId node) const
    {
        auto it = nodes_.find(node);
        if (it == nodes_.end())
            throw UnknownNode("node " + to_string(node) + " is not in the tree");
        return {it->second.lo, it->second.hi};
    }

    BatonStar::Slot BatonStar::join_slot(NodeId) const { return free_.empty() ? 0 : *free_.begin(); }

    void BatonStar::add_free(Slot s) { free_.insert(s); }

    void BatonStar::remove_free(Slot s) { free_.erase(s); }

    std::vector<NodeId> BatonStar::in_order() const
    {
        std::vector<NodeId> out;
        out.reserve(order_.size());
        for (const auto &[_, id] : order_)
            out.push_back(id);
        return out;
    }

    std::optional<NodeId> BatonStar::in_order_prev(NodeId node) const
    {
        auto it = order_.find(nodes_.at(node).order);
        if (it == order_.begin())
            return std::nullopt;
        return std::prev(it)->second;
    }

    std::optional<NodeId> BatonStar::in_order_next(NodeId node) const
    {
        auto it = std::next(order_.find(nodes_.at(node).order));
        if (it == order_.end())
            return std::nullopt;
        return it->second;
    }

    bool BatonStar::has_children(Slot s) const
    {
        for (unsigned c = 0; c < m_; ++c)
            if (slots_.contains(child(s, c)))
                return true;
        return false;
    }

    Key BatonStar::span_lo(Slot s) const
    {
        for (;;)
        {
            bool moved = false;
            for (unsigned c = 0; c < half_ && !moved; ++c)
                if (slots_.contains(child(s, c)))
                {
                    s = child(s, c);
                    moved = true;
                }
            if (!moved)
                return nodes_.at(slots_.at(s)).lo;
        }
    }

    Key BatonStar::span_hi(Slot s) const
    {
        for (;;)
        {
            bool moved = false;
            for (unsigned c = m_; c-- > half_ && !moved;)
                if (slots_.contains(child(s, c)))
                {
                    s = child(s, c);
                    moved = true;
                }
            if (!moved)
                return nodes_.at(slots_.at(s)).hi;
        }
    }

    bool BatonStar::tables_full(Slot s, bool right) const
    {
        const unsigned level = level_of(s);
        const Slot first = level_first(level);
        const std::uint64_t width = level_width(level);
        const std::uint64_t idx = s - first;
        for (std::uint64_t base = 1; base < width; base *= m_)
            for (unsigned j = 1; j < m_; ++j)
            {
                const std::uint64_t d = j * base;
                if (right && idx + d < width && !slots_.contains(first + idx + d))
                    return false;
                if (!right && d <= idx && !slots_.contains(first + idx - d))
                    return false;
            }
        return true;
    }

    std::vector<NodeId> BatonStar::sideways(Slot s, bool right) const
    {
        std::vector<NodeId> out;
        const unsigned level = level_of(s);
        const Slot first = level_first(level);
        const std::uint64_t width = level_width(level);
        const std::uint64_t idx = s - first;
        for (std::uint64_t base = 1; base < width; base *= m_)
        {
            for (unsigned j = 1; j < m_; ++j)
            {
                const std::uint64_t d = j * base;
                if (right ? idx + d < width : d <= idx)
                    if (auto o = occupant(first + (right ? idx + d : idx - d)))
                        out.push_back(*o);
            }
        }
        return out;
    }
} // namespace dpsim

namespace dpsim
{
    // -------------------------------------------------------------------------------- mutation

    void BatonStar::place(NodeId node, Slot s, Key lo, Key hi)
    {
        const Order order = order_key(s);
        nodes_[node] = Info{s, lo, hi, order};
        slots_[s] = node;
        order_[order] = node;
        by_lo_[lo] = node;
        remove_free(s);
        for (unsigned c = 0; c < m_; ++c)
            if (!slots_.contains(child(s, c)))
                add_free(child(s, c));
        ++per_level_[level_of(s)];
    }

    void BatonStar::vacate(NodeId node)
    {
        const Info info = nodes_.at(node);
        slots_.erase(info.slot);
        order_.erase(info.order);
        if (auto it = by_lo_.find(info.lo); it != by_lo_.end() && it->second == node)
            by_lo_.erase(it);
        nodes_.erase(node);
        for (unsigned c = 0; c < m_; ++c)
            remove_free(child(info.slot, c));
        if (info.slot == 0 || slots_.contains(parent(info.slot)))
            add_free(info.slot);
        auto lv = per_level_.find(level_of(info.slot));
        if (--lv->second == 0)
            per_level_.erase(lv);
        if (nodes_.empty())
            free_.clear();
    }

    void BatonStar::rebalance(Engine &engine)
    {
        const auto n = static_cast<unsigned __int128>(order_.size());
        const auto limit = static_cast<unsigned __int128>(key_limit());
        by_lo_.clear();
        unsigned __int128 i = 0;
        for (const auto &[_, id] : order_)
        {
            auto &info = nodes_.at(id);
            info.lo = static_cast<Key>(limit * i / n);
            info.hi = static_cast<Key>(limit * (i + 1) / n);
            by_lo_[info.lo] = id;
            ++i;
        }
        for (const auto &[_, id] : order_)
        {
            if (!engine.has_peer(id) || !engine.is_local(id))
                continue;
            const auto &info = nodes_.at(id);
            std::vector<Key> strays;
            for (const auto &[k, v] : engine.peer(id).store)
                if (k < info.lo || k >= info.hi)
                    strays.push_back(k);
            for (Key k : strays)
                engine.move_keys(id, std::prev(by_lo_.upper_bound(k))->second, k, k + 1);
        }
    }

    void BatonStar::set_range(NodeId node, Key lo, Key hi)
    {
        auto &info = nodes_.at(node);
        if (auto it = by_lo_.find(info.lo); it != by_lo_.end() && it->second == node)
            by_lo_.erase(it);
        info.lo = lo;
        info.hi = hi;
        by_lo_[lo] = node;
    }

    void BatonStar::bootstrap(Engine &, NodeId first)
    {
        nodes_.clear();
        slots_.clear();
        order_.clear();
        by_lo_.clear();
        free_.clear();
        per_level_.clear();
        place(first, 0, 0, key_limit());
    }

    Key BatonStar::join_target(const Engine &, NodeId, NodeId contact) const
    {
        if (free_.empty())
            return 0;
        return nodes_.at(slots_.at(parent(join_slot(contact)))).lo;
    }

    std::vector<Maintenance> BatonStar::commit_join(Engine &engine, NodeId joiner, NodeId contact)
    {
        if (nodes_.contains(joiner))
            throw DuplicateId("node " + to_string(joiner) + " already in the tree");
        if (nodes_.empty())
        {
            place(joiner, 0, 0, key_limit());
            return {};
        }
        const Slot s = join_slot(contact);
        const Order order = order_key(s);
        auto it = order_.lower_bound(order);
        std::optional<NodeId> succ, pred;
        if (it != order_.end())
            succ = it->second;
        if (it != order_.begin())
            pred = std::prev(it)->second;
        // The newcomer takes half the range of the widest node within a few in-order positions,
        // and the nodes in between shift over. Always halving an adjacent node would starve the
        // upper levels, whose adjacent nodes change with every new leaf level.
        constexpr int kWindow = 16;
        auto width = [&](NodeId n) { return nodes_.at(n).hi - nodes_.at(n).lo; };
        std::vector<NodeId> left, right; // neighbours walked outward, nearest first
        for (auto l = it; l != order_.begin() && left.size() < kWindow;)
            left.push_back((--l)->second);
        for (auto r = it; r != order_.end() && right.size() < kWindow; ++r)
            right.push_back(r->second);
        bool from_left = false;
        std::size_t depth = 0;
        Key best = 0;
        for (std::size_t d = 0; d < kWindow; ++d)
        {
            if (d < left.size() && width(left[d]) > best)
                best = width(left[d]), from_left = true, depth = d;
            if (d < right.size() && width(right[d]) > best)
                best = width(right[d]), from_left = false, depth = d;
        }
        // Level-order filling crowds one side of the key order; once the window runs dry the
        // whole partition is redrawn evenly.
        const Key need = key_limit() / static_cast<Key>(nodes_.size() + 1);
        if (best < std::max<Key>(2, need / 8))
        {
            if (need < 1)
                throw InvalidParams("key space too small to give node " + to_string(joiner) + " a range");
            place(joiner, s, 0, 0);
            rebalance(engine);
            return {Maintenance{joiner, routing_table(engine, joiner).neighbors()}};
        }
        (from_left ? left : right).resize(depth + 1);
        std::vector<NodeId> chain = from_left ? left : right; // chain.back() is the donor
        const Key give = width(chain.back()) / 2;
        Key lo, hi;
        if (from_left)
        {
            hi = pred ? nodes_.at(*pred).hi : 0;
            lo = hi - give;
            for (NodeId n : chain)
            {
                const auto [nlo, nhi] = range_of(n);
                const Key nlo2 = n == chain.back() ? nlo : nlo - give;
                set_range(n, nlo2, nhi - give);
            }
        }
        else
        {
            lo = succ ? nodes_.at(*succ).lo : key_limit();
            hi = lo + give;
            for (NodeId n : chain)
            {
                const auto [nlo, nhi] = range_of(n);
                const Key nhi2 = n == chain.back() ? nhi : nhi + give;
                set_range(n, nlo + give, nhi2);
            }
        }
        place(joiner, s, lo, hi);
        // Keys follow the shifted boundaries, nearest first.
        NodeId to = joiner;
        for (NodeId n : chain)
        {
            if (from_left)
                engine.move_keys(n, to, nodes_.at(n).hi, nodes_.at(n).hi + give);
            else
                engine.move_keys(n, to, nodes_.at(n).lo - give, nodes_.at(n).lo);
            to = n;
        }
        return {Maintenance{joiner, routing_table(engine, joiner).neighbors()}};
    }

    DeparturePlan BatonStar::plan_departure(const Engine &, NodeId leaving) const
    {
        DeparturePlan plan;
        plan.leaving = leaving;
        const Slot s = nodes_.at(leaving).slot;
        const auto up = s == 0 ? std::nullopt : occupant(parent(s));
        plan.notify = up.value_or(leaving);
        if (!has_children(s))
            return plan; // a leaf leaves without a substitute
        // Internal node: walk down to a leaf through the last occupied child at each level.
        plan.route = {leaving};
        Slot cur = s;
        while (has_children(cur))
        {
            for (unsigned c = m_; c-- > 0;)
                if (slots_.contains(child(cur, c)))
                {
                    cur = child(cur, c);
                    break;
                }
            plan.route.push_back(slots_.at(cur));
        }
        plan.substitute = plan.route.back();
        if (!up)
            plan.notify = *plan.substitute;
        return plan;
    }

    std::vector<Maintenance> BatonStar::commit_departure(Engine &engine, const DeparturePlan &plan)
    {
        const NodeId x = plan.leaving;
        if (!nodes_.contains(x))
            return {};
        // Hands a node's range and keys to its in-order neighbour, then removes it.
        auto absorb = [&](NodeId gone) {
            const auto [lo, hi] = range_of(gone);
            if (auto prev = in_order_prev(gone))
            {
                set_range(*prev, range_of(*prev).first, hi);
                engine.move_keys(gone, *prev, 0, key_limit());
            }
            else if (auto next = in_order_next(gone))
            {
                set_range(*next, lo, range_of(*next).second);
                engine.move_keys(gone, *next, 0, key_limit());
            }
            vacate(gone);
        };

        if (!plan.substitute)
        {
            if (has_children(nodes_.at(x).slot))
                return {}; // gained a child meanwhile; stays as an orphan
            absorb(x);
            engine.set_joined(x, false);
            return {};
        }
        if (!plan.succeeds)
            return {}; // orphaned: keeps its slot, its range is unreachable

        const NodeId sub = *plan.substitute;
        absorb(sub);
        const Info info = nodes_.at(x);
        vacate(x);
        place(sub, info.slot, info.lo, info.hi);
        engine.move_keys(x, sub, 0, key_limit());
        engine.set_joined(x, false);
        return {Maintenance{sub, routing_table(engine, sub).neighbors()}};
    }

    // --------------------------------------------------------------------------------- routing

    bool BatonStar::owns(const Engine &, NodeId node, Key key) const
    {
        auto it = nodes_.find(node);
        return it != nodes_.end() && it->second.lo <= key && key < it->second.hi;
    }

    std::optional<NodeId> BatonStar::owner_of(const Engine &, Key key) const
    {
        auto it = by_lo_.upper_bound(key);
        if (it == by_lo_.begin())
            return std::nullopt;
        return std::prev(it)->second;
    }

    std::optional<KeyRange> BatonStar::owned_range(const Engine &, NodeId node) const
    {
        auto it = nodes_.find(node);
        if (it == nodes_.end())
            return std::nullopt;
        return KeyRange{it->second.lo, it->second.hi - 1};
    }

    std::optional<NodeId> BatonStar::range_next(const Engine &, NodeId node) const
    {
        if (!nodes_.contains(node))
            return std::nullopt;
        return in_order_next(node);
    }

    std::vector<NodeId> BatonStar::next_hops(const Engine &engine, NodeId at, Key key) const
    {
        // Greedy over the whole table. A candidate either has a subtree containing the key
        // (closer to the owner the deeper it is), or lies on the key's side with a smaller gap
        // between its subtree and the key. Equal gaps only count when the candidate sits higher
        // up, so every hop strictly lowers (gap, level) and routes cannot loop.
        struct Cand
        {
            int cls;        // 0 owns the key, 1 subtree contains it, 2 approaches it
            Key gap;        // distance from subtree edge to key (class 2)
            unsigned level;
            NodeId id;
        };
        auto it = nodes_.find(at);
        if (it == nodes_.end())
            return {};
        auto gap_of = [&](Slot s, bool &contains) {
            const Key a = span_lo(s), b = span_hi(s);
            contains = a <= key && key < b;
            return contains ? Key{0} : (key >= b ? key - b + 1 : a - key);
        };
        bool here_contains = false;
        const Key here_gap = gap_of(it->second.slot, here_contains);
        const unsigned here_level = level_of(it->second.slot);

        const bool heading_right = key >= it->second.hi;
        bool overshoot = false; // some neighbour lies past the key
        std::vector<Cand> cands;
        for (auto n : routing_table(engine, at).neighbors())
        {
            const Info &e = nodes_.at(n);
            const unsigned level = level_of(e.slot);
            if (e.lo <= key && key < e.hi)
            {
                cands.push_back({0, 0, level, n});
                continue;
            }
            bool contains = false;
            const Key gap = gap_of(e.slot, contains);
            if (!contains && (heading_right ? span_lo(e.slot) > key : span_hi(e.slot) <= key))
                overshoot = true;
            if (contains)
            {
                if (!here_contains || level > here_level)
                    cands.push_back({1, 0, level, n});
            }
            else if (!here_contains && (gap < here_gap || (gap == here_gap && level < here_level)))
                cands.push_back({2, gap, level, n});
        }
        std::sort(cands.begin(), cands.end(), [](const Cand &a, const Cand &b) {
            if (a.cls != b.cls)
                return a.cls < b.cls;
            if (a.cls == 1 && a.level != b.level)
                return a.level > b.level;
            if (a.gap != b.gap)
                return a.gap < b.gap;
            if (a.level != b.level)
                return a.level < b.level;
            return a.id < b.id;
        });
        std::vector<NodeId> out;
        out.reserve(cands.size() + 1);
        // When nothing on this level reaches past the key, the level is too sparse around it;
        // continue from the parent unless a neighbour already covers the key.
        const Slot s = it->second.slot;
        if (s != 0 && (cands.empty() || cands.front().cls == 2) && !overshoot && !tables_full(s, heading_right))
            if (auto up = occupant(parent(s)))
                out.push_back(*up);
        for (const auto &c : cands)
            if (out.empty() || c.id != out.front())
                out.push_back(c.id);
        return out;
    }

    // Every table entry, nearest subtree to the key first.
    std::vector<NodeId> BatonStar::detour_hops(const Engine &engine, NodeId at, Key key) const
    {
        std::vector<std::pair<Key, NodeId>> ranked;
        for (auto n : routing_table(engine, at).neighbors())
        {
            const Slot s = nodes_.at(n).slot;
            const Key a = span_lo(s), b = span_hi(s);
            ranked.emplace_back(a <= key && key < b ? Key{0} : (key >= b ? key - b + 1 : a - key), n);
        }
        std::sort(ranked.begin(), ranked.end());
        std::vector<NodeId> out;
        for (const auto &[_, n] : ranked)
            if (out.empty() || out.back() != n)
                out.push_back(n);
        return out;
    }

    RoutingTable BatonStar::routing_table(const Engine &, NodeId node) const
    {
        RoutingTable t;
        auto it = nodes_.find(node);
        if (it == nodes_.end())
            return t;
        const Slot s = it->second.slot;
        const unsigned level = level_of(s);
        t.capacity = 3 + m_ + 2 * (m_ - 1) * level;
        if (s != 0)
            if (auto p = occupant(parent(s)))
                t.add(0, *p, node);
        for (unsigned c = 0; c < m_; ++c)
            if (auto ch = occupant(child(s, c)))
                t.add(1 + static_cast<int>(c), *ch, node);
        if (auto l = in_order_prev(node))
            t.add(static_cast<int>(m_) + 1, *l, node);
        if (auto r = in_order_next(node))
            t.add(static_cast<int>(m_) + 2, *r, node);
        int slot = static_cast<int>(m_) + 3;
        for (bool right : {false, true})
            for (auto n : sideways(s, right))
                t.add(slot++, n, node);
        return t;
    }
} // namespace dpsim

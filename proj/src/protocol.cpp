#include "dpsim/protocol.hpp"

#include <algorithm>

namespace dpsim
{
    bool RoutingTable::contains(NodeId id) const
    {
        return std::any_of(entries.begin(), entries.end(), [&](const RoutingEntry &e) { return e.neighbor == id; });
    }

    std::vector<NodeId> RoutingTable::neighbors() const
    {
        std::vector<NodeId> out;
        out.reserve(entries.size());
        for (const auto &e : entries)
            out.push_back(e.neighbor);
        return out;
    }

    void RoutingTable::add(int slot, NodeId id, NodeId self)
    {
        if (id != self && !contains(id))
            entries.push_back({slot, id});
    }

    bool Protocol::accepts(const Engine &engine, NodeId at, const Message &msg) const
    {
        return owns(engine, at, *msg.data.key);
    }

    NodeId Protocol::join_entry(const Engine &, NodeId, NodeId contact) const { return contact; }

    std::optional<KeyRange> Protocol::owned_range(const Engine &, NodeId) const
    {
        throw UnsupportedOperation(std::string(name()) + " does not expose owned ranges");
    }

    std::optional<NodeId> Protocol::range_next(const Engine &, NodeId) const
    {
        throw UnsupportedOperation(std::string(name()) + " does not support range queries");
    }

    // ------------------------------------------------------------------------------------- starts

    void Protocol::start_join(Engine &engine, NodeId joiner, NodeId contact)
    {
        auto m = make_message(MessageKind::JOIN_REQ, joiner, Data{join_target(engine, joiner, contact), {}, {}});
        engine.send(forwarded(m, joiner, join_entry(engine, joiner, contact)));
    }

    void Protocol::start_operation(Engine &engine, const OperationSpec &op)
    {
        Data d;
        d.key = op.key;
        if (op.kind == MessageKind::INSERT)
            d.value = op.value;
        if (op.kind == MessageKind::RANGE)
        {
            if (op.hi < op.key)
                throw InvalidParams("range upper bound below lower bound");
            d.range = KeyRange{op.key, op.hi};
        }
        auto &r = engine.op_result(op.op_id);
        r.op_id = op.op_id;
        r.kind = op.kind;
        r.origin = op.origin;
        handle_routed(engine, op.origin, make_message(op.kind, op.origin, std::move(d), op.op_id));
    }

    void Protocol::start_substitution(Engine &engine, const DeparturePlan &plan)
    {
        if (!plan.substitute)
        {
            engine.stats().record("replacement_hops", 0);
            return;
        }
        ++engine.subs_started_;
        auto m = make_message(MessageKind::REPLACEMENT_REQ, plan.leaving);
        if (!engine.send(forwarded(m, plan.leaving, plan.route.at(1))).ok())
        {
            engine.stats().record("substitute_not_found", 1);
            engine.note_substitution_resolved();
        }
    }

    // ----------------------------------------------------------------------------------- handlers

    void Protocol::on_message(Engine &engine, const Message &msg)
    {
        const NodeId at = msg.receiver;
        switch (msg.kind)
        {
        case MessageKind::SEARCH:
        case MessageKind::INSERT:
        case MessageKind::DELETE:
        case MessageKind::JOIN_REQ:
            handle_routed(engine, at, msg);
            break;
        case MessageKind::RANGE:
            if (msg.data.key)
                handle_routed(engine, at, msg);
            else
                range_step(engine, at, msg);
            break;
        case MessageKind::REPLACEMENT_REQ:
            handle_replacement(engine, at, msg);
            break;
        case MessageKind::QUERYFAILED_RES: {
            auto &r = engine.op_result(msg.op_id);
            r.op_id = msg.op_id;
            r.origin = at;
            r.status = OpStatus::Failed;
            engine.stats().record("failed_ops", 1);
            break;
        }
        default:
            break;
        }
    }

    void Protocol::on_dropped(Engine &engine, const Message &msg)
    {
        if (msg.kind == MessageKind::REPLACEMENT_REQ)
        {
            engine.stats().record("substitute_not_found", 1);
            engine.note_substitution_resolved();
            return;
        }
        // The sender notices the loss and reports it to the origin.
        if (is_query_kind(msg.kind) && is_live(engine.state(msg.sender)))
            fail(engine, msg.sender, msg);
    }

    void Protocol::handle_routed(Engine &engine, NodeId at, const Message &msg)
    {
        if (!accepts(engine, at, msg))
        {
            forward(engine, at, msg, *msg.data.key);
            return;
        }
        if (msg.kind == MessageKind::RANGE)
        {
            Message walk = msg;
            walk.data.key.reset();
            range_step(engine, at, walk);
            return;
        }
        complete(engine, at, msg);
    }

    void Protocol::forward(Engine &engine, NodeId at, const Message &msg, Key key)
    {
        if (msg.hops < kMaxHops)
        {
            // Revisits only happen after a detour; skipping them keeps detours from bouncing back.
            auto visited = [&](NodeId n) {
                return n != at && std::find(msg.path.begin(), msg.path.end(), n) != msg.path.end();
            };
            bool owner_down = false;
            for (auto next : next_hops(engine, at, key))
            {
                if (visited(next))
                    continue;
                if (engine.send(forwarded(msg, at, next)).ok())
                    return;
                owner_down = owner_down || owns(engine, next, key);
            }
            if (!owner_down)
                for (auto next : detour_hops(engine, at, key))
                    if (!visited(next) && engine.send(forwarded(msg, at, next)).ok())
                        return;
        }
        fail(engine, at, msg);
    }

    std::vector<NodeId> Protocol::detour_hops(const Engine &engine, NodeId at, Key) const
    {
        return routing_table(engine, at).neighbors();
    }

    void Protocol::fail(Engine &engine, NodeId at, const Message &msg)
    {
        if (msg.kind == MessageKind::JOIN_REQ)
        {
            engine.stats().record("join_failed", 1);
            return;
        }
        Data d;
        d.key = msg.data.key;
        auto reply = make_message(MessageKind::QUERYFAILED_RES, at, std::move(d), msg.op_id);
        engine.send(forwarded(reply, at, msg.path.front()));
    }

    void Protocol::complete(Engine &engine, NodeId at, const Message &msg)
    {
        const Key key = *msg.data.key;
        if (msg.kind == MessageKind::JOIN_REQ)
        {
            engine.stats().record("join_hops", msg.hops);
            engine.send(forwarded(make_message(MessageKind::JOIN_RESP, at), at, msg.path.front()));
            return;
        }
        auto &store = engine.peer(at).store;
        auto &r = engine.op_result(msg.op_id);
        r.op_id = msg.op_id;
        r.kind = msg.kind;
        r.origin = msg.path.front();
        r.owner = at;
        r.hops = msg.hops;
        r.path = msg.path;
        r.status = OpStatus::Ok;
        switch (msg.kind)
        {
        case MessageKind::SEARCH: {
            auto it = store.find(key);
            if (it != store.end())
                r.value = it->second;
            engine.stats().record("lookup_hops", msg.hops);
            break;
        }
        case MessageKind::INSERT:
            store[key] = msg.data.value.value_or(std::vector<std::uint8_t>{});
            engine.stats().record("insert_hops", msg.hops);
            break;
        case MessageKind::DELETE:
            if (store.erase(key) == 0)
                r.status = OpStatus::NotFound;
            engine.stats().record("delete_hops", msg.hops);
            break;
        default:
            break;
        }
    }

    void Protocol::range_step(Engine &engine, NodeId at, const Message &msg)
    {
        const KeyRange want = *msg.data.range;
        const auto own = owned_range(engine, at);
        auto &r = engine.op_result(msg.op_id);
        r.op_id = msg.op_id;
        r.kind = MessageKind::RANGE;
        r.origin = msg.path.front();
        r.visited_owners.push_back(at);
        if (own)
        {
            const auto &store = engine.peer(at).store;
            const Key lo = std::max(want.lo, own->lo);
            const Key hi = std::min(want.hi, own->hi);
            if (lo <= hi)
                for (auto it = store.lower_bound(lo); it != store.end() && it->first <= hi; ++it)
                    r.matches.emplace_back(*it);
        }
        std::optional<NodeId> next;
        if (own && own->hi < want.hi)
            next = range_next(engine, at);
        if (!next)
        {
            r.status = OpStatus::Ok;
            r.owner = at;
            r.hops = msg.hops;
            r.path = msg.path;
            engine.stats().record("range_hops", msg.hops);
            return;
        }
        if (!engine.send(forwarded(msg, at, *next)).ok())
            fail(engine, at, msg);
    }

    void Protocol::handle_replacement(Engine &engine, NodeId at, const Message &msg)
    {
        const auto &pending = engine.pending_departures();
        auto it = pending.find(msg.path.front());
        if (it == pending.end())
            return;
        const DeparturePlan &plan = it->second;
        if (plan.substitute && at == *plan.substitute)
        {
            if (plan.succeeds && engine.set_state(at, PeerState::CANDIDATE_SUBSTITUTE))
            {
                engine.stats().record("replacement_hops", msg.hops);
                engine.send(forwarded(make_message(MessageKind::REPLACEMENT_RESP, at), at, plan.notify));
            }
            else
                engine.stats().record("substitute_not_found", 1);
            engine.note_substitution_resolved();
            return;
        }
        auto pos = std::find(plan.route.begin(), plan.route.end(), at);
        if (pos == plan.route.end() || pos + 1 == plan.route.end() || !engine.send(forwarded(msg, at, *(pos + 1))).ok())
        {
            engine.stats().record("substitute_not_found", 1);
            engine.note_substitution_resolved();
        }
    }
} // namespace dpsim

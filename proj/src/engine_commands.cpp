// Command application: the replicated part of the engine.

#include "dpsim/engine.hpp"
#include "dpsim/protocol.hpp"

#include <set>

namespace dpsim
{
    namespace
    {
        template <class... Ts>
        struct overloaded : Ts...
        {
            using Ts::operator()...;
        };
        template <class... Ts>
        overloaded(Ts...) -> overloaded<Ts...>;
    } // namespace

    void Engine::apply(const Command &command)
    {
        std::visit(overloaded{
                       [&](const cmd::Bootstrap &c) {
                           if (!has_peer(c.node))
                               add_peer(c.node);
                           protocol_->bootstrap(*this, c.node);
                           set_joined(c.node, true);
                       },
                       [&](const cmd::Join &c) { apply_join(c); },
                       [&](const cmd::CommitJoin &c) {
                           auto it = pending_joins_.find(c.node);
                           if (it == pending_joins_.end())
                               throw InvalidPlan("no pending join for node " + to_string(c.node));
                           const NodeId contact = it->second;
                           pending_joins_.erase(it);
                           auto notes = protocol_->commit_join(*this, c.node, contact);
                           set_joined(c.node, true);
                           send_maintenance(notes, true);
                       },
                       [&](const cmd::Operation &c) { apply_operation(c.op); },
                       [&](const cmd::Fail &c) { apply_fail(c); },
                       [&](const cmd::Depart &c) { apply_depart(c); },
                       [&](const cmd::CommitDepartures &c) { apply_commit_departures(c); },
                       [&](const cmd::ResetLoad &) {
                           for (auto &p : peers_)
                               p.received_queries = 0;
                       },
                       [&](const cmd::RecordTables &) {
                           for (auto id : working_members())
                               if (is_local(id))
                                   stats_.record("routing_table_length",
                                                 static_cast<double>(protocol_->routing_table(*this, id).size()));
                       },
                       [&](const cmd::RecordLoad &) {
                           for (const auto &p : peers_)
                               if (p.joined && is_live(p.state) && is_local(p.id) && p.received_queries > 0)
                                   stats_.record("msgs_per_node", p.received_queries);
                       },
                   },
                   command);
    }

    void Engine::send_maintenance(const std::vector<Maintenance> &notes, bool record)
    {
        for (const auto &n : notes)
        {
            if (!has_peer(n.from) || !is_live(state(n.from)) || !is_local(n.from))
                continue;
            broadcast(n.from, MessageKind::MAINTENANCE, {}, n.to);
            if (record)
                stats_.record("rt_update_msgs", static_cast<double>(n.to.size()));
        }
    }

    void Engine::apply_join(const cmd::Join &c)
    {
        if (!has_peer(c.contact) || !peer(c.contact).joined)
            throw UnknownNode("join contact " + to_string(c.contact) + " is not a member");
        add_peer(c.node);
        pending_joins_[c.node] = c.contact;
        if (is_local(c.node))
            protocol_->start_join(*this, c.node, c.contact);
    }

    void Engine::apply_operation(const OperationSpec &op)
    {
        if (!has_peer(op.origin))
            throw UnknownNode("operation origin " + to_string(op.origin) + " does not exist");
        const auto &p = peer(op.origin);
        if (!p.joined || !is_live(p.state))
            throw OriginDown("operation origin " + to_string(op.origin) + " is not working");
        if (op.kind == MessageKind::RANGE && !protocol_->supports_range())
            throw UnsupportedOperation(std::string(protocol_->name()) + " does not support range queries");
        if (is_local(op.origin))
            protocol_->start_operation(*this, op);
    }

    void Engine::apply_fail(const cmd::Fail &c)
    {
        for (auto id : c.nodes)
            set_state(id, PeerState::FAILED);
    }

    void Engine::apply_depart(const cmd::Depart &c)
    {
        // Plans see the structure before anybody in the batch has left.
        std::vector<DeparturePlan> plans;
        plans.reserve(c.nodes.size());
        for (auto id : c.nodes)
        {
            if (!peer(id).joined || !is_live(state(id)))
                throw InvalidPlan("node " + to_string(id) + " cannot depart: not a working member");
            plans.push_back(protocol_->plan_departure(*this, id));
        }
        for (auto id : c.nodes)
            set_state(id, PeerState::VOLUNTARILY_LEFT);

        std::set<NodeId> claimed;
        for (const auto &[_, plan] : pending_departures_)
            if (plan.substitute)
                claimed.insert(*plan.substitute);
        for (auto &plan : plans)
        {
            plan.succeeds = false;
            if (plan.substitute)
            {
                bool route_live = true;
                for (std::size_t i = 1; i < plan.route.size(); ++i)
                    route_live = route_live && is_live(state(plan.route[i]));
                plan.succeeds = route_live && state(*plan.substitute) == PeerState::WORKING &&
                                claimed.insert(*plan.substitute).second;
            }
            pending_departures_[plan.leaving] = plan;
            if (is_local(plan.leaving))
                protocol_->start_substitution(*this, plan);
        }
    }

    void Engine::apply_commit_departures(const cmd::CommitDepartures &c)
    {
        for (auto id : c.nodes)
        {
            auto it = pending_departures_.find(id);
            if (it == pending_departures_.end())
                throw InvalidPlan("no pending departure for node " + to_string(id));
            auto plan = it->second;
            pending_departures_.erase(it);
            if (plan.substitute && !is_live(state(*plan.substitute)))
                plan.succeeds = false;
            auto notes = protocol_->commit_departure(*this, plan);
            if (plan.succeeds && state(*plan.substitute) == PeerState::CANDIDATE_SUBSTITUTE)
                set_state(*plan.substitute, PeerState::WORKING);
            send_maintenance(notes, false);
        }
    }
} // namespace dpsim

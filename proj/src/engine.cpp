#include "dpsim/engine.hpp"

#include "dpsim/protocol.hpp"

#include <algorithm>
#include <ostream>

namespace dpsim
{
    void NetworkModel::validate() const
    {
        if (base_latency == 0)
            throw InvalidParams("base_latency must be at least 1 tick");
        for (const auto &[id, step] : per_node_step)
            if (step == 0)
                throw InvalidParams("per-node step of node " + to_string(id) + " must be at least 1");
        if (!(background_traffic_rate >= 0.0))
            throw InvalidParams("background_traffic_rate must be non-negative");
        if (queue_cap == 0)
            throw InvalidParams("queue_cap must be positive");
    }

    Tick NetworkModel::step_of(NodeId id) const
    {
        auto it = per_node_step.find(id);
        return it == per_node_step.end() ? 1 : it->second;
    }

    std::string format_log_record(const LogRecord &r)
    {
        std::string out = std::to_string(r.tick);
        out += ',';
        out += to_string(r.kind);
        out += ',' + to_string(r.sender) + ',' + to_string(r.receiver) + ',' + std::to_string(r.hops);
        return out;
    }

    Engine::Engine(std::unique_ptr<Protocol> protocol, NetworkModel model)
        : protocol_(std::move(protocol)), model_(std::move(model)),
          background_rng_(derive_seed(model_.seed, 0xB6))
    {
        if (!protocol_)
            throw InvalidParams("engine needs a protocol");
        model_.validate();
    }

    Engine::~Engine() = default;
    Engine::Engine(Engine &&) noexcept = default;
    Engine &Engine::operator=(Engine &&) noexcept = default;

    Peer &Engine::add_peer(NodeId id)
    {
        if (id.value >= protocol_->key_limit())
            throw InvalidParams("node id " + to_string(id) + " outside the key space");
        auto [it, inserted] = index_.try_emplace(id, static_cast<std::uint32_t>(peers_.size()));
        if (!inserted)
            throw DuplicateId("node " + to_string(id) + " already exists");
        peers_.emplace_back().id = id;
        working_dirty_ = true;
        return peers_.back();
    }

    std::uint32_t Engine::index_of(NodeId id) const
    {
        auto it = index_.find(id);
        if (it == index_.end())
            throw UnknownNode("unknown node " + to_string(id));
        return it->second;
    }

    bool Engine::set_state(NodeId id, PeerState to)
    {
        auto &p = peer(id);
        if (!is_legal_transition(p.state, to))
        {
            ++counters_.illegal_transitions;
            return false;
        }
        p.state = to;
        working_dirty_ = true;
        return true;
    }

    void Engine::set_joined(NodeId id, bool joined)
    {
        auto &p = peer(id);
        if (p.joined == joined)
            return;
        p.joined = joined;
        members_ += joined ? 1 : -1;
        working_dirty_ = true;
    }

    const std::vector<NodeId> &Engine::working_members() const
    {
        if (working_dirty_)
        {
            working_cache_.clear();
            for (const auto &p : peers_)
                if (p.joined && is_live(p.state))
                    working_cache_.push_back(p.id);
            std::sort(working_cache_.begin(), working_cache_.end());
            working_dirty_ = false;
        }
        return working_cache_;
    }

    std::size_t Engine::member_count() const { return members_; }

    // ------------------------------------------------------------------------------------ network

    void Engine::record_log(const Message &m)
    {
        ++counters_.sent;
        ++kind_counts_[static_cast<std::size_t>(m.kind)];
        LogRecord r{now_, m.kind, m.sender, m.receiver, m.hops};
        const std::string line = format_log_record(r) + '\n';
        for (char c : line)
        {
            digest_ ^= static_cast<unsigned char>(c);
            digest_ *= 0x100000001b3ULL;
        }
        if (sink_)
            *sink_ << line;
        if (keep_log_)
            log_.push_back(r);
    }

    SendReceipt Engine::send(Message msg)
    {
        msg.send_time = now_;
        record_log(msg);
        auto it = index_.find(msg.receiver);
        if (it == index_.end())
        {
            ++counters_.undeliverable;
            return {SendStatus::UnknownReceiver, 0};
        }
        if (!is_live(peers_[it->second].state))
        {
            ++counters_.receiver_down;
            return {SendStatus::ReceiverDown, 0};
        }
        const Tick at = now_ + model_.base_latency * model_.step_of(msg.receiver);
        msg.deliver_time = at;
        auto s = index_.find(msg.sender);
        if (s != index_.end())
        {
            auto &out = peers_[s->second].outbox;
            if (out.empty())
                outbox_senders_.push_back(s->second);
            out.push_back(std::move(msg));
            ++outbox_pending_;
        }
        else
            enqueue_network(std::move(msg));
        return {SendStatus::Scheduled, at};
    }

    std::size_t Engine::broadcast(NodeId sender, MessageKind kind, const Data &data, std::span<const NodeId> targets)
    {
        if (kind != MessageKind::BROADCAST && kind != MessageKind::JOIN_REQ && kind != MessageKind::MAINTENANCE)
            throw ForbiddenBroadcastKind(std::string("broadcast of ") + std::string(to_string(kind)) + " is not allowed");
        std::size_t n = 0;
        const auto base = make_message(kind, sender, data);
        for (auto t : targets)
            if (send(forwarded(base, sender, t)).ok())
                ++n;
        return n;
    }

    void Engine::enqueue_network(Message &&m)
    {
        if (!is_local(m.receiver))
        {
            ++counters_.forwarded;
            remote_out_.push_back(std::move(m));
            return;
        }
        ++in_flight_;
        if (m.kind != MessageKind::MAINTENANCE)
            ++in_flight_work_;
        network_[*m.deliver_time].push_back(std::move(m));
    }

    void Engine::flush_outboxes()
    {
        if (outbox_pending_ == 0)
            return;
        auto senders = std::move(outbox_senders_);
        outbox_senders_.clear();
        for (auto idx : senders)
        {
            auto out = std::move(peers_[idx].outbox);
            peers_[idx].outbox.clear();
            for (auto &m : out)
                enqueue_network(std::move(m));
        }
        outbox_pending_ = 0;
    }

    void Engine::inject_remote(Message msg)
    {
        ++counters_.injected;
        if (!msg.deliver_time || *msg.deliver_time <= now_)
            msg.deliver_time = now_ + 1;
        ++in_flight_;
        if (msg.kind != MessageKind::MAINTENANCE)
            ++in_flight_work_;
        network_[*msg.deliver_time].push_back(std::move(msg));
    }

    std::vector<Message> Engine::take_remote()
    {
        flush_outboxes();
        std::vector<Message> out;
        out.swap(remote_out_);
        return out;
    }

    void Engine::inject_background()
    {
        double rate = model_.background_traffic_rate;
        if (rate <= 0.0)
            return;
        const auto &members = working_members();
        auto count = static_cast<std::uint64_t>(rate);
        if (background_rng_.uniform01() < rate - static_cast<double>(count))
            ++count;
        if (members.size() < 2)
            return;
        // Every replica draws the same pairs; only the sender's host emits.
        for (std::uint64_t i = 0; i < count; ++i)
        {
            NodeId a = members[background_rng_.below(members.size())];
            NodeId b = members[background_rng_.below(members.size())];
            if (a == b || !is_local(a))
                continue;
            send(forwarded(make_message(MessageKind::MAINTENANCE, a), a, b));
        }
    }

    void Engine::deliver_due()
    {
        while (!network_.empty() && network_.begin()->first <= now_)
        {
            auto batch = std::move(network_.begin()->second);
            network_.erase(network_.begin());
            for (auto &m : batch)
            {
                --in_flight_;
                if (m.kind != MessageKind::MAINTENANCE)
                    --in_flight_work_;
                const auto idx = index_of(m.receiver);
                auto &p = peers_[idx];
                if (!is_live(p.state))
                {
                    ++counters_.receiver_down;
                    protocol_->on_dropped(*this, m);
                    continue;
                }
                if (p.inbox.empty())
                    receivers_this_tick_.push_back(idx);
                p.inbox.push_back(std::move(m));
                if (p.inbox.size() > model_.queue_cap)
                {
                    p.inbox.erase(p.inbox.begin());
                    ++counters_.undeliverable;
                }
            }
        }
    }

    std::size_t Engine::step()
    {
        flush_outboxes();
        ++now_;
        inject_background();
        deliver_due();
        std::size_t handled = 0;
        auto order = std::move(receivers_this_tick_);
        receivers_this_tick_.clear();
        for (auto idx : order)
        {
            auto inbox = std::move(peers_[idx].inbox);
            peers_[idx].inbox.clear();
            for (const auto &m : inbox)
            {
                ++counters_.delivered;
                ++handled;
                if (is_query_kind(m.kind))
                    ++peers_[idx].received_queries;
                protocol_->on_message(*this, m);
            }
        }
        flush_outboxes();
        return handled;
    }

    bool Engine::quiescent() const noexcept
    {
        if (outbox_pending_ != 0)
            return false;
        // With background traffic on, MAINTENANCE never drains; it carries no follow-up work.
        return model_.background_traffic_rate > 0.0 ? in_flight_work_ == 0 : in_flight_ == 0;
    }

    Tick Engine::run_until_quiescent(Tick max_ticks)
    {
        Tick ticks = 0;
        while (!quiescent())
        {
            if (ticks == max_ticks)
                throw QuiescenceTimeout("messages still in flight after " + std::to_string(max_ticks) + " ticks");
            step();
            ++ticks;
        }
        return ticks;
    }

    void Engine::export_log(std::ostream &out) const
    {
        for (const auto &r : log_)
            out << format_log_record(r) << '\n';
    }

    const OpResult *Engine::find_op(std::uint64_t op_id) const
    {
        auto it = ops_.find(op_id);
        return it == ops_.end() ? nullptr : &it->second;
    }

    void Engine::move_keys(NodeId from, NodeId to, Key lo, Key hi)
    {
        if (hi <= lo || from == to || !is_local(from) || !is_local(to))
            return;
        auto &src = peer(from).store;
        auto &dst = peer(to).store;
        auto first = src.lower_bound(lo);
        auto last = src.lower_bound(hi);
        for (auto it = first; it != last; ++it)
            dst[it->first] = std::move(it->second);
        src.erase(first, last);
    }
} // namespace dpsim

#include "dpsim/wire.hpp"

#include <array>

namespace dpsim
{
    using nlohmann::json;

    std::size_t ShardMap::shard_of(NodeId id) const
    {
        if (id.value >= key_space(key_bits))
            throw UnknownNode("node " + to_string(id) + " lies outside the key space");
        // Ranges are sorted and contiguous.
        std::size_t lo = 0, hi = shards.size();
        while (hi - lo > 1)
        {
            const std::size_t mid = (lo + hi) / 2;
            if (shards[mid].lo <= id.value)
                lo = mid;
            else
                hi = mid;
        }
        return lo;
    }

    ShardMap make_shard_map(unsigned key_bits, const std::vector<std::string> &workers)
    {
        if (workers.empty())
            throw NoWorkers("shard map needs at least one worker");
        if (key_bits < 1 || key_bits > 63)
            throw InvalidParams("key_bits must lie in [1, 63]");
        const Key space = key_space(key_bits);
        const Key width = space / workers.size();
        if (width == 0)
            throw InvalidParams("more workers than ids in the key space");
        ShardMap map;
        map.key_bits = key_bits;
        for (std::size_t i = 0; i < workers.size(); ++i)
        {
            const Key lo = width * i;
            const Key hi = i + 1 == workers.size() ? space : lo + width;
            map.shards.push_back({workers[i], lo, hi});
        }
        return map;
    }

    namespace
    {
        constexpr std::array<std::string_view, 8> kFrameNames{"HELLO",     "ASSIGN",  "APPLY", "TICK",
                                                              "TICK_DONE", "FORWARD", "STATS", "SHUTDOWN"};
    }

    std::string_view to_string(FrameType t) { return kFrameNames[static_cast<std::size_t>(t)]; }

    std::string encode_frame(const Frame &f)
    {
        json j = {{"type", to_string(f.type)}, {"seq", f.seq}, {"payload", f.payload}};
        return j.dump() + '\n';
    }

    Frame decode_frame(std::string_view line)
    {
        auto j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object())
            throw SchemaMismatch("malformed frame");
        Frame f;
        try
        {
            const auto type = j.at("type").get<std::string>();
            auto it = std::find(kFrameNames.begin(), kFrameNames.end(), type);
            if (it == kFrameNames.end())
                throw SchemaMismatch("unknown frame type '" + type + "'");
            f.type = static_cast<FrameType>(it - kFrameNames.begin());
            f.seq = j.at("seq").get<std::uint64_t>();
            f.payload = j.value("payload", json::object());
        }
        catch (const json::exception &e)
        {
            throw SchemaMismatch(std::string("malformed frame: ") + e.what());
        }
        return f;
    }

    json to_json(const ShardStatus &s)
    {
        return {{"now", s.now},
                {"quiescent", s.quiescent},
                {"subs_started", s.subs_started},
                {"subs_resolved", s.subs_resolved}};
    }

    ShardStatus status_from_json(const json &j)
    {
        return {j.at("now").get<Tick>(), j.at("quiescent").get<bool>(), j.at("subs_started").get<std::int64_t>(),
                j.at("subs_resolved").get<std::int64_t>()};
    }

    json to_json(const ShardMap &m)
    {
        json shards = json::array();
        for (const auto &s : m.shards)
            shards.push_back({{"address", s.address}, {"lo", s.lo}, {"hi", s.hi}});
        return {{"key_bits", m.key_bits}, {"shards", shards}};
    }

    ShardMap shard_map_from_json(const json &j)
    {
        ShardMap m;
        m.key_bits = j.at("key_bits").get<unsigned>();
        for (const auto &s : j.at("shards"))
            m.shards.push_back({s.at("address").get<std::string>(), s.at("lo").get<Key>(), s.at("hi").get<Key>()});
        return m;
    }

    json to_json(const MetricSummary &s)
    {
        json hist = json::array();
        for (const auto &[b, f] : s.histogram)
            hist.push_back({b, f});
        return {{"name", s.name},
                {"count", s.count},
                {"min", s.min},
                {"max", s.max},
                {"mean", s.mean},
                {"integral", s.integral},
                {"bucket_width", s.bucket_width},
                {"bucket_origin", s.bucket_origin},
                {"sum", s.total.sum},
                {"comp", s.total.comp},
                {"histogram", hist}};
    }

    MetricSummary summary_from_json(const json &j)
    {
        MetricSummary s;
        s.name = j.at("name").get<std::string>();
        s.count = j.at("count").get<std::uint64_t>();
        s.min = j.at("min").get<double>();
        s.max = j.at("max").get<double>();
        s.mean = j.at("mean").get<double>();
        s.integral = j.at("integral").get<bool>();
        s.bucket_width = j.at("bucket_width").get<double>();
        s.bucket_origin = j.at("bucket_origin").get<double>();
        s.total.sum = j.at("sum").get<double>();
        s.total.comp = j.at("comp").get<double>();
        for (const auto &e : j.at("histogram"))
            s.histogram[e.at(0).get<std::int64_t>()] = e.at(1).get<std::uint64_t>();
        return s;
    }

    namespace
    {
        json ids(const std::vector<NodeId> &v)
        {
            json out = json::array();
            for (auto id : v)
                out.push_back(id.value);
            return out;
        }

        std::vector<NodeId> ids_from(const json &j)
        {
            std::vector<NodeId> out;
            for (const auto &x : j)
                out.emplace_back(x.get<std::uint64_t>());
            return out;
        }

        MessageKind kind_from(const json &j)
        {
            auto k = parse_message_kind(j.get<std::string>());
            if (!k)
                throw SchemaMismatch("unknown message kind '" + j.get<std::string>() + "'");
            return *k;
        }
    } // namespace

    json to_json(const OpResult &r)
    {
        json matches = json::array();
        for (const auto &[k, v] : r.matches)
            matches.push_back({k, v});
        json j = {{"op_id", r.op_id},
                  {"kind", to_string(r.kind)},
                  {"origin", r.origin.value},
                  {"status", static_cast<int>(r.status)},
                  {"owner", r.owner.value},
                  {"hops", r.hops},
                  {"path", ids(r.path)},
                  {"matches", matches},
                  {"visited", ids(r.visited_owners)}};
        if (r.value)
            j["value"] = *r.value;
        return j;
    }

    OpResult op_result_from_json(const json &j)
    {
        OpResult r;
        r.op_id = j.at("op_id").get<std::uint64_t>();
        r.kind = kind_from(j.at("kind"));
        r.origin = NodeId{j.at("origin").get<std::uint64_t>()};
        r.status = static_cast<OpStatus>(j.at("status").get<int>());
        r.owner = NodeId{j.at("owner").get<std::uint64_t>()};
        r.hops = j.at("hops").get<std::uint32_t>();
        r.path = ids_from(j.at("path"));
        for (const auto &m : j.at("matches"))
            r.matches.emplace_back(m.at(0).get<Key>(), m.at(1).get<std::vector<std::uint8_t>>());
        r.visited_owners = ids_from(j.at("visited"));
        if (j.contains("value"))
            r.value = j.at("value").get<std::vector<std::uint8_t>>();
        return r;
    }

    json to_json(const LogRecord &r)
    {
        return json::array({r.tick, to_string(r.kind), r.sender.value, r.receiver.value, r.hops});
    }

    LogRecord log_record_from_json(const json &j)
    {
        return {j.at(0).get<Tick>(), kind_from(j.at(1)), NodeId{j.at(2).get<std::uint64_t>()},
                NodeId{j.at(3).get<std::uint64_t>()}, j.at(4).get<std::uint32_t>()};
    }

    json to_json(const Counters &c)
    {
        return {{"sent", c.sent},         {"delivered", c.delivered}, {"undeliverable", c.undeliverable},
                {"receiver_down", c.receiver_down}, {"forwarded", c.forwarded}, {"injected", c.injected},
                {"illegal_transitions", c.illegal_transitions}};
    }

    Counters counters_from_json(const json &j)
    {
        Counters c;
        c.sent = j.at("sent").get<std::uint64_t>();
        c.delivered = j.at("delivered").get<std::uint64_t>();
        c.undeliverable = j.at("undeliverable").get<std::uint64_t>();
        c.receiver_down = j.at("receiver_down").get<std::uint64_t>();
        c.forwarded = j.at("forwarded").get<std::uint64_t>();
        c.injected = j.at("injected").get<std::uint64_t>();
        c.illegal_transitions = j.at("illegal_transitions").get<std::uint64_t>();
        return c;
    }

    json to_json(const NetworkModel &m)
    {
        json steps = json::array();
        for (const auto &[id, s] : m.per_node_step)
            steps.push_back({id.value, s});
        return {{"base_latency", m.base_latency},
                {"per_node_step", steps},
                {"background_traffic_rate", m.background_traffic_rate},
                {"seed", m.seed},
                {"queue_cap", m.queue_cap}};
    }

    NetworkModel network_model_from_json(const json &j)
    {
        NetworkModel m;
        m.base_latency = j.at("base_latency").get<Tick>();
        for (const auto &s : j.at("per_node_step"))
            m.per_node_step[NodeId{s.at(0).get<std::uint64_t>()}] = s.at(1).get<Tick>();
        m.background_traffic_rate = j.at("background_traffic_rate").get<double>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.queue_cap = j.at("queue_cap").get<std::size_t>();
        return m;
    }
} // namespace dpsim

#include "dpsim/command.hpp"

namespace dpsim
{
    using nlohmann::json;

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
                throw IoFailure("unknown message kind '" + j.get<std::string>() + "'");
            return *k;
        }

        template <class... Ts>
        struct overloaded : Ts...
        {
            using Ts::operator()...;
        };
        template <class... Ts>
        overloaded(Ts...) -> overloaded<Ts...>;
    } // namespace

    json to_json(const Command &c)
    {
        return std::visit(
            overloaded{
                [](const cmd::Bootstrap &x) { return json{{"type", "bootstrap"}, {"node", x.node.value}}; },
                [](const cmd::Join &x) {
                    return json{{"type", "join"}, {"node", x.node.value}, {"contact", x.contact.value}};
                },
                [](const cmd::CommitJoin &x) { return json{{"type", "commit_join"}, {"node", x.node.value}}; },
                [](const cmd::Operation &x) {
                    return json{{"type", "operation"},      {"op_id", x.op.op_id}, {"kind", to_string(x.op.kind)},
                                {"origin", x.op.origin.value}, {"key", x.op.key},     {"hi", x.op.hi},
                                {"value", x.op.value}};
                },
                [](const cmd::Fail &x) { return json{{"type", "fail"}, {"nodes", ids(x.nodes)}}; },
                [](const cmd::Depart &x) { return json{{"type", "depart"}, {"nodes", ids(x.nodes)}}; },
                [](const cmd::CommitDepartures &x) {
                    return json{{"type", "commit_departures"}, {"nodes", ids(x.nodes)}};
                },
                [](const cmd::ResetLoad &) { return json{{"type", "reset_load"}}; },
                [](const cmd::RecordTables &) { return json{{"type", "record_tables"}}; },
                [](const cmd::RecordLoad &) { return json{{"type", "record_load"}}; },
            },
            c);
    }

    Command command_from_json(const json &j)
    {
        const auto type = j.at("type").get<std::string>();
        auto node = [&] { return NodeId{j.at("node").get<std::uint64_t>()}; };
        if (type == "bootstrap")
            return cmd::Bootstrap{node()};
        if (type == "join")
            return cmd::Join{node(), NodeId{j.at("contact").get<std::uint64_t>()}};
        if (type == "commit_join")
            return cmd::CommitJoin{node()};
        if (type == "operation")
        {
            OperationSpec op;
            op.op_id = j.at("op_id").get<std::uint64_t>();
            op.kind = kind_from(j.at("kind"));
            op.origin = NodeId{j.at("origin").get<std::uint64_t>()};
            op.key = j.at("key").get<Key>();
            op.hi = j.value("hi", Key{0});
            op.value = j.value("value", std::vector<std::uint8_t>{});
            return cmd::Operation{std::move(op)};
        }
        if (type == "fail")
            return cmd::Fail{ids_from(j.at("nodes"))};
        if (type == "depart")
            return cmd::Depart{ids_from(j.at("nodes"))};
        if (type == "commit_departures")
            return cmd::CommitDepartures{ids_from(j.at("nodes"))};
        if (type == "reset_load")
            return cmd::ResetLoad{};
        if (type == "record_tables")
            return cmd::RecordTables{};
        if (type == "record_load")
            return cmd::RecordLoad{};
        throw IoFailure("unknown command type '" + type + "'");
    }

    json to_json(const Message &m)
    {
        json j = {
            {"kind", to_string(m.kind)},
            {"sender", m.sender.value},
            {"receiver", m.receiver.value},
            {"path", ids(m.path)},
            {"hops", m.hops},
            {"send_time", m.send_time},
            {"op_id", m.op_id},
        };
        if (m.deliver_time)
            j["deliver_time"] = *m.deliver_time;
        if (m.data.key)
            j["key"] = *m.data.key;
        if (m.data.value)
            j["value"] = *m.data.value;
        if (m.data.range)
            j["range"] = {m.data.range->lo, m.data.range->hi};
        return j;
    }

    Message message_from_json(const json &j)
    {
        Message m;
        m.kind = kind_from(j.at("kind"));
        m.sender = NodeId{j.at("sender").get<std::uint64_t>()};
        m.receiver = NodeId{j.at("receiver").get<std::uint64_t>()};
        m.path = ids_from(j.at("path"));
        m.hops = j.at("hops").get<std::uint32_t>();
        m.send_time = j.at("send_time").get<Tick>();
        m.op_id = j.value("op_id", std::uint64_t{0});
        if (j.contains("deliver_time"))
            m.deliver_time = j["deliver_time"].get<Tick>();
        if (j.contains("key"))
            m.data.key = j["key"].get<Key>();
        if (j.contains("value"))
            m.data.value = j["value"].get<std::vector<std::uint8_t>>();
        if (j.contains("range"))
            m.data.range = KeyRange{j["range"].at(0).get<Key>(), j["range"].at(1).get<Key>()};
        return m;
    }
} // namespace dpsim

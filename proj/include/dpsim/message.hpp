#pragma once

#include "dpsim/types.hpp"

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

namespace dpsim
{
    struct KeyRange
    {
        Key lo = 0;
        Key hi = 0; // inclusive

        friend bool operator==(const KeyRange &, const KeyRange &) = default;
    };

    // Payload coupled to every message.
    struct Data
    {
        std::optional<Key> key;
        std::optional<std::vector<std::uint8_t>> value;
        std::optional<KeyRange> range;

        friend bool operator==(const Data &, const Data &) = default;
    };

    struct Message
    {
        MessageKind kind = MessageKind::MAINTENANCE;
        NodeId sender;
        NodeId receiver;
        Data data;
        std::vector<NodeId> path; // path.front() is the originating node
        std::uint32_t hops = 0;
        Tick send_time = 0;
        std::optional<Tick> deliver_time;
        std::uint64_t op_id = 0; // 0 = not tied to a tracked operation

        friend bool operator==(const Message &, const Message &) = default;
    };

    // Starts a message at its origin: path = [origin], hops = 0.
    inline Message make_message(MessageKind kind, NodeId origin, Data data = {}, std::uint64_t op_id = 0)
    {
        Message m;
        m.kind = kind;
        m.sender = origin;
        m.receiver = origin;
        m.data = std::move(data);
        m.path = {origin};
        m.op_id = op_id;
        return m;
    }

    // Copy of `m` addressed from `from` to `to` with `to` appended to the path.
    inline Message forwarded(const Message &m, NodeId from, NodeId to)
    {
        Message out;
        out.kind = m.kind;
        out.sender = from;
        out.receiver = to;
        out.data = m.data;
        out.path = m.path;
        out.path.push_back(to);
        out.hops = static_cast<std::uint32_t>(out.path.size() - 1);
        out.op_id = m.op_id;
        return out;
    }
} // namespace dpsim

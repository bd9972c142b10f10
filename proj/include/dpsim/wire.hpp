// Shard maps and the coordinator/worker wire format.
//
// Frames are newline-terminated JSON objects {"payload":..., "seq":n, "type":"TICK"} with sorted
// keys. seq counts up from 1 in each direction of a connection.
//
//   coordinator -> worker        worker -> coordinator
//   HELLO {version}              HELLO {version, shard?}
//   ASSIGN {map, shard, ...}     ASSIGN {ok}
//   APPLY {commands}             FORWARD {message}*, APPLY {status}
//   FORWARD {message}            (none)
//   TICK {tick}                  FORWARD {message}*, TICK_DONE {status, delivered, forwarded}
//   STATS {log, reset}           STATS {summaries, counts, counters, digest, ops, log?}
//   SHUTDOWN {}                  SHUTDOWN {}

#pragma once

#include "dpsim/engine.hpp"
#include "dpsim/metrics.hpp"
#include "dpsim/types.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace dpsim
{
    inline constexpr int kWireVersion = 1;

    struct Shard
    {
        std::string address; // host:port, or a label for in-process shards
        Key lo = 0;          // [lo, hi)
        Key hi = 0;

        friend bool operator==(const Shard &, const Shard &) = default;
    };

    struct ShardMap
    {
        unsigned key_bits = 32;
        std::vector<Shard> shards;

        std::size_t shard_of(NodeId id) const; // throws UnknownNode outside [0, 2^B)

        friend bool operator==(const ShardMap &, const ShardMap &) = default;
    };

    // Contiguous equal-width ranges over [0, 2^key_bits); the last shard takes the remainder.
    ShardMap make_shard_map(unsigned key_bits, const std::vector<std::string> &workers); // NoWorkers

    enum class FrameType : std::uint8_t
    {
        HELLO,
        ASSIGN,
        APPLY,
        TICK,
        TICK_DONE,
        FORWARD,
        STATS,
        SHUTDOWN,
    };

    std::string_view to_string(FrameType t);

    struct Frame
    {
        FrameType type = FrameType::HELLO;
        std::uint64_t seq = 0;
        nlohmann::json payload = nlohmann::json::object();
    };

    std::string encode_frame(const Frame &f); // one line, '\n' included
    Frame decode_frame(std::string_view line); // throws SchemaMismatch

    // Lockstep status a worker reports after APPLY and TICK.
    struct ShardStatus
    {
        Tick now = 0;
        bool quiescent = true;
        std::int64_t subs_started = 0;
        std::int64_t subs_resolved = 0;
    };

    nlohmann::json to_json(const ShardStatus &s);
    ShardStatus status_from_json(const nlohmann::json &j);

    nlohmann::json to_json(const ShardMap &m);
    ShardMap shard_map_from_json(const nlohmann::json &j);

    nlohmann::json to_json(const MetricSummary &s); // includes the compensated total
    MetricSummary summary_from_json(const nlohmann::json &j);

    nlohmann::json to_json(const OpResult &r);
    OpResult op_result_from_json(const nlohmann::json &j);

    nlohmann::json to_json(const LogRecord &r);
    LogRecord log_record_from_json(const nlohmann::json &j);

    nlohmann::json to_json(const Counters &c);
    Counters counters_from_json(const nlohmann::json &j);

    nlohmann::json to_json(const NetworkModel &m);
    NetworkModel network_model_from_json(const nlohmann::json &j);
} // namespace dpsim

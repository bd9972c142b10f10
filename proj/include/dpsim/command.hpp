// Control commands applied at tick boundaries.
//
// Every process taking part in a run (the single local engine, or the coordinator and each
// worker) applies the same command stream to its replica of the overlay, so peer states and
// protocol structure stay identical everywhere. Only the process hosting the node named by a
// command injects the resulting messages.

#pragma once

#include "dpsim/message.hpp"
#include "dpsim/types.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

namespace dpsim
{
    struct OperationSpec
    {
        std::uint64_t op_id = 0;
        MessageKind kind = MessageKind::SEARCH; // SEARCH, INSERT, DELETE or RANGE
        NodeId origin;
        Key key = 0;
        Key hi = 0; // RANGE only, inclusive
        std::vector<std::uint8_t> value;

        friend bool operator==(const OperationSpec &, const OperationSpec &) = default;
    };

    namespace cmd
    {
        struct Bootstrap
        {
            NodeId node;
            friend bool operator==(const Bootstrap &, const Bootstrap &) = default;
        };
        struct Join
        {
            NodeId node;
            NodeId contact;
            friend bool operator==(const Join &, const Join &) = default;
        };
        struct CommitJoin
        {
            NodeId node;
            friend bool operator==(const CommitJoin &, const CommitJoin &) = default;
        };
        struct Operation
        {
            OperationSpec op;
            friend bool operator==(const Operation &, const Operation &) = default;
        };
        struct Fail
        {
            std::vector<NodeId> nodes;
            friend bool operator==(const Fail &, const Fail &) = default;
        };
        struct Depart
        {
            std::vector<NodeId> nodes;
            friend bool operator==(const Depart &, const Depart &) = default;
        };
        struct CommitDepartures
        {
            std::vector<NodeId> nodes;
            friend bool operator==(const CommitDepartures &, const CommitDepartures &) = default;
        };
        // Clears the per-peer received-query counters (start of a measured workload).
        struct ResetLoad
        {
            friend bool operator==(const ResetLoad &, const ResetLoad &) = default;
        };
        // Records routing_table_length for every hosted member.
        struct RecordTables
        {
            friend bool operator==(const RecordTables &, const RecordTables &) = default;
        };
        // Records msgs_per_node for every hosted member that received query traffic.
        struct RecordLoad
        {
            friend bool operator==(const RecordLoad &, const RecordLoad &) = default;
        };
    } // namespace cmd

    using Command = std::variant<cmd::Bootstrap, cmd::Join, cmd::CommitJoin, cmd::Operation, cmd::Fail, cmd::Depart,
                                 cmd::CommitDepartures, cmd::ResetLoad, cmd::RecordTables, cmd::RecordLoad>;

    nlohmann::json to_json(const Command &c);
    Command command_from_json(const nlohmann::json &j);

    nlohmann::json to_json(const Message &m);
    Message message_from_json(const nlohmann::json &j);
} // namespace dpsim

// Core value types shared by every dpsim module.

#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dpsim
{
    using Tick = std::uint64_t;
    using Key = std::uint64_t;

    inline constexpr unsigned kMaxKeyBits = 63;

    // Identifier of a simulated peer. Values live in [0, 2^B) for the configured
    // key-space width B; ring arithmetic is done by the protocols that need it.
    struct NodeId
    {
        std::uint64_t value = 0;

        constexpr NodeId() = default;
        constexpr explicit NodeId(std::uint64_t v) : value(v) {}

        friend constexpr auto operator<=>(const NodeId &, const NodeId &) = default;
    };

    inline std::string to_string(NodeId id) { return std::to_string(id.value); }

    inline constexpr std::uint64_t key_space(unsigned bits) { return std::uint64_t{1} << bits; }

    enum class MessageKind : std::uint8_t
    {
        SEARCH,
        INSERT,
        DELETE,
        RANGE,
        JOIN_REQ,
        JOIN_RESP,
        REPLACEMENT_REQ,
        REPLACEMENT_RESP,
        QUERYFAILED_RES,
        BROADCAST,
        MAINTENANCE,
    };
    inline constexpr std::size_t kMessageKindCount = 11;

    std::string_view to_string(MessageKind kind);
    std::optional<MessageKind> parse_message_kind(std::string_view name);

    // True for the kinds that carry a key-addressed operation.
    constexpr bool is_query_kind(MessageKind k)
    {
        return k == MessageKind::SEARCH || k == MessageKind::INSERT || k == MessageKind::DELETE ||
               k == MessageKind::RANGE;
    }

    enum class PeerState : std::uint8_t
    {
        WORKING,
        CANDIDATE_SUBSTITUTE,
        VOLUNTARILY_LEFT,
        FAILED,
    };

    std::string_view to_string(PeerState state);

    // Legal lifecycle edges; FAILED and VOLUNTARILY_LEFT are terminal.
    constexpr bool is_legal_transition(PeerState from, PeerState to)
    {
        switch (from)
        {
        case PeerState::WORKING:
            return to == PeerState::VOLUNTARILY_LEFT || to == PeerState::FAILED ||
                   to == PeerState::CANDIDATE_SUBSTITUTE;
        case PeerState::CANDIDATE_SUBSTITUTE:
            return to == PeerState::WORKING;
        default:
            return false;
        }
    }

    // A peer that can still receive and handle messages.
    constexpr bool is_live(PeerState s)
    {
        return s == PeerState::WORKING || s == PeerState::CANDIDATE_SUBSTITUTE;
    }

    // ---------------------------------------------------------------------------------------------
    // Errors

    class SimError : public std::runtime_error
    {
    public:
        using std::runtime_error::runtime_error;
    };

#define DPSIM_ERROR(Name)                                                                           \
    class Name : public SimError                                                                    \
    {                                                                                               \
    public:                                                                                         \
        using SimError::SimError;                                                                   \
    }

    DPSIM_ERROR(QuiescenceTimeout);
    DPSIM_ERROR(ForbiddenBroadcastKind);
    DPSIM_ERROR(UnknownNode);
    DPSIM_ERROR(DuplicateId);
    DPSIM_ERROR(OriginDown);
    DPSIM_ERROR(UnsupportedOperation);
    DPSIM_ERROR(IllegalTransition);
    DPSIM_ERROR(NoEligibleNode);
    DPSIM_ERROR(InvalidParams);
    DPSIM_ERROR(UnknownMetric);
    DPSIM_ERROR(SchemaMismatch);
    DPSIM_ERROR(NoWorkers);
    DPSIM_ERROR(WorkerUnreachable);
    DPSIM_ERROR(TickTimeout);
    DPSIM_ERROR(IoFailure);
    DPSIM_ERROR(InvalidPlan);

#undef DPSIM_ERROR

    // Configuration error carrying the element path that failed validation.
    class SchemaError : public SimError
    {
    public:
        SchemaError(std::string path, const std::string &what)
            : SimError(path.empty() ? what : path + ": " + what), path_(std::move(path))
        {
        }

        const std::string &path() const noexcept { return path_; }

    private:
        std::string path_;
    };
} // namespace dpsim

template <>
struct std::hash<dpsim::NodeId>
{
    std::size_t operator()(dpsim::NodeId id) const noexcept { return std::hash<std::uint64_t>{}(id.value); }
};

#include "dpsim/types.hpp"

#include <array>

namespace dpsim
{
    namespace
    {
        constexpr std::array<std::string_view, kMessageKindCount> kKindNames = {
            "SEARCH",          "INSERT",           "DELETE",          "RANGE",     "JOIN_REQ",    "JOIN_RESP",
            "REPLACEMENT_REQ", "REPLACEMENT_RESP", "QUERYFAILED_RES", "BROADCAST", "MAINTENANCE",
        };
    }

    std::string_view to_string(MessageKind kind) { return kKindNames[static_cast<std::size_t>(kind)]; }

    std::optional<MessageKind> parse_message_kind(std::string_view name)
    {
        for (std::size_t i = 0; i < kKindNames.size(); ++i)
            if (kKindNames[i] == name)
                return static_cast<MessageKind>(i);
        return std::nullopt;
    }

    std::string_view to_string(PeerState state)
    {
        switch (state)
        {
        case PeerState::WORKING:
            return "WORKING";
        case PeerState::CANDIDATE_SUBSTITUTE:
            return "CANDIDATE_SUBSTITUTE";
        case PeerState::VOLUNTARILY_LEFT:
            return "VOLUNTARILY_LEFT";
        case PeerState::FAILED:
            return "FAILED";
        }
        return "?";
    }
} // namespace dpsim

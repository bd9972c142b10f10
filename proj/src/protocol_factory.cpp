#include "dpsim/baton.hpp"
#include "dpsim/chord.hpp"
#include "dpsim/dummy.hpp"

namespace dpsim
{
    namespace
    {
        bool reserved(const std::string &name)
        {
            return name == "art" || name == "nbdt" || name == "nbdt_star" || name == "r_nbdt_star";
        }
    } // namespace

    void ProtocolSpec::validate() const
    {
        if (key_bits < 1 || key_bits > kMaxKeyBits)
            throw InvalidParams("key_bits must be in [1, " + std::to_string(kMaxKeyBits) + "], got " +
                                std::to_string(key_bits));
        if (name == "baton_star")
        {
            if (fanout < 2 || fanout > 10)
                throw InvalidParams("baton_star fanout must be in [2, 10], got " + std::to_string(fanout));
            return;
        }
        if (name == "chord" || name == "dummy")
            return;
        if (reserved(name))
            throw UnsupportedOperation("protocol '" + name + "' is reserved for plug-ins and not built in");
        throw InvalidParams("unknown protocol '" + name + "'");
    }

    std::unique_ptr<Protocol> make_protocol(const ProtocolSpec &spec)
    {
        spec.validate();
        if (spec.name == "chord")
            return std::make_unique<Chord>(spec.key_bits);
        if (spec.name == "dummy")
            return std::make_unique<Dummy>(spec.key_bits);
        return std::make_unique<BatonStar>(spec.key_bits, spec.fanout);
    }
} // namespace dpsim

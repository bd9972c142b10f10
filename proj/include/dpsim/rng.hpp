// Seeded random stream used everywhere randomness is needed.
//
// The generator is std::mt19937_64, whose output sequence is fixed by the C++ standard, so a
// seed reproduces the same stream on every conforming implementation. The std distribution
// adaptors are not portable, so conversions to reals and bounded integers are done here:
//
//   uniform01()   = (next() >> 11) * 2^-53                     in [0, 1)
//   open01()      = ((next() >> 11) + 0.5) * 2^-53             in (0, 1)
//   below(n)      = rejection sampling on next() against the largest multiple of n
//
// derive_seed() mixes a parent seed with a stream tag through the SplitMix64 finalizer so that
// independent consumers (workload keys, churn selection, join contacts) never share a stream.

#pragma once

#include <cstdint>
#include <limits>
#include <random>

namespace dpsim
{
    constexpr std::uint64_t splitmix64(std::uint64_t x)
    {
        x += 0x9E3779B97F4A7C15ULL;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
        return x ^ (x >> 31);
    }

    constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag)
    {
        return splitmix64(splitmix64(seed) ^ (tag * 0xD6E8FEB86659FD93ULL));
    }

    class Rng
    {
    public:
        explicit Rng(std::uint64_t seed = 1) : gen_(seed) {}

        std::uint64_t next() { return gen_(); }

        double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

        double open01() { return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53; }

        // Uniform integer in [0, n); n must be > 0.
        std::uint64_t below(std::uint64_t n)
        {
            const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                        std::numeric_limits<std::uint64_t>::max() % n;
            std::uint64_t x;
            do
            {
                x = next();
            } while (x >= limit);
            return x % n;
        }

    private:
        std::mt19937_64 gen_;
    };
} // namespace dpsim

// Workload and churn-selection distributions.

#pragma once

#include "dpsim/rng.hpp"
#include "dpsim/types.hpp"

#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace dpsim
{
    enum class DistributionKind : std::uint8_t
    {
        uniform,
        normal,
        beta,
        weibull,
        powerlaw,
    };

    std::string_view to_string(DistributionKind kind);
    // Accepts the config spellings too ("powerLaw", "random" is not a kind).
    std::optional<DistributionKind> parse_distribution_kind(std::string_view name);

    struct DistributionSpec
    {
        DistributionKind kind = DistributionKind::uniform;
        std::map<std::string, double> params; // see default_params()
        std::uint64_t seed = 1;

        double param(const std::string &name) const;

        friend bool operator==(const DistributionSpec &, const DistributionSpec &) = default;
    };

    // uniform{lo=0,hi=1} normal{mu=0.5,sigma=0.15} beta{alpha=2,beta=4}
    // weibull{shape=1.5,scale=1} powerlaw{alpha=0.5,beta=1}
    std::map<std::string, double> default_params(DistributionKind kind);

    DistributionSpec make_distribution(DistributionKind kind, std::map<std::string, double> params = {},
                                       std::uint64_t seed = 1);

    // Throws InvalidParams naming the offending parameter.
    void validate(const DistributionSpec &spec);

    // Deterministic draw stream for one spec.
    //
    //   uniform  lo + (hi - lo) * U
    //   normal   Box-Muller, both variates of a pair are used in order
    //   beta     X / (X + Y) with X ~ Gamma(alpha), Y ~ Gamma(beta) (Marsaglia-Tsang)
    //   weibull  scale * (-ln(1 - U))^(1/shape)
    //   powerlaw Pareto inverse CDF: beta * U^(-1/alpha), U in (0,1)
    class Sampler
    {
    public:
        explicit Sampler(DistributionSpec spec);

        double draw();

        // Maps a draw onto [0, 1) so it can index a key space or a ranked node list. Bounded kinds
        // are rescaled to their support and clamped; unbounded kinds go through x / (1 + x).
        double draw_unit();

        const DistributionSpec &spec() const noexcept { return spec_; }

    private:
        double normal01();
        double gamma(double shape);

        DistributionSpec spec_;
        Rng rng_;
        std::optional<double> spare_normal_;
    };
} // namespace dpsim

#include "dpsim/distribution.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace dpsim
{
    std::string_view to_string(DistributionKind kind)
    {
        switch (kind)
        {
        case DistributionKind::uniform:
            return "uniform";
        case DistributionKind::normal:
            return "normal";
        case DistributionKind::beta:
            return "beta";
        case DistributionKind::weibull:
            return "weibull";
        case DistributionKind::powerlaw:
            return "powerlaw";
        }
        return "uniform";
    }

    std::optional<DistributionKind> parse_distribution_kind(std::string_view name)
    {
        if (name == "uniform")
            return DistributionKind::uniform;
        if (name == "normal")
            return DistributionKind::normal;
        if (name == "beta")
            return DistributionKind::beta;
        if (name == "weibull")
            return DistributionKind::weibull;
        if (name == "powerlaw" || name == "powerLaw")
            return DistributionKind::powerlaw;
        return std::nullopt;
    }

    std::map<std::string, double> default_params(DistributionKind kind)
    {
        switch (kind)
        {
        case DistributionKind::uniform:
            return {{"lo", 0.0}, {"hi", 1.0}};
        case DistributionKind::normal:
            return {{"mu", 0.5}, {"sigma", 0.15}};
        case DistributionKind::beta:
            return {{"alpha", 2.0}, {"beta", 4.0}};
        case DistributionKind::weibull:
            return {{"shape", 1.5}, {"scale", 1.0}};
        case DistributionKind::powerlaw:
            return {{"alpha", 0.5}, {"beta", 1.0}};
        }
        return {};
    }

    double DistributionSpec::param(const std::string &name) const
    {
        if (auto it = params.find(name); it != params.end())
            return it->second;
        auto defaults = default_params(kind);
        if (auto it = defaults.find(name); it != defaults.end())
            return it->second;
        throw InvalidParams(std::string(to_string(kind)) + " has no parameter '" + name + "'");
    }

    DistributionSpec make_distribution(DistributionKind kind, std::map<std::string, double> params,
                                       std::uint64_t seed)
    {
        DistributionSpec spec{kind, default_params(kind), seed};
        for (auto &[k, v] : params)
            spec.params[k] = v;
        validate(spec);
        return spec;
    }

    void validate(const DistributionSpec &spec)
    {
        const auto defaults = default_params(spec.kind);
        for (const auto &[name, value] : spec.params)
        {
            if (!defaults.contains(name))
                throw InvalidParams(std::string(to_string(spec.kind)) + ": unknown parameter '" + name + "'");
            if (!std::isfinite(value))
                throw InvalidParams(std::string(to_string(spec.kind)) + "/" + name + " must be finite");
        }
        auto require_positive = [&](const char *name) {
            if (!(spec.param(name) > 0.0))
                throw InvalidParams(std::string(to_string(spec.kind)) + "/" + name + " must be > 0");
        };
        switch (spec.kind)
        {
        case DistributionKind::uniform:
            if (spec.param("lo") > spec.param("hi"))
                throw InvalidParams("uniform/lo must be <= hi");
            break;
        case DistributionKind::normal:
            require_positive("sigma");
            break;
        case DistributionKind::beta:
            require_positive("alpha");
            require_positive("beta");
            break;
        case DistributionKind::weibull:
            require_positive("shape");
            require_positive("scale");
            break;
        case DistributionKind::powerlaw:
            require_positive("alpha");
            require_positive("beta");
            break;
        }
    }

    Sampler::Sampler(DistributionSpec spec) : spec_(std::move(spec)), rng_(spec_.seed)
    {
        validate(spec_);
    }

    double Sampler::normal01()
    {
        if (spare_normal_)
        {
            double v = *spare_normal_;
            spare_normal_.reset();
            return v;
        }
        const double u1 = rng_.open01();
        const double u2 = rng_.uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        spare_normal_ = r * std::sin(theta);
        return r * std::cos(theta);
    }

    double Sampler::gamma(double shape)
    {
        if (shape < 1.0)
        {
            const double g = gamma(shape + 1.0);
            return g * std::pow(rng_.open01(), 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;)
        {
            double x = normal01();
            double v = 1.0 + c * x;
            if (v <= 0.0)
                continue;
            v = v * v * v;
            const double u = rng_.open01();
            if (u < 1.0 - 0.0331 * x * x * x * x)
                return d * v;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v)))
                return d * v;
        }
    }

    double Sampler::draw()
    {
        switch (spec_.kind)
        {
        case DistributionKind::uniform: {
            const double lo = spec_.param("lo"), hi = spec_.param("hi");
            if (lo == hi)
            {
                rng_.next();
                return lo;
            }
            return lo + (hi - lo) * rng_.uniform01();
        }
        case DistributionKind::normal:
            return spec_.param("mu") + spec_.param("sigma") * normal01();
        case DistributionKind::beta: {
            const double x = gamma(spec_.param("alpha"));
            const double y = gamma(spec_.param("beta"));
            return x / (x + y);
        }
        case DistributionKind::weibull:
            return spec_.param("scale") * std::pow(-std::log1p(-rng_.uniform01()), 1.0 / spec_.param("shape"));
        case DistributionKind::powerlaw:
            return spec_.param("beta") * std::pow(rng_.open01(), -1.0 / spec_.param("alpha"));
        }
        return 0.0;
    }

    double Sampler::draw_unit()
    {
        constexpr double kBelowOne = 1.0 - 0x1.0p-53;
        const double x = draw();
        double u = 0.0;
        switch (spec_.kind)
        {
        case DistributionKind::uniform: {
            const double lo = spec_.param("lo"), hi = spec_.param("hi");
            u = hi > lo ? (x - lo) / (hi - lo) : 0.0;
            break;
        }
        case DistributionKind::normal:
        case DistributionKind::beta:
            u = x;
            break;
        case DistributionKind::weibull:
        case DistributionKind::powerlaw:
            u = x / (1.0 + x);
            break;
        }
        return std::clamp(u, 0.0, kBelowOne);
    }
} // namespace dpsim

#pragma once

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/skew_normal.hpp>

#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dual.hpp"
#include "error.hpp"
#include "rng.hpp"

namespace msgamlss {

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // 0.5 * log(2 pi)

enum class LinkKind { Identity, Log, Logit };

/// Monotonic link g mapping a distribution parameter to its additive predictor.
struct LinkFn {
    LinkKind kind = LinkKind::Identity;

    double forward(double value) const {
        switch (kind) {
            case LinkKind::Identity: return value;
            case LinkKind::Log: return std::log(value);
            case LinkKind::Logit: return std::log(value) - std::log1p(-value);
        }
        return value;
    }

    template <class Scalar>
    Scalar inverse(const Scalar& eta) const {
        using std::exp;
        switch (kind) {
            case LinkKind::Identity: return eta;
            case LinkKind::Log: return exp(eta);
            case LinkKind::Logit: return 1.0 / (1.0 + exp(-eta));
        }
        return eta;
    }

    /// d g^{-1}(eta) / d eta
    template <class Scalar>
    Scalar inverse_derivative(const Scalar& eta) const {
        using std::exp;
        switch (kind) {
            case LinkKind::Identity: return Scalar(1.0);
            case LinkKind::Log: return exp(eta);
            case LinkKind::Logit: {
                const Scalar p = 1.0 / (1.0 + exp(-eta));
                return p * (1.0 - p);
            }
        }
        return Scalar(1.0);
    }

    std::string_view name() const {
        switch (kind) {
            case LinkKind::Identity: return "identity";
            case LinkKind::Log: return "log";
            case LinkKind::Logit: return "logit";
        }
        return "?";
    }
};

enum class FamilyKind { Normal, SkewNormal };

inline constexpr int kMaxDistParams = 4;  // mu, sigma, nu, tau
using ParamTuple = std::array<double, kMaxDistParams>;

/// State-dependent response distribution. Skew-normal uses the direct
/// parametrization: location mu, scale sigma, shape nu, with density
/// 2/sigma * phi(z) * Phi(nu z), z = (y - mu) / sigma.
struct Family {
    FamilyKind kind = FamilyKind::Normal;
    std::vector<LinkFn> links;

    static Family normal() { return {FamilyKind::Normal, {{LinkKind::Identity}, {LinkKind::Log}}}; }
    static Family skew_normal() {
        return {FamilyKind::SkewNormal, {{LinkKind::Identity}, {LinkKind::Log}, {LinkKind::Identity}}};
    }
    static Family from_name(std::string_view name) {
        if (name == "normal") return normal();
        if (name == "skew_normal" || name == "skewnormal" || name == "sn") return skew_normal();
        throw ConfigError("unknown family '" + std::string(name) + "'");
    }

    int num_params() const { return kind == FamilyKind::Normal ? 2 : 3; }
    std::string_view name() const { return kind == FamilyKind::Normal ? "normal" : "skew_normal"; }
    std::vector<std::string> parameter_names() const {
        if (kind == FamilyKind::Normal) return {"mu", "sigma"};
        return {"mu", "sigma", "nu"};
    }
    int parameter_index(std::string_view param) const {
        const auto names = parameter_names();
        for (std::size_t k = 0; k < names.size(); ++k)
            if (names[k] == param) return static_cast<int>(k);
        throw ConfigError("family " + std::string(name()) + " has no parameter '" +
                          std::string(param) + "'");
    }
};

// ---------------------------------------------------------------------------
// log Phi(x) and the inverse Mills ratio phi(x)/Phi(x), stable for x << 0.

inline double log_ndtr(double x) {
    if (x > -30.0) return std::log(0.5 * std::erfc(-x / std::numbers::sqrt2));
    const double x2 = 1.0 / (x * x);
    const double series = 1.0 - x2 * (1.0 - 3.0 * x2 * (1.0 - 5.0 * x2 * (1.0 - 7.0 * x2)));
    return -0.5 * x * x - std::log(-x) - kLogSqrt2Pi + std::log(series);
}

inline double inv_mills(double x) {
    if (x > -30.0) {
        const double log_phi = -0.5 * x * x - kLogSqrt2Pi;
        return std::exp(log_phi - log_ndtr(x));
    }
    const double x2 = 1.0 / (x * x);
    const double series = 1.0 - x2 * (1.0 - 3.0 * x2 * (1.0 - 5.0 * x2 * (1.0 - 7.0 * x2)));
    return -x / series;
}

inline Dual log_ndtr(const Dual& x) { return {log_ndtr(x.v), inv_mills(x.v) * x.d}; }
inline Dual inv_mills(const Dual& x) {
    const double r = inv_mills(x.v);
    return {r, -r * (x.v + r) * x.d};
}

// ---------------------------------------------------------------------------

template <class Scalar>
struct DensityEval {
    Scalar log_density;
    std::array<Scalar, kMaxDistParams> score;  // d log f / d eta_k (link scale)
};

/// log f(y | g^{-1}(eta)) and its derivatives with respect to each linear
/// predictor. `eta` holds `family.num_params()` entries.
template <class Scalar>
DensityEval<Scalar> log_density_eta(const Family& family, double y, std::span<const Scalar> eta) {
    using std::log;
    std::array<Scalar, kMaxDistParams> p{};
    std::array<Scalar, kMaxDistParams> dp{};
    const int k = family.num_params();
    for (int j = 0; j < k; ++j) {
        p[j] = family.links[j].inverse(eta[j]);
        dp[j] = family.links[j].inverse_derivative(eta[j]);
    }
    const Scalar& mu = p[0];
    const Scalar& sigma = p[1];
    const Scalar z = (y - mu) / sigma;
    DensityEval<Scalar> out{};
    if (family.kind == FamilyKind::Normal) {
        out.log_density = -log(sigma) - kLogSqrt2Pi - 0.5 * z * z;
        out.score[0] = z / sigma * dp[0];
        out.score[1] = (z * z - 1.0) / sigma * dp[1];
    } else {
        const Scalar& alpha = p[2];
        const Scalar az = alpha * z;
        const Scalar r = inv_mills(az);
        out.log_density = std::numbers::ln2 - log(sigma) - kLogSqrt2Pi - 0.5 * z * z + log_ndtr(az);
        out.score[0] = (z - alpha * r) / sigma * dp[0];
        out.score[1] = (z * z - 1.0 - az * r) / sigma * dp[1];
        out.score[2] = z * r * dp[2];
    }
    return out;
}

namespace detail {
inline void check_params(const Family& family, const ParamTuple& params) {
    if (!(params[1] > 0.0) || !std::isfinite(params[1]))
        throw ParameterError("sigma must be positive and finite, got " + std::to_string(params[1]));
    for (int j = 0; j < family.num_params(); ++j)
        if (!std::isfinite(params[j])) throw ParameterError("non-finite distribution parameter");
}
}  // namespace detail

/// log density at natural-scale parameters (mu, sigma[, nu]).
inline double log_density(const Family& family, double y, const ParamTuple& params) {
    detail::check_params(family, params);
    const double z = (y - params[0]) / params[1];
    double lf = -std::log(params[1]) - kLogSqrt2Pi - 0.5 * z * z;
    if (family.kind == FamilyKind::SkewNormal) lf += std::numbers::ln2 + log_ndtr(params[2] * z);
    return lf;
}

inline double cdf(const Family& family, double y, const ParamTuple& params) {
    detail::check_params(family, params);
    if (family.kind == FamilyKind::Normal)
        return boost::math::cdf(boost::math::normal(params[0], params[1]), y);
    return boost::math::cdf(boost::math::skew_normal(params[0], params[1], params[2]), y);
}

inline double quantile(const Family& family, double p, const ParamTuple& params) {
    if (!(p > 0.0 && p < 1.0))
        throw DomainError("quantile probability must lie in (0,1), got " + std::to_string(p));
    detail::check_params(family, params);
    if (family.kind == FamilyKind::Normal)
        return boost::math::quantile(boost::math::normal(params[0], params[1]), p);
    const boost::math::skew_normal dist(params[0], params[1], params[2]);
    double q = boost::math::quantile(dist, p);
    // the library root finder stops early; a few Newton steps recover full precision
    for (int it = 0; it < 4; ++it) {
        const double dens = boost::math::pdf(dist, q);
        if (!(dens > 0.0)) break;
        const double step = (boost::math::cdf(dist, q) - p) / dens;
        if (!std::isfinite(step)) break;
        q -= step;
        if (std::abs(step) <= 1e-15 * (std::abs(q) + params[1])) break;
    }
    return q;
}

inline double sample(const Family& family, const ParamTuple& params, Rng& rng) {
    detail::check_params(family, params);
    if (family.kind == FamilyKind::Normal) return params[0] + params[1] * rng.normal();
    // Y = mu + sigma (d |U0| + sqrt(1 - d^2) U1), d = nu / sqrt(1 + nu^2)
    const double d = params[2] / std::sqrt(1.0 + params[2] * params[2]);
    const double u0 = std::abs(rng.normal());
    const double u1 = rng.normal();
    return params[0] + params[1] * (d * u0 + std::sqrt(1.0 - d * d) * u1);
}

/// Standard normal quantile.
inline double probit(double p) { return boost::math::quantile(boost::math::normal(), p); }

}  // namespace msgamlss

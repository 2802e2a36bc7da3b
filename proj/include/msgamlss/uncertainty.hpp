#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "error.hpp"
#include "inference.hpp"
#include "markov.hpp"
#include "rng.hpp"
#include "stats.hpp"

namespace msgamlss {

/// Draws from N(theta_hat, H^{-1}); one draw per row.
struct PosteriorSampleSet {
    Eigen::MatrixXd draws;
    std::uint64_t seed = 0;
};

inline PosteriorSampleSet sample_gaussian_precision(const Eigen::VectorXd& mean, const Eigen::MatrixXd& precision,
                                                    int draws, std::uint64_t seed) {
    if (draws < 1) throw ConfigError("number of posterior draws must be positive");
    Eigen::LLT<Eigen::MatrixXd> llt(precision);
    if (llt.info() != Eigen::Success) throw NumericError("Hessian is not positive definite; cannot sample");
    Rng rng(seed);
    PosteriorSampleSet out;
    out.seed = seed;
    out.draws.resize(draws, mean.size());
    Eigen::VectorXd z(mean.size());
    for (int r = 0; r < draws; ++r) {
        for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
        // H = L L'  =>  L'^{-1} z has covariance H^{-1}
        out.draws.row(r) = (mean + llt.matrixU().solve(z)).transpose();
    }
    return out;
}

inline PosteriorSampleSet sample_posterior(const FittedModel& fitted, int draws = 1000, std::uint64_t seed = 1) {
    return sample_gaussian_precision(fitted.theta, fitted.hessian, draws, seed);
}

struct Band {
    std::vector<double> grid;
    std::vector<double> estimate;
    std::vector<double> lower;
    std::vector<double> upper;
    std::vector<int> dropped;  // draws discarded per grid point
};

namespace detail {

inline void summarize(std::vector<std::vector<double>>& per_grid, double level, Band& band) {
    if (!(level > 0.0 && level <= 1.0)) throw ConfigError("band level must lie in (0, 1]");
    const double tail = 0.5 * (1.0 - level);
    for (auto& values : per_grid) {
        std::sort(values.begin(), values.end());
        band.lower.push_back(sorted_quantile(values, tail));
        band.upper.push_back(sorted_quantile(values, 1.0 - tail));
    }
}

inline std::span<const double> row_span(const Eigen::MatrixXd& draws, Eigen::Index r, std::vector<double>& buf) {
    buf.resize(static_cast<std::size_t>(draws.cols()));
    for (Eigen::Index c = 0; c < draws.cols(); ++c) buf[static_cast<std::size_t>(c)] = draws(r, c);
    return buf;
}

}  // namespace detail

/// Pointwise band for a state-dependent parameter curve.
inline Band effect_band(const FittedModel& fitted, const PosteriorSampleSet& samples, int param, int state,
                        const std::string& covariate, std::span<const double> grid, double level = 0.95,
                        CurveScale scale = CurveScale::Response) {
    const auto& link = fitted.spec.family.links.at(static_cast<std::size_t>(param));
    auto mapped = [&](std::span<const double> th) {
        auto eta = predictor_curve(fitted, th, state, param, covariate, grid);
        if (scale == CurveScale::Response)
            for (auto& e : eta) e = link.inverse(e);
        return eta;
    };
    Band band;
    band.grid.assign(grid.begin(), grid.end());
    band.estimate = mapped(fitted.coefficients());
    band.dropped.assign(grid.size(), 0);
    std::vector<std::vector<double>> per_grid(grid.size());
    std::vector<double> buf;
    for (Eigen::Index r = 0; r < samples.draws.rows(); ++r) {
        const auto curve = mapped(detail::row_span(samples.draws, r, buf));
        for (std::size_t g = 0; g < grid.size(); ++g) per_grid[g].push_back(curve[g]);
    }
    detail::summarize(per_grid, level, band);
    return band;
}

/// Target of a transition band: a TPM entry (from, to) or the stationary
/// probability of one state.
struct TransitionEntry {
    int from = 0;
    int to = 0;
};
struct StationaryEntry {
    int state = 0;
};
using TransitionTarget = std::variant<TransitionEntry, StationaryEntry>;

/// Pointwise band for a transition probability or stationary probability
/// along a grid of one transition covariate. Draws with a non-ergodic TPM at
/// a grid point are dropped there and counted.
inline Band transition_band(const FittedModel& fitted, const PosteriorSampleSet& samples, const TransitionTarget& target,
                            const std::string& covariate, std::span<const double> grid, double level = 0.95) {
    auto value_at = [&](const TransitionModel& tm, CovariateRow& row, double g) {
        row[covariate] = g;
        const Eigen::MatrixXd gamma = tpm_from_eta(eta_matrix(tm, row));
        if (const auto* e = std::get_if<TransitionEntry>(&target)) return gamma(e->from, e->to);
        return stationary(gamma)(std::get<StationaryEntry>(target).state);
    };
    Band band;
    band.grid.assign(grid.begin(), grid.end());
    band.dropped.assign(grid.size(), 0);
    const TransitionModel point = fitted.transition_model();
    CovariateRow row = point.reference;
    for (double g : grid) band.estimate.push_back(value_at(point, row, g));
    std::vector<std::vector<double>> per_grid(grid.size());
    std::vector<double> buf;
    for (Eigen::Index r = 0; r < samples.draws.rows(); ++r) {
        const TransitionModel tm = fitted.transition_model(detail::row_span(samples.draws, r, buf));
        for (std::size_t g = 0; g < grid.size(); ++g) {
            try {
                per_grid[g].push_back(value_at(tm, row, grid[g]));
            } catch (const NumericError&) {
                ++band.dropped[g];
            }
        }
    }
    detail::summarize(per_grid, level, band);
    return band;
}

}  // namespace msgamlss

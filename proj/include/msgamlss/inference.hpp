#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "families.hpp"
#include "likelihood.hpp"
#include "markov.hpp"
#include "model.hpp"

namespace msgamlss {

struct FitDiagnostics {
    int outer_iterations = 0;
    int inner_iterations = 0;  // summed over all penalized fits
    int inner_fits = 0;
    int inner_fits_converged = 0;
    double gradient_norm = 0.0;  // infinity norm at the returned estimate
    bool converged = false;      // final penalized fit met the gradient tolerance
    bool lambda_converged = false;
    std::vector<std::vector<double>> lambda_trace;
    std::vector<std::string> warnings;
};

/// Everything needed to evaluate, predict from, or decode with a fitted model.
struct FittedModel {
    ModelSpec spec;
    BasisSet bases;
    Eigen::VectorXd theta;
    std::vector<double> lambda;
    Eigen::MatrixXd hessian;  // penalized, at (theta, lambda)
    double log_likelihood = 0.0;
    double penalized_objective = 0.0;
    FitDiagnostics diagnostics;
    CovariateRow reference;  // covariate means over the fitting data
    std::size_t n_obs = 0;

    ParameterLayout layout() const { return ParameterLayout::build(spec, bases); }
    Design design(const TimeSeriesFrame& frame) const { return make_design(spec, bases, frame); }
    std::span<const double> coefficients() const {
        return {theta.data(), static_cast<std::size_t>(theta.size())};
    }

    TransitionModel transition_model(std::span<const double> th) const {
        return unpack_transition(layout(), bases, th, reference);
    }
    TransitionModel transition_model() const { return transition_model(coefficients()); }

    Predictor state_predictor(int state, int param, std::span<const double> th) const {
        return unpack_predictor(layout().state_predictor(state, param), bases, th);
    }
};

inline CovariateRow covariate_means(const ModelSpec& spec, const TimeSeriesFrame& frame) {
    CovariateRow out;
    for (const auto& name : spec.covariates()) {
        const auto& col = frame.column(name);
        out[name] = std::accumulate(col.begin(), col.end(), 0.0) / static_cast<double>(col.size());
    }
    return out;
}

inline double log_likelihood(const Design& d, std::span<const double> theta) {
    return -negative_log_likelihood<double>(d, theta, false).value;
}

inline double log_likelihood(const ModelSpec& spec, const BasisSet& bases, std::span<const double> theta,
                             const TimeSeriesFrame& data) {
    return log_likelihood(make_design(spec, bases, data), theta);
}

inline double penalized_nll(const Design& d, std::span<const double> theta, std::span<const double> lambda) {
    return penalized_objective<double>(d, theta, lambda, false).value;
}

inline Eigen::VectorXd gradient(const Design& d, std::span<const double> theta, std::span<const double> lambda) {
    const auto eval = penalized_objective<double>(d, theta, lambda, true);
    return Eigen::Map<const Eigen::VectorXd>(eval.gradient.data(), static_cast<Eigen::Index>(eval.gradient.size()));
}

// ---------------------------------------------------------------------------
// Decoding

/// Most probable state path (0-based labels), computed in log space.
inline std::vector<int> viterbi(const ModelQuantities& q) {
    const auto t_len = q.log_density.rows();
    const auto n = q.log_density.cols();
    Eigen::MatrixXd score(t_len, n);
    std::vector<int> back(static_cast<std::size_t>(t_len * n), 0);
    score.row(0) = q.delta.array().log() + q.log_density.row(0).array();
    for (Eigen::Index t = 1; t < t_len; ++t) {
        const Eigen::MatrixXd log_gamma = q.gammas[static_cast<std::size_t>(t - 1)].array().log();
        for (Eigen::Index j = 0; j < n; ++j) {
            Eigen::Index arg = 0;
            const double best = (score.row(t - 1).transpose() + log_gamma.col(j)).maxCoeff(&arg);
            score(t, j) = best + q.log_density(t, j);
            back[static_cast<std::size_t>(t * n + j)] = static_cast<int>(arg);
        }
    }
    std::vector<int> path(static_cast<std::size_t>(t_len));
    Eigen::Index last = 0;
    score.row(t_len - 1).maxCoeff(&last);
    path.back() = static_cast<int>(last);
    for (Eigen::Index t = t_len - 1; t > 0; --t)
        path[static_cast<std::size_t>(t - 1)] = back[static_cast<std::size_t>(t * n + path[static_cast<std::size_t>(t)])];
    return path;
}

inline std::vector<int> viterbi(const FittedModel& fitted, const TimeSeriesFrame& data) {
    return viterbi(model_quantities(fitted.design(data), fitted.coefficients()));
}

// ---------------------------------------------------------------------------
// Pseudo-residuals

struct PseudoResiduals {
    std::vector<double> residuals;
    std::vector<double> pit;  // one-step-ahead conditional CDF values
    int clamped = 0;
};

inline constexpr double kPitClamp = 1e-12;

/// One-step-ahead (forecast) pseudo-residuals: Phi^{-1} of the mixture CDF
/// sum_i w_t(i) F_i(y_t) with w_t the normalized predicted state probabilities.
inline PseudoResiduals pseudo_residuals(const Design& d, std::span<const double> theta) {
    const auto q = model_quantities(d, theta);
    const auto filt = forward_filter(q);
    const int n = d.n_states();
    PseudoResiduals out;
    for (std::size_t t = 0; t < d.length(); ++t) {
        double u = 0.0;
        for (int i = 0; i < n; ++i)
            u += filt.predicted(static_cast<Eigen::Index>(t), i) *
                 cdf(d.spec.family, d.y[t], q.params[t * static_cast<std::size_t>(n) + static_cast<std::size_t>(i)]);
        if (u < kPitClamp || u > 1.0 - kPitClamp) {
            ++out.clamped;
            u = std::clamp(u, kPitClamp, 1.0 - kPitClamp);
        }
        out.pit.push_back(u);
        out.residuals.push_back(probit(u));
    }
    return out;
}

inline PseudoResiduals pseudo_residuals(const FittedModel& fitted, const TimeSeriesFrame& data) {
    return pseudo_residuals(fitted.design(data), fitted.coefficients());
}

// ---------------------------------------------------------------------------
// Parameter curves

enum class CurveScale { Response, Predictor };

struct ParameterCurves {
    std::string covariate;
    std::vector<double> grid;
    std::vector<double> probabilities;   // quantile levels
    std::vector<Eigen::MatrixXd> values;     // per state: G x K (parameter on the requested scale)
    std::vector<Eigen::MatrixXd> quantiles;  // per state: G x P conditional quantiles
};

/// Predictor value of (state, param) along `grid` of one covariate, other
/// covariates held at their fitting-data means.
inline std::vector<double> predictor_curve(const FittedModel& fitted, std::span<const double> theta, int state,
                                           int param, const std::string& covariate, std::span<const double> grid) {
    const Predictor pred = fitted.state_predictor(state, param, theta);
    CovariateRow row = fitted.reference;
    std::vector<double> out;
    out.reserve(grid.size());
    for (double g : grid) {
        row[covariate] = g;
        out.push_back(pred.eval(row));
    }
    return out;
}

inline ParameterCurves predict_parameters(const FittedModel& fitted, const std::string& covariate,
                                          std::span<const double> grid, std::span<const double> probabilities = {},
                                          CurveScale scale = CurveScale::Response) {
    ParameterCurves out;
    out.covariate = covariate;
    out.grid.assign(grid.begin(), grid.end());
    out.probabilities.assign(probabilities.begin(), probabilities.end());
    const auto g_len = static_cast<Eigen::Index>(grid.size());
    const int k_params = fitted.spec.num_params();
    for (int i = 0; i < fitted.spec.n_states; ++i) {
        Eigen::MatrixXd natural(g_len, k_params);
        Eigen::MatrixXd shown(g_len, k_params);
        for (int k = 0; k < k_params; ++k) {
            const auto eta = predictor_curve(fitted, fitted.coefficients(), i, k, covariate, grid);
            for (Eigen::Index g = 0; g < g_len; ++g) {
                natural(g, k) = fitted.spec.family.links[static_cast<std::size_t>(k)].inverse(eta[static_cast<std::size_t>(g)]);
                shown(g, k) = scale == CurveScale::Response ? natural(g, k) : eta[static_cast<std::size_t>(g)];
            }
        }
        Eigen::MatrixXd q(g_len, static_cast<Eigen::Index>(probabilities.size()));
        for (Eigen::Index g = 0; g < g_len; ++g) {
            ParamTuple par{};
            for (int k = 0; k < k_params; ++k) par[k] = natural(g, k);
            for (std::size_t p = 0; p < probabilities.size(); ++p)
                q(g, static_cast<Eigen::Index>(p)) = quantile(fitted.spec.family, probabilities[p], par);
        }
        out.values.push_back(std::move(shown));
        out.quantiles.push_back(std::move(q));
    }
    return out;
}

// ---------------------------------------------------------------------------
// State relabeling

/// Returns the model with state a of the result equal to state perm[a] of
/// the input. Parameters, smoothing parameters, Hessian and a fixed initial
/// distribution are permuted consistently, as is the lambda trace; the
/// likelihood is unchanged.
inline FittedModel relabel_states(const FittedModel& fitted, const std::vector<int>& perm) {
    const int n = fitted.spec.n_states;
    if (static_cast<int>(perm.size()) != n) throw ConfigError("permutation size must equal number of states");
    FittedModel out = fitted;
    for (int k = 0; k < fitted.spec.num_params(); ++k)
        for (int a = 0; a < n; ++a)
            out.spec.state_formulas[static_cast<std::size_t>(k)][static_cast<std::size_t>(a)] =
                fitted.spec.state_formulas[static_cast<std::size_t>(k)][static_cast<std::size_t>(perm[static_cast<std::size_t>(a)])];
    for (int p = 0; p < fitted.spec.num_pairs(); ++p) {
        const auto [a, b] = pair_states(n, p);
        out.spec.transition_formulas[static_cast<std::size_t>(p)] =
            fitted.spec.transition_formulas[static_cast<std::size_t>(
                pair_index(n, perm[static_cast<std::size_t>(a)], perm[static_cast<std::size_t>(b)]))];
    }
    if (fitted.spec.initial.kind == InitialKind::Fixed)
        for (int a = 0; a < n; ++a)
            out.spec.initial.probs[static_cast<std::size_t>(a)] =
                fitted.spec.initial.probs[static_cast<std::size_t>(perm[static_cast<std::size_t>(a)])];

    const ParameterLayout old_layout = fitted.layout();
    const ParameterLayout new_layout = out.layout();
    std::vector<int> from(static_cast<std::size_t>(new_layout.size));
    std::vector<int> lambda_from(new_layout.penalties.size());
    auto map_predictor = [&](const PredictorLayout& dst, const PredictorLayout& src) {
        for (int c = 0; c < dst.size; ++c) from[static_cast<std::size_t>(dst.offset + c)] = src.offset + c;
        for (std::size_t s = 0; s < dst.smooths.size(); ++s)
            lambda_from[static_cast<std::size_t>(dst.smooths[s].penalty)] = src.smooths[s].penalty;
    };
    for (int a = 0; a < n; ++a)
        for (int k = 0; k < fitted.spec.num_params(); ++k)
            map_predictor(new_layout.state_predictor(a, k), old_layout.state_predictor(perm[static_cast<std::size_t>(a)], k));
    for (int p = 0; p < fitted.spec.num_pairs(); ++p) {
        const auto [a, b] = pair_states(n, p);
        map_predictor(new_layout.transition[static_cast<std::size_t>(p)],
                      old_layout.transition[static_cast<std::size_t>(
                          pair_index(n, perm[static_cast<std::size_t>(a)], perm[static_cast<std::size_t>(b)]))]);
    }
    for (std::size_t i = 0; i < from.size(); ++i) out.theta(static_cast<Eigen::Index>(i)) = fitted.theta(from[i]);
    if (fitted.hessian.size() > 0)
        for (std::size_t i = 0; i < from.size(); ++i)
            for (std::size_t j = 0; j < from.size(); ++j)
                out.hessian(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = fitted.hessian(from[i], from[j]);
    for (std::size_t p = 0; p < lambda_from.size() && !fitted.lambda.empty(); ++p)
        out.lambda[p] = fitted.lambda[static_cast<std::size_t>(lambda_from[p])];
    for (std::size_t k = 0; k < fitted.diagnostics.lambda_trace.size(); ++k)
        for (std::size_t p = 0; p < lambda_from.size(); ++p)
            out.diagnostics.lambda_trace[k][p] =
                fitted.diagnostics.lambda_trace[k][static_cast<std::size_t>(lambda_from[p])];
    return out;
}

/// Orders states by the intercept of the scale (sigma) predictor, ascending.
inline FittedModel canonicalize_states(const FittedModel& fitted) {
    const int n = fitted.spec.n_states;
    const ParameterLayout layout = fitted.layout();
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::stable_sort(perm.begin(), perm.end(), [&](int a, int b) {
        return fitted.theta(layout.state_predictor(a, 1).offset) < fitted.theta(layout.state_predictor(b, 1).offset);
    });
    return relabel_states(fitted, perm);
}

}  // namespace msgamlss

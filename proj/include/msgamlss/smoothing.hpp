#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "inference.hpp"
#include "likelihood.hpp"
#include "model.hpp"
#include "optimize.hpp"
#include "rng.hpp"

namespace msgamlss {

struct OptimizerConfig {
    double gradient_tolerance = 1e-6;
    int max_inner_iterations = 500;
    double lambda_tolerance = 1e-3;  // relative change
    int max_outer_iterations = 50;
    double initial_lambda = 1e4;
    double lambda_min = 1e-8;
    double lambda_max = 1e8;
    int multistart = 0;  // extra randomly perturbed starts for the first fit
    std::uint64_t seed = 1;

    void validate() const {
        if (!(gradient_tolerance > 0.0) || !(lambda_tolerance > 0.0))
            throw ConfigError("optimizer tolerances must be positive");
        if (!(lambda_min > 0.0) || !(lambda_min < lambda_max))
            throw ConfigError("lambda bounds must satisfy 0 < lambda_min < lambda_max");
        if (max_inner_iterations < 1 || max_outer_iterations < 1)
            throw ConfigError("iteration limits must be positive");
        if (!(initial_lambda >= lambda_min && initial_lambda <= lambda_max))
            throw ConfigError("initial lambda must lie within the lambda bounds");
    }
};

struct PenalizedFit {
    Eigen::VectorXd theta;
    double objective = 0.0;
    double gradient_norm = 0.0;
    int iterations = 0;
};

namespace detail {

inline std::string block_label_of(const ParameterLayout& layout, Eigen::Index index) {
    for (const auto* group : {&layout.state, &layout.transition})
        for (const auto& p : *group)
            if (index >= p.offset && index < p.offset + p.size) return p.label;
    return "?";
}

struct Objective {
    const Design* design;
    std::span<const double> lambda;

    std::optional<double> operator()(const Eigen::VectorXd& x, Eigen::VectorXd& g) const {
        try {
            const auto eval = penalized_objective<double>(
                *design, std::span<const double>(x.data(), static_cast<std::size_t>(x.size())), lambda, true);
            if (!std::isfinite(eval.value)) return std::nullopt;
            for (std::size_t i = 0; i < eval.gradient.size(); ++i) {
                if (!std::isfinite(eval.gradient[i])) return std::nullopt;
                g(static_cast<Eigen::Index>(i)) = eval.gradient[i];
            }
            return eval.value;
        } catch (const LikelihoodError&) {
            return std::nullopt;
        }
    }
};

}  // namespace detail

struct HessianResult {
    Eigen::MatrixXd matrix;
    bool corrected = false;
    double min_eigenvalue = 0.0;
};

/// Positive-definite version of a symmetric matrix: eigenvalues below
/// floor_ratio * max|eigenvalue| are raised to that floor.
inline HessianResult make_positive_definite(Eigen::MatrixXd h, double floor_ratio = 1e-12) {
    HessianResult r;
    h = 0.5 * (h + h.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(h);
    const Eigen::VectorXd ev = eig.eigenvalues();
    r.min_eigenvalue = ev.minCoeff();
    const double floor = floor_ratio * std::max(1.0, ev.cwiseAbs().maxCoeff());
    if (r.min_eigenvalue < floor) {
        r.corrected = true;
        const Eigen::VectorXd fixed = ev.cwiseMax(floor);
        h = eig.eigenvectors() * fixed.asDiagonal() * eig.eigenvectors().transpose();
        h = 0.5 * (h + h.transpose());
    }
    r.matrix = std::move(h);
    return r;
}

/// Hessian of the penalized negative log-likelihood at theta (exact, by
/// forward-mode differentiation of the analytic gradient), corrected to be
/// positive definite when necessary.
inline HessianResult penalized_hessian(const Design& d, std::span<const double> theta, std::span<const double> lambda) {
    return make_positive_definite(exact_hessian(d, theta, lambda));
}

/// Minimizes the penalized negative log-likelihood at fixed lambda.
/// `inverse_hessian`, when given, seeds the quasi-Newton approximation.
inline PenalizedFit fit_penalized(const Design& d, std::span<const double> lambda, Eigen::VectorXd theta_init,
                                  const OptimizerConfig& cfg,
                                  std::optional<Eigen::MatrixXd> inverse_hessian = std::nullopt) {
    for (double l : lambda)
        if (!(l >= 0.0)) throw ConfigError("smoothing parameters must be non-negative");
    for (Eigen::Index i = 0; i < theta_init.size(); ++i)
        if (!std::isfinite(theta_init(i)))
            throw NumericError("non-finite starting value in parameter block " +
                               detail::block_label_of(d.layout, i));
    const detail::Objective objective{&d, lambda};
    {
        Eigen::VectorXd g(theta_init.size());
        if (!objective(theta_init, g)) {
            Eigen::Index worst = 0;
            theta_init.cwiseAbs().maxCoeff(&worst);
            throw NumericError("penalized objective is not finite at the starting values (largest coefficient in "
                               "parameter block " + detail::block_label_of(d.layout, worst) + ")");
        }
    }
    BfgsOptions opt;
    opt.gradient_tolerance = cfg.gradient_tolerance;
    opt.max_iterations = cfg.max_inner_iterations;
    BfgsResult res = minimize_bfgs(objective, std::move(theta_init), opt, std::move(inverse_hessian));

    // Newton polish with the exact Hessian when the quasi-Newton iteration
    // stalls at rounding level before meeting the tolerance.
    int polish = 0;
    while (!res.converged && polish < 20 && std::isfinite(res.f)) {
        ++polish;
        const auto x = std::span<const double>(res.x.data(), static_cast<std::size_t>(res.x.size()));
        const Eigen::MatrixXd h = penalized_hessian(d, x, lambda).matrix;
        const Eigen::VectorXd step = -h.ldlt().solve(res.g);
        // with large lambda the penalty term carries rounding noise far above
        // eps |f|, so f comparisons alone cannot certify a Newton step
        double noise = 1e-12 * (1.0 + std::abs(res.f));
        for (std::size_t p = 0; p < lambda.size(); ++p) {
            const auto& block = d.layout.penalties[p];
            const Eigen::VectorXd b = res.x.segment(block.offset, block.size).cwiseAbs();
            noise += 1e-14 * lambda[p] * b.dot(d.penalty_matrices[p].cwiseAbs() * b);
        }
        double t = 1.0;
        bool moved = false;
        Eigen::VectorXd g_new(res.x.size());
        for (int b = 0; b < 30; ++b) {
            const Eigen::VectorXd x_new = res.x + t * step;
            const auto f_new = objective(x_new, g_new);
            if (f_new && (*f_new <= res.f + 1e-4 * t * res.g.dot(step) ||
                          (*f_new <= res.f + noise &&
                           g_new.lpNorm<Eigen::Infinity>() < res.g.lpNorm<Eigen::Infinity>()))) {
                res.x = x_new;
                res.f = *f_new;
                res.g = g_new;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        ++res.iterations;
        res.converged = res.g.lpNorm<Eigen::Infinity>() <= cfg.gradient_tolerance;
        if (!moved) break;
    }

    const double gnorm = res.g.size() ? res.g.lpNorm<Eigen::Infinity>() : 0.0;
    if (!res.converged)
        throw ConvergenceError("penalized fit did not reach gradient tolerance (|g|_inf = " + std::to_string(gnorm) +
                                   " after " + std::to_string(res.iterations) + " iterations)",
                               std::vector<double>(res.x.data(), res.x.data() + res.x.size()), gnorm);
    return {std::move(res.x), res.f, gnorm, res.iterations};
}

/// Starting values: state i gets the mean and sd of the i-th quantile band
/// of y as (link-scale) intercepts of its location and scale predictors; all
/// other coefficients start at zero except transition intercepts, which give
/// a TPM with 0.9 on the diagonal.
inline Eigen::VectorXd initial_parameters(const Design& d) {
    const int n = d.n_states();
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(d.layout.size);
    std::vector<double> sorted = d.y;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t len = sorted.size();
    double overall_mean = 0.0;
    for (double v : sorted) overall_mean += v;
    overall_mean /= static_cast<double>(len);
    double overall_var = 0.0;
    for (double v : sorted) overall_var += (v - overall_mean) * (v - overall_mean);
    const double overall_sd = len > 1 ? std::sqrt(overall_var / static_cast<double>(len - 1)) : 1.0;
    for (int i = 0; i < n; ++i) {
        const std::size_t lo = len * static_cast<std::size_t>(i) / static_cast<std::size_t>(n);
        const std::size_t hi = std::max(lo + 1, len * static_cast<std::size_t>(i + 1) / static_cast<std::size_t>(n));
        double mean = 0.0;
        for (std::size_t t = lo; t < hi; ++t) mean += sorted[t];
        mean /= static_cast<double>(hi - lo);
        double var = 0.0;
        for (std::size_t t = lo; t < hi; ++t) var += (sorted[t] - mean) * (sorted[t] - mean);
        double sd = hi - lo > 1 ? std::sqrt(var / static_cast<double>(hi - lo - 1)) : 0.0;
        if (!(sd > 1e-3 * overall_sd)) sd = overall_sd > 0.0 ? 0.1 * overall_sd : 1.0;
        const auto& links = d.spec.family.links;
        theta(d.layout.state_predictor(i, 0).offset) = links[0].forward(mean);
        theta(d.layout.state_predictor(i, 1).offset) = links[1].forward(sd);
    }
    if (n > 1) {
        const double off = std::log(0.1 / (n - 1) / 0.9);
        for (const auto& p : d.layout.transition) theta(p.offset) = off;
    }
    return theta;
}

/// Largest factor by which one outer iteration may move a lambda.
inline constexpr double kMaxLambdaStep = 1e3;

/// Largest log-scale move of one extrapolated lambda step.
inline constexpr double kMaxExtrapolation = 2.302585092994046;  // log(10)

/// One multiplicative smoothing-parameter update
/// lambda_new = lambda * (rank/lambda - tr(H^{-1} S)) / max(eps, b'Sb), limited
/// to a factor kMaxLambdaStep and clamped to the bounds. When the numerator is
/// lost in rounding (the term has no penalized degrees of freedom left) the
/// ratio carries no information and lambda is left where it is.
inline std::vector<double> update_lambda(const Design& d, const Eigen::VectorXd& theta, std::span<const double> lambda,
                                         const Eigen::MatrixXd& h_inverse, const OptimizerConfig& cfg) {
    constexpr double eps = 1e-10;
    std::vector<double> out(lambda.size());
    for (std::size_t p = 0; p < lambda.size(); ++p) {
        const auto& block = d.layout.penalties[p];
        const auto& s = d.penalty_matrices[p];
        const Eigen::VectorXd b = theta.segment(block.offset, block.size);
        const double bsb = b.dot(s * b);
        const double trace = (h_inverse.block(block.offset, block.offset, block.size, block.size) * s).trace();
        const double num = static_cast<double>(block.rank) / lambda[p] - trace;
        double next = lambda[p];
        if (num > 1e-8 * static_cast<double>(block.rank) / lambda[p])
            next = std::clamp(lambda[p] * num / std::max(eps, bsb), lambda[p] / kMaxLambdaStep, lambda[p] * kMaxLambdaStep);
        out[p] = std::clamp(next, cfg.lambda_min, cfg.lambda_max);
    }
    return out;
}

inline constexpr double kNullSpaceEdf = 0.05;

/// Effective degrees of freedom of the penalized part of term p:
/// rank - lambda tr(H^{-1} S).
inline double penalized_edf(const Design& d, const Eigen::MatrixXd& h_inverse, std::span<const double> lambda,
                            std::size_t p) {
    const auto& block = d.layout.penalties[p];
    const double trace =
        (h_inverse.block(block.offset, block.offset, block.size, block.size) * d.penalty_matrices[p]).trace();
    return static_cast<double>(block.rank) - lambda[p] * trace;
}

/// Curvature used by the lambda update: the likelihood part of the penalized
/// Hessian with negative eigenvalues set to zero, plus the penalty. Away from
/// a concave region the raw likelihood curvature can make the update
/// meaningless (negative effective degrees of freedom).
inline Eigen::MatrixXd update_curvature(const Design& d, const Eigen::MatrixXd& hessian, std::span<const double> lambda) {
    Eigen::MatrixXd penalty = Eigen::MatrixXd::Zero(hessian.rows(), hessian.cols());
    for (std::size_t p = 0; p < lambda.size(); ++p) {
        const auto& block = d.layout.penalties[p];
        penalty.block(block.offset, block.offset, block.size, block.size) = lambda[p] * d.penalty_matrices[p];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hessian - penalty);
    const Eigen::VectorXd ev = eig.eigenvalues().cwiseMax(0.0);
    const Eigen::MatrixXd likelihood = eig.eigenvectors() * ev.asDiagonal() * eig.eigenvectors().transpose();
    return make_positive_definite(likelihood + penalty).matrix;
}

struct SmoothnessStart {
    std::optional<Eigen::VectorXd> theta;
    std::optional<std::vector<double>> lambda;
};

/// Penalized fit with automatic smoothness selection: alternates warm-started
/// penalized fits and Laplace-REML-type lambda updates until the relative
/// lambda change drops below tolerance.
inline FittedModel select_smoothness(const ModelSpec& spec, const TimeSeriesFrame& data, const OptimizerConfig& cfg = {},
                                     const SmoothnessStart& start = {}) {
    cfg.validate();
    FittedModel fit;
    fit.spec = spec;
    fit.bases = BasisSet::build(spec, data);
    fit.reference = covariate_means(spec, data);
    fit.n_obs = data.size();
    const Design d = make_design(fit.spec, fit.bases, data);
    const std::size_t n_pen = d.layout.penalties.size();

    Eigen::VectorXd theta = start.theta ? *start.theta : initial_parameters(d);
    if (theta.size() != d.layout.size) throw ConfigError("starting parameter vector has the wrong length");
    std::vector<double> lambda = start.lambda ? *start.lambda : std::vector<double>(n_pen, cfg.initial_lambda);
    if (lambda.size() != n_pen) throw ConfigError("starting smoothing parameter vector has the wrong length");
    for (auto& l : lambda) l = std::clamp(l, cfg.lambda_min, cfg.lambda_max);

    auto& diag = fit.diagnostics;
    std::optional<Eigen::MatrixXd> hinv_seed;
    Eigen::MatrixXd hessian;
    std::vector<double> last_step(n_pen, 0.0);

    auto run_inner = [&](const Eigen::VectorXd& init, std::optional<Eigen::MatrixXd> seed) -> PenalizedFit {
        ++diag.inner_fits;
        try {
            PenalizedFit pf = fit_penalized(d, lambda, init, cfg, std::move(seed));
            ++diag.inner_fits_converged;
            return pf;
        } catch (const ConvergenceError& e) {
            diag.warnings.push_back(e.what());
            PenalizedFit pf;
            pf.theta = Eigen::Map<const Eigen::VectorXd>(e.best_theta().data(), static_cast<Eigen::Index>(e.best_theta().size()));
            pf.objective = penalized_nll(d, e.best_theta(), lambda);
            pf.gradient_norm = e.gradient_norm();
            pf.iterations = cfg.max_inner_iterations;
            return pf;
        }
    };

    for (int outer = 1; outer <= cfg.max_outer_iterations; ++outer) {
        diag.outer_iterations = outer;
        PenalizedFit pf = run_inner(theta, hinv_seed);
        if (outer == 1 && cfg.multistart > 0) {
            Rng rng(cfg.seed);
            for (int m = 0; m < cfg.multistart; ++m) {
                Eigen::VectorXd perturbed = theta;
                for (const auto* group : {&d.layout.state, &d.layout.transition})
                    for (const auto& p : *group) perturbed(p.offset) += 0.5 * rng.normal();
                try {
                    PenalizedFit alt = run_inner(perturbed, std::nullopt);
                    if (alt.objective < pf.objective) pf = std::move(alt);
                } catch (const Error& e) {
                    diag.warnings.push_back(std::string("multistart fit failed: ") + e.what());
                }
            }
        }
        diag.inner_iterations += pf.iterations;
        diag.gradient_norm = pf.gradient_norm;
        theta = pf.theta;
        const std::span<const double> th(theta.data(), static_cast<std::size_t>(theta.size()));
        const HessianResult hr = penalized_hessian(d, th, lambda);
        hessian = hr.matrix;
        if (hr.corrected)
            diag.warnings.push_back("penalized Hessian not positive definite at outer iteration " +
                                    std::to_string(outer) + " (min eigenvalue " + std::to_string(hr.min_eigenvalue) +
                                    "); eigenvalues floored");
        diag.lambda_trace.push_back(lambda);
        diag.converged = pf.gradient_norm <= cfg.gradient_tolerance;
        if (n_pen == 0) {
            diag.lambda_converged = true;
            break;
        }
        const Eigen::MatrixXd hinv = update_curvature(d, hessian, lambda)
                                         .llt()
                                         .solve(Eigen::MatrixXd::Identity(hessian.rows(), hessian.cols()));
        std::vector<double> next = update_lambda(d, theta, lambda, hinv, cfg);
        // A term with (almost) no penalized degrees of freedom left, before and
        // after the update, is in its null space: its lambda is heading to
        // infinity or drifting on rounding noise, and neither moves the fit.
        // Penalized edf scales roughly like 1/lambda there.
        std::vector<bool> null_space(n_pen);
        for (std::size_t p = 0; p < n_pen; ++p)
            null_space[p] = penalized_edf(d, hinv, lambda, p) * std::max(1.0, lambda[p] / next[p]) < kNullSpaceEdf;
        double change = 0.0;
        for (std::size_t p = 0; p < n_pen; ++p) {
            if (null_space[p]) continue;
            change = std::max(change, std::abs(next[p] - lambda[p]) / lambda[p]);
        }
        if (change < cfg.lambda_tolerance) {
            diag.lambda_converged = true;
            break;
        }
        if (outer == cfg.max_outer_iterations) break;  // keep lambda consistent with theta
        // Fellner-Schall creeps when a lambda moves the same way many times in
        // a row; extrapolate such runs geometrically on the log scale. The
        // fixed point is unchanged since convergence is judged on the plain
        // update above.
        for (std::size_t p = 0; p < n_pen; ++p) {
            double& prev = last_step[p];
            if (null_space[p]) {
                prev = 0.0;
                continue;
            }
            const double step = std::log(next[p] / lambda[p]);
            if (step * prev > 0.0) {
                const double ratio = step / prev;
                const double factor = ratio < 0.9 ? 1.0 / (1.0 - ratio) : 10.0;
                const double jump = std::clamp(factor * step, -kMaxExtrapolation, kMaxExtrapolation);
                next[p] = std::clamp(lambda[p] * std::exp(jump), cfg.lambda_min, cfg.lambda_max);
                prev = 0.0;  // take the next plain step before extrapolating again
            } else {
                prev = step;
            }
        }
        // Seed the next quasi-Newton run with the Hessian adjusted to the new lambda.
        Eigen::MatrixXd seed = hessian;
        for (std::size_t p = 0; p < n_pen; ++p) {
            const auto& block = d.layout.penalties[p];
            seed.block(block.offset, block.offset, block.size, block.size) += (next[p] - lambda[p]) * d.penalty_matrices[p];
        }
        const HessianResult seeded = make_positive_definite(seed);
        hinv_seed = seeded.matrix.llt().solve(Eigen::MatrixXd::Identity(seed.rows(), seed.cols()));
        lambda = std::move(next);
    }
    for (std::size_t p = 0; p < n_pen; ++p)
        if (lambda[p] <= cfg.lambda_min || lambda[p] >= cfg.lambda_max)
            diag.warnings.push_back("smoothing parameter for " + d.layout.penalties[p].label + " at its bound (" +
                                    std::to_string(lambda[p]) + ")");
    if (!diag.lambda_converged)
        diag.warnings.push_back("smoothing parameters did not converge within " +
                                std::to_string(cfg.max_outer_iterations) + " outer iterations");

    fit.theta = theta;
    fit.lambda = lambda;
    fit.hessian = hessian;
    const std::span<const double> th(theta.data(), static_cast<std::size_t>(theta.size()));
    fit.log_likelihood = log_likelihood(d, th);
    fit.penalized_objective = penalized_nll(d, th, lambda);
    return canonicalize_states(fit);
}

}  // namespace msgamlss

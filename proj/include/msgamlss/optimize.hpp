#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <concepts>
#include <limits>
#include <optional>

namespace msgamlss {

struct BfgsOptions {
    double gradient_tolerance = 1e-6;  // on the infinity norm
    int max_iterations = 500;
    double armijo = 1e-4;
    int max_backtracks = 40;
    int stall_iterations = 50;  // give up after this many steps without progress beyond rounding
};

struct BfgsResult {
    Eigen::VectorXd x;
    double f = 0.0;
    Eigen::VectorXd g;
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
    bool line_search_failed = false;
    bool stalled = false;
};

/// Objective callback: returns f and fills g, or std::nullopt when the
/// objective is not finite at x (the step is then rejected).
template <class Fn>
concept ValueAndGradient = requires(Fn fn, const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    { fn(x, g) } -> std::convertible_to<std::optional<double>>;
};

/// BFGS on the inverse Hessian with a backtracking (Armijo) line search.
/// Near the optimum, where f differences fall below rounding level, a step is
/// also accepted if f does not increase beyond rounding and the gradient
/// norm decreases.
template <ValueAndGradient Fn>
BfgsResult minimize_bfgs(Fn&& fn, Eigen::VectorXd x0, const BfgsOptions& opt,
                         std::optional<Eigen::MatrixXd> inverse_hessian = std::nullopt) {
    const Eigen::Index n = x0.size();
    BfgsResult r;
    r.x = std::move(x0);
    r.g.resize(n);
    auto f0 = fn(r.x, r.g);
    ++r.evaluations;
    if (!f0) {
        r.f = std::numeric_limits<double>::infinity();
        r.line_search_failed = true;
        return r;
    }
    r.f = *f0;
    bool scaled = inverse_hessian.has_value();
    Eigen::MatrixXd hinv = inverse_hessian ? std::move(*inverse_hessian) : Eigen::MatrixXd::Identity(n, n);

    Eigen::VectorXd x_new(n);
    Eigen::VectorXd g_new(n);
    int resets = 0;
    double f_mark = r.f;
    int since_progress = 0;
    while (r.iterations < opt.max_iterations) {
        if (r.g.lpNorm<Eigen::Infinity>() <= opt.gradient_tolerance) {
            r.converged = true;
            return r;
        }
        Eigen::VectorXd dir = -hinv * r.g;
        double slope = r.g.dot(dir);
        if (!(slope < 0.0)) {
            hinv.setIdentity();
            dir = -r.g;
            slope = r.g.dot(dir);
        }
        // First steps with an unscaled identity can be wild; cap their length.
        double step = 1.0;
        if (!scaled) step = std::min(1.0, 1.0 / dir.lpNorm<Eigen::Infinity>());

        const double noise = 1e-12 * (1.0 + std::abs(r.f));
        const double gnorm = r.g.lpNorm<Eigen::Infinity>();
        bool accepted = false;
        double f_new = 0.0;
        for (int b = 0; b < opt.max_backtracks; ++b) {
            x_new = r.x + step * dir;
            auto fv = fn(x_new, g_new);
            ++r.evaluations;
            if (fv && std::isfinite(*fv)) {
                f_new = *fv;
                if (f_new <= r.f + opt.armijo * step * slope ||
                    (f_new <= r.f + noise && g_new.lpNorm<Eigen::Infinity>() < gnorm)) {
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        ++r.iterations;
        if (!accepted) {
            if (resets++ < 2) {
                hinv.setIdentity();
                scaled = false;
                continue;
            }
            r.line_search_failed = true;
            return r;
        }
        const Eigen::VectorXd s = x_new - r.x;
        const Eigen::VectorXd y = g_new - r.g;
        r.x = x_new;
        r.g = g_new;
        r.f = f_new;
        if (f_mark - r.f > 1e-10 * (1.0 + std::abs(r.f))) {
            f_mark = r.f;
            since_progress = 0;
        } else if (++since_progress >= opt.stall_iterations) {
            r.stalled = true;
            return r;
        }
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            if (!scaled) {
                hinv = Eigen::MatrixXd::Identity(n, n) * (sy / y.squaredNorm());
                scaled = true;
            }
            const double rho = 1.0 / sy;
            const Eigen::VectorXd hy = hinv * y;
            hinv += ((sy + y.dot(hy)) * rho * rho) * (s * s.transpose()) - rho * (hy * s.transpose() + s * hy.transpose());
        }
    }
    r.converged = r.g.lpNorm<Eigen::Infinity>() <= opt.gradient_tolerance;
    return r;
}

}  // namespace msgamlss

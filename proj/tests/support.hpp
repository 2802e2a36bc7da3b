#pragma once

// Shared fixtures and independent oracles for the test suite.

#include <msgamlss/inference.hpp>
#include <msgamlss/likelihood.hpp>
#include <msgamlss/model.hpp>
#include <msgamlss/rng.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <span>
#include <vector>

namespace testing_support {

using namespace msgamlss;

inline std::span<const double> as_span(const Eigen::VectorXd& v) {
    return {v.data(), static_cast<std::size_t>(v.size())};
}

/// Frame with covariates x, z ~ U(-1, 1) and a response that is roughly
/// bimodal so that random parameters give sensible likelihoods.
inline TimeSeriesFrame random_frame(Rng& rng, std::size_t t_len) {
    TimeSeriesFrame f;
    std::vector<double> x(t_len), z(t_len);
    f.response.resize(t_len);
    for (std::size_t t = 0; t < t_len; ++t) {
        x[t] = rng.uniform(-1.0, 1.0);
        z[t] = rng.uniform(-1.0, 1.0);
        f.response[t] = (rng.uniform() < 0.5 ? -1.0 : 1.0) + 0.8 * rng.normal() + 0.3 * x[t];
    }
    f.add_column("x", std::move(x));
    f.add_column("z", std::move(z));
    return f;
}

/// Every predictor gets linear(x) + smooth(x); transitions get linear(z) + smooth(z).
inline ModelSpec rich_spec(int n_states, Family family, InitialDistribution init = {}, int k = 6) {
    Formula fx;
    fx.linear = {"x"};
    fx.smooths.push_back({"x", k, 3, 2});
    Formula fz;
    fz.linear = {"z"};
    fz.smooths.push_back({"z", k, 3, 2});
    std::vector<Formula> per(static_cast<std::size_t>(family.num_params()), fx);
    return ModelSpec::shared(n_states, std::move(family), per, fz, std::move(init));
}

struct Instance {
    ModelSpec spec;
    TimeSeriesFrame frame;
    BasisSet bases;
    Design design;
    Eigen::VectorXd theta;
    std::vector<double> lambda;
};

/// Random parameters of moderate size; intercepts chosen so that every
/// state has plausible densities and transition rows are not degenerate.
inline Instance random_instance(Rng& rng, const ModelSpec& spec, std::size_t t_len, double scale = 0.3) {
    Instance in;
    in.spec = spec;
    in.frame = random_frame(rng, t_len);
    in.bases = BasisSet::build(spec, in.frame);
    in.design = make_design(spec, in.bases, in.frame);
    in.theta.resize(in.design.layout.size);
    for (Eigen::Index i = 0; i < in.theta.size(); ++i) in.theta(i) = scale * rng.normal();
    for (const auto& p : in.design.layout.transition) in.theta(p.offset) += -1.5;
    for (std::size_t p = 0; p < in.design.layout.penalties.size(); ++p) in.lambda.push_back(rng.uniform(0.1, 5.0));
    return in;
}

/// log sum over every state path of delta(s1) f(y1|s1) prod gamma f(y_t|s_t).
inline double brute_force_log_likelihood(const ModelQuantities& q) {
    const auto t_len = q.log_density.rows();
    const auto n = q.log_density.cols();
    std::vector<int> path(static_cast<std::size_t>(t_len), 0);
    double total = 0.0;
    while (true) {
        double p = q.delta(path[0]) * std::exp(q.log_density(0, path[0]));
        for (Eigen::Index t = 1; t < t_len; ++t)
            p *= q.gammas[static_cast<std::size_t>(t - 1)](path[static_cast<std::size_t>(t - 1)], path[static_cast<std::size_t>(t)]) *
                 std::exp(q.log_density(t, path[static_cast<std::size_t>(t)]));
        total += p;
        Eigen::Index t = 0;
        while (t < t_len && ++path[static_cast<std::size_t>(t)] == n) path[static_cast<std::size_t>(t++)] = 0;
        if (t == t_len) break;
    }
    return std::log(total);
}

inline double path_log_probability(const ModelQuantities& q, const std::vector<int>& path) {
    double lp = std::log(q.delta(path[0])) + q.log_density(0, path[0]);
    for (std::size_t t = 1; t < path.size(); ++t)
        lp += std::log(q.gammas[t - 1](path[t - 1], path[t])) + q.log_density(static_cast<Eigen::Index>(t), path[t]);
    return lp;
}

/// Exhaustive argmax over all state paths.
inline std::vector<int> brute_force_viterbi(const ModelQuantities& q) {
    const auto t_len = static_cast<std::size_t>(q.log_density.rows());
    const auto n = static_cast<int>(q.log_density.cols());
    std::vector<int> path(t_len, 0), best;
    double best_lp = -INFINITY;
    while (true) {
        const double lp = path_log_probability(q, path);
        if (lp > best_lp) {
            best_lp = lp;
            best = path;
        }
        std::size_t t = 0;
        while (t < t_len && ++path[t] == n) path[t++] = 0;
        if (t == t_len) break;
    }
    return best;
}

/// Central differences with step 1e-5 (1 + |x_i|).
inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x) {
    Eigen::VectorXd g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double h = 1e-5 * (1.0 + std::abs(x(i)));
        Eigen::VectorXd a = x, b = x;
        a(i) += h;
        b(i) -= h;
        g(i) = (f(a) - f(b)) / (2.0 * h);
    }
    return g;
}

inline double relative_inf_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return (a - b).lpNorm<Eigen::Infinity>() / std::max(1.0, b.lpNorm<Eigen::Infinity>());
}

/// Adaptive Simpson quadrature.
inline double integrate(const std::function<double(double)>& f, double a, double b, double tol = 1e-11, int depth = 50) {
    std::function<double(double, double, double, double, double, double, int)> rec =
        [&](double lo, double hi, double flo, double fmid, double fhi, double whole, int d) {
            const double mid = 0.5 * (lo + hi);
            const double lm = 0.5 * (lo + mid), rm = 0.5 * (mid + hi);
            const double flm = f(lm), frm = f(rm);
            const double left = (mid - lo) / 6.0 * (flo + 4.0 * flm + fmid);
            const double right = (hi - mid) / 6.0 * (fmid + 4.0 * frm + fhi);
            if (d <= 0 || std::abs(left + right - whole) <= 15.0 * tol) return left + right + (left + right - whole) / 15.0;
            return rec(lo, mid, flo, flm, fmid, left, d - 1) + rec(mid, hi, fmid, frm, fhi, right, d - 1);
        };
    const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    return rec(a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), depth);
}

}  // namespace testing_support

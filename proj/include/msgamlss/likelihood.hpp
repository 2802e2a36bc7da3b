#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "dual.hpp"
#include "error.hpp"
#include "families.hpp"
#include "markov.hpp"
#include "model.hpp"

namespace msgamlss {

template <class Scalar>
struct ObjectiveEval {
    Scalar value{};
    std::vector<Scalar> gradient;  // empty unless requested
};

namespace detail {

template <class Scalar>
Scalar row_dot(const Design::RowMatrix& x, Eigen::Index t, std::span<const Scalar> theta, int offset) {
    const double* row = x.data() + t * x.cols();
    Scalar acc = row[0] * theta[static_cast<std::size_t>(offset)];
    for (Eigen::Index c = 1; c < x.cols(); ++c) acc += row[c] * theta[static_cast<std::size_t>(offset + c)];
    return acc;
}

template <class Scalar>
void row_axpy(const Design::RowMatrix& x, Eigen::Index t, const Scalar& weight, std::vector<Scalar>& grad, int offset) {
    const double* row = x.data() + t * x.cols();
    for (Eigen::Index c = 0; c < x.cols(); ++c) grad[static_cast<std::size_t>(offset + c)] += row[c] * weight;
}

// Solves a x = b for a small dense system with partial pivoting.
template <class Scalar>
std::vector<Scalar> small_solve(std::vector<Scalar> a, std::vector<Scalar> b, int n) {
    for (int col = 0; col < n; ++col) {
        int piv = col;
        for (int r = col + 1; r < n; ++r)
            if (std::abs(value_of(a[r * n + col])) > std::abs(value_of(a[piv * n + col]))) piv = r;
        if (std::abs(value_of(a[piv * n + col])) < 1e-14)
            throw NumericError("stationary distribution is not unique (singular system)");
        if (piv != col) {
            for (int c = 0; c < n; ++c) std::swap(a[col * n + c], a[piv * n + c]);
            std::swap(b[col], b[piv]);
        }
        for (int r = col + 1; r < n; ++r) {
            const Scalar f = a[r * n + col] / a[col * n + col];
            for (int c = col; c < n; ++c) a[r * n + c] -= f * a[col * n + c];
            b[r] -= f * b[col];
        }
    }
    std::vector<Scalar> x(static_cast<std::size_t>(n));
    for (int r = n - 1; r >= 0; --r) {
        Scalar acc = b[r];
        for (int c = r + 1; c < n; ++c) acc -= a[r * n + c] * x[c];
        x[r] = acc / a[r * n + r];
    }
    return x;
}

}  // namespace detail

/// Negative log-likelihood by the scaled forward algorithm and, on request,
/// its gradient from the matching scaled backward pass. The transition
/// matrix taking the chain from t to t+1 is built from covariate row t.
template <class Scalar>
ObjectiveEval<Scalar> negative_log_likelihood(const Design& d, std::span<const Scalar> theta, bool with_gradient) {
    using std::exp;
    using std::log;
    const int n = d.n_states();
    const int k_params = d.n_params();
    const auto t_len = static_cast<Eigen::Index>(d.length());
    const auto& family = d.spec.family;
    const bool stationary_init = d.spec.initial.kind == InitialKind::Stationary;
    const auto idx = [n](Eigen::Index t, int i) { return static_cast<std::size_t>(t * n + i); };

    // State-dependent log densities, shifted per time step by their maximum.
    std::vector<Scalar> ftilde(static_cast<std::size_t>(t_len * n));
    std::vector<Scalar> shift(static_cast<std::size_t>(t_len));
    std::vector<Scalar> scores;
    if (with_gradient) scores.resize(static_cast<std::size_t>(t_len * n * k_params));
    {
        std::vector<Scalar> logf(static_cast<std::size_t>(n));
        std::array<Scalar, kMaxDistParams> eta{};
        for (Eigen::Index t = 0; t < t_len; ++t) {
            for (int i = 0; i < n; ++i) {
                for (int k = 0; k < k_params; ++k) {
                    const auto p = static_cast<std::size_t>(i * k_params + k);
                    eta[k] = detail::row_dot(d.state_x[p], t, theta, d.layout.state[p].offset);
                }
                const auto de = log_density_eta<Scalar>(family, d.y[static_cast<std::size_t>(t)],
                                                        std::span<const Scalar>(eta.data(), k_params));
                logf[i] = de.log_density;
                if (with_gradient)
                    for (int k = 0; k < k_params; ++k) scores[idx(t, i) * k_params + k] = de.score[k];
            }
            int best = 0;
            for (int i = 1; i < n; ++i)
                if (value_of(logf[i]) > value_of(logf[best])) best = i;
            shift[t] = logf[best];
            for (int i = 0; i < n; ++i) ftilde[idx(t, i)] = exp(logf[i] - shift[t]);
        }
    }

    // Transition matrices.
    const Eigen::Index n_gamma = std::max<Eigen::Index>(t_len - 1, stationary_init ? 1 : 0);
    const auto gidx = [n](Eigen::Index t, int i, int j) { return static_cast<std::size_t>((t * n + i) * n + j); };
    std::vector<Scalar> gamma(static_cast<std::size_t>(n_gamma * n * n));
    std::vector<char> clipped(gamma.size(), 0);
    {
        std::vector<Scalar> eta(static_cast<std::size_t>(n));
        for (Eigen::Index t = 0; t < n_gamma; ++t) {
            for (int i = 0; i < n; ++i) {
                Scalar mx(0.0);
                for (int j = 0; j < n; ++j) {
                    if (j == i) {
                        eta[j] = Scalar(0.0);
                        continue;
                    }
                    const auto p = static_cast<std::size_t>(pair_index(n, i, j));
                    eta[j] = detail::row_dot(d.transition_x[p], t, theta, d.layout.transition[p].offset);
                    if (value_of(eta[j]) > kEtaClip || value_of(eta[j]) < -kEtaClip) {
                        eta[j] = Scalar(std::clamp(value_of(eta[j]), -kEtaClip, kEtaClip));
                        clipped[gidx(t, i, j)] = 1;
                    }
                    if (value_of(eta[j]) > value_of(mx)) mx = eta[j];
                }
                Scalar total(0.0);
                for (int j = 0; j < n; ++j) {
                    gamma[gidx(t, i, j)] = exp(eta[j] - mx);
                    total += gamma[gidx(t, i, j)];
                }
                for (int j = 0; j < n; ++j) gamma[gidx(t, i, j)] /= total;
            }
        }
    }

    // Initial distribution.
    std::vector<Scalar> delta(static_cast<std::size_t>(n));
    std::vector<Scalar> stationary_system;  // A = I - Gamma_0 + U, row-major
    switch (d.spec.initial.kind) {
        case InitialKind::Uniform:
            for (auto& v : delta) v = Scalar(1.0 / n);
            break;
        case InitialKind::Fixed:
            for (int i = 0; i < n; ++i) delta[i] = Scalar(d.spec.initial.probs[static_cast<std::size_t>(i)]);
            break;
        case InitialKind::Stationary: {
            if (n == 1) {
                delta[0] = Scalar(1.0);
                break;
            }
            stationary_system.resize(static_cast<std::size_t>(n * n));
            std::vector<Scalar> at(static_cast<std::size_t>(n * n));
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) {
                    const Scalar a = (i == j ? 1.0 : 0.0) - gamma[gidx(0, i, j)] + 1.0;
                    stationary_system[static_cast<std::size_t>(i * n + j)] = a;
                    at[static_cast<std::size_t>(j * n + i)] = a;
                }
            delta = detail::small_solve<Scalar>(at, std::vector<Scalar>(static_cast<std::size_t>(n), Scalar(1.0)), n);
            break;
        }
    }

    // Scaled forward pass: phi_t = alpha_t / (alpha_t 1').
    std::vector<Scalar> phi(static_cast<std::size_t>(t_len * n));
    std::vector<Scalar> scale(static_cast<std::size_t>(t_len));
    Scalar loglik(0.0);
    for (Eigen::Index t = 0; t < t_len; ++t) {
        Scalar total(0.0);
        for (int j = 0; j < n; ++j) {
            Scalar prior(0.0);
            if (t == 0) {
                prior = delta[j];
            } else {
                for (int i = 0; i < n; ++i) prior += phi[idx(t - 1, i)] * gamma[gidx(t - 1, i, j)];
            }
            phi[idx(t, j)] = prior * ftilde[idx(t, j)];
            total += phi[idx(t, j)];
        }
        if (!(value_of(total) > 0.0) || !std::isfinite(value_of(total)) || !std::isfinite(value_of(shift[t])))
            throw LikelihoodError("zero or non-finite total density at time index " + std::to_string(t),
                                  static_cast<std::size_t>(t));
        for (int j = 0; j < n; ++j) phi[idx(t, j)] /= total;
        scale[t] = total;
        loglik += log(total) + shift[t];
    }

    ObjectiveEval<Scalar> out;
    out.value = -loglik;
    if (!with_gradient) return out;

    // Scaled backward pass.
    std::vector<Scalar> beta(static_cast<std::size_t>(t_len * n));
    for (int i = 0; i < n; ++i) beta[idx(t_len - 1, i)] = Scalar(1.0);
    for (Eigen::Index t = t_len - 2; t >= 0; --t) {
        for (int i = 0; i < n; ++i) {
            Scalar acc(0.0);
            for (int j = 0; j < n; ++j)
                acc += gamma[gidx(t, i, j)] * ftilde[idx(t + 1, j)] * beta[idx(t + 1, j)];
            beta[idx(t, i)] = acc / scale[t + 1];
        }
    }

    std::vector<Scalar> grad(static_cast<std::size_t>(d.layout.size), Scalar(0.0));

    // State-dependent predictors: d l / d eta_{t,i,k} = u_t(i) * score.
    for (Eigen::Index t = 0; t < t_len; ++t) {
        for (int i = 0; i < n; ++i) {
            const Scalar u = phi[idx(t, i)] * beta[idx(t, i)];
            for (int k = 0; k < k_params; ++k) {
                const auto p = static_cast<std::size_t>(i * k_params + k);
                detail::row_axpy(d.state_x[p], t, u * scores[idx(t, i) * k_params + k], grad, d.layout.state[p].offset);
            }
        }
    }

    // Transition predictors: d l / d eta_ij = xi_t(i,j) - gamma_t(i,j) u_t(i).
    std::vector<Scalar> g_eta(static_cast<std::size_t>(n * n));
    for (Eigen::Index t = 0; t < n_gamma; ++t) {
        std::fill(g_eta.begin(), g_eta.end(), Scalar(0.0));
        if (t + 1 < t_len) {
            for (int i = 0; i < n; ++i) {
                const Scalar u = phi[idx(t, i)] * beta[idx(t, i)];
                for (int j = 0; j < n; ++j) {
                    if (j == i) continue;
                    const Scalar xi = phi[idx(t, i)] * gamma[gidx(t, i, j)] * ftilde[idx(t + 1, j)] *
                                      beta[idx(t + 1, j)] / scale[t + 1];
                    g_eta[static_cast<std::size_t>(i * n + j)] = xi - gamma[gidx(t, i, j)] * u;
                }
            }
        }
        if (t == 0 && stationary_init && n > 1) {
            // delta A = 1  =>  d l / d Gamma_ij = delta_i (A^{-1} g)_j with g = d l / d delta.
            std::vector<Scalar> g(static_cast<std::size_t>(n));
            for (int i = 0; i < n; ++i) g[i] = ftilde[idx(0, i)] * beta[idx(0, i)] / scale[0];
            const auto h = detail::small_solve<Scalar>(stationary_system, g, n);
            for (int i = 0; i < n; ++i) {
                Scalar row_mean(0.0);
                for (int l = 0; l < n; ++l) row_mean += delta[i] * h[l] * gamma[gidx(0, i, l)];
                for (int j = 0; j < n; ++j) {
                    if (j == i) continue;
                    g_eta[static_cast<std::size_t>(i * n + j)] += gamma[gidx(0, i, j)] * (delta[i] * h[j] - row_mean);
                }
            }
        }
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                if (j == i || clipped[gidx(t, i, j)]) continue;
                const auto p = static_cast<std::size_t>(pair_index(n, i, j));
                detail::row_axpy(d.transition_x[p], t, g_eta[static_cast<std::size_t>(i * n + j)], grad,
                                 d.layout.transition[p].offset);
            }
    }

    for (auto& g : grad) g = -g;
    out.gradient = std::move(grad);
    return out;
}

/// Adds 0.5 * sum_p lambda_p b_p' S_p b_p (and its gradient) to `eval`.
template <class Scalar>
void add_penalty(const Design& d, std::span<const Scalar> theta, std::span<const double> lambda,
                 ObjectiveEval<Scalar>& eval) {
    if (lambda.size() != d.layout.penalties.size())
        throw ConfigError("expected " + std::to_string(d.layout.penalties.size()) + " smoothing parameters, got " +
                          std::to_string(lambda.size()));
    for (std::size_t p = 0; p < lambda.size(); ++p) {
        if (!(lambda[p] >= 0.0)) throw ConfigError("smoothing parameters must be non-negative");
        const auto& block = d.layout.penalties[p];
        const auto& s = d.penalty_matrices[p];
        for (int a = 0; a < block.size; ++a) {
            Scalar sb(0.0);
            for (int b = 0; b < block.size; ++b) sb += s(a, b) * theta[static_cast<std::size_t>(block.offset + b)];
            eval.value += 0.5 * lambda[p] * theta[static_cast<std::size_t>(block.offset + a)] * sb;
            if (!eval.gradient.empty()) eval.gradient[static_cast<std::size_t>(block.offset + a)] += lambda[p] * sb;
        }
    }
}

template <class Scalar>
ObjectiveEval<Scalar> penalized_objective(const Design& d, std::span<const Scalar> theta,
                                          std::span<const double> lambda, bool with_gradient) {
    if (theta.size() != static_cast<std::size_t>(d.layout.size))
        throw ConfigError("parameter vector has " + std::to_string(theta.size()) + " entries, expected " +
                          std::to_string(d.layout.size));
    auto eval = negative_log_likelihood<Scalar>(d, theta, with_gradient);
    add_penalty<Scalar>(d, theta, lambda, eval);
    return eval;
}

/// Exact Hessian of the penalized objective: column j is the directional
/// derivative of the analytic gradient along e_j, evaluated with dual numbers.
inline Eigen::MatrixXd exact_hessian(const Design& d, std::span<const double> theta, std::span<const double> lambda) {
    const auto dim = static_cast<Eigen::Index>(theta.size());
    Eigen::MatrixXd h(dim, dim);
    std::vector<Dual> td(theta.begin(), theta.end());
    for (Eigen::Index j = 0; j < dim; ++j) {
        td[static_cast<std::size_t>(j)].d = 1.0;
        const auto eval = penalized_objective<Dual>(d, td, lambda, true);
        for (Eigen::Index i = 0; i < dim; ++i) h(i, j) = eval.gradient[static_cast<std::size_t>(i)].d;
        td[static_cast<std::size_t>(j)].d = 0.0;
    }
    return 0.5 * (h + h.transpose());
}

/// Per-time model quantities on the double path (for decoding, residuals
/// and diagnostics).
struct ModelQuantities {
    Eigen::MatrixXd log_density;           // T x N
    std::vector<ParamTuple> params;        // T * N natural-scale parameters, row-major
    std::vector<Eigen::MatrixXd> gammas;   // T - 1 matrices; gammas[t] takes t -> t+1
    Eigen::RowVectorXd delta;              // initial distribution
};

inline ModelQuantities model_quantities(const Design& d, std::span<const double> theta) {
    const int n = d.n_states();
    const int k_params = d.n_params();
    const auto t_len = static_cast<Eigen::Index>(d.length());
    const auto& family = d.spec.family;
    ModelQuantities q;
    q.log_density.resize(t_len, n);
    q.params.resize(static_cast<std::size_t>(t_len * n));
    for (Eigen::Index t = 0; t < t_len; ++t)
        for (int i = 0; i < n; ++i) {
            ParamTuple par{};
            for (int k = 0; k < k_params; ++k) {
                const auto p = static_cast<std::size_t>(i * k_params + k);
                par[k] = family.links[k].inverse(detail::row_dot<double>(d.state_x[p], t, theta, d.layout.state[p].offset));
            }
            q.params[static_cast<std::size_t>(t * n + i)] = par;
            q.log_density(t, i) = log_density(family, d.y[static_cast<std::size_t>(t)], par);
        }
    const Eigen::Index n_gamma = std::max<Eigen::Index>(t_len - 1, 1);
    for (Eigen::Index t = 0; t < n_gamma; ++t) {
        Eigen::MatrixXd eta = Eigen::MatrixXd::Zero(n, n);
        for (int p = 0; p < d.spec.num_pairs(); ++p) {
            const auto [i, j] = pair_states(n, p);
            eta(i, j) = detail::row_dot<double>(d.transition_x[static_cast<std::size_t>(p)], t, theta,
                                                d.layout.transition[static_cast<std::size_t>(p)].offset);
        }
        q.gammas.push_back(tpm_from_eta(eta));
    }
    switch (d.spec.initial.kind) {
        case InitialKind::Uniform: q.delta = Eigen::RowVectorXd::Constant(n, 1.0 / n); break;
        case InitialKind::Fixed:
            q.delta = Eigen::Map<const Eigen::RowVectorXd>(d.spec.initial.probs.data(), n);
            break;
        case InitialKind::Stationary: q.delta = stationary(q.gammas.front()); break;
    }
    if (t_len == 1) q.gammas.clear();
    return q;
}

/// Standardized forward variables (rows sum to one) and the log-likelihood.
struct FilterResult {
    Eigen::MatrixXd phi;        // T x N
    Eigen::MatrixXd predicted;  // T x N one-step-ahead state probabilities
    double log_likelihood = 0.0;
};

inline FilterResult forward_filter(const ModelQuantities& q) {
    const auto t_len = q.log_density.rows();
    const auto n = q.log_density.cols();
    FilterResult r;
    r.phi.resize(t_len, n);
    r.predicted.resize(t_len, n);
    for (Eigen::Index t = 0; t < t_len; ++t) {
        const Eigen::RowVectorXd prior =
            t == 0 ? Eigen::RowVectorXd(q.delta) : Eigen::RowVectorXd(r.phi.row(t - 1) * q.gammas[static_cast<std::size_t>(t - 1)]);
        r.predicted.row(t) = prior / prior.sum();
        const double m = q.log_density.row(t).maxCoeff();
        const Eigen::RowVectorXd a = prior.array() * (q.log_density.row(t).array() - m).exp();
        const double total = a.sum();
        if (!(total > 0.0) || !std::isfinite(m))
            throw LikelihoodError("zero or non-finite total density at time index " + std::to_string(t),
                                  static_cast<std::size_t>(t));
        r.phi.row(t) = a / total;
        r.log_likelihood += std::log(total) + m;
    }
    return r;
}

}  // namespace msgamlss

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "error.hpp"
#include "families.hpp"
#include "markov.hpp"
#include "model.hpp"
#include "rng.hpp"

namespace msgamlss {

struct CovariateGenerator {
    std::string name;
    std::function<double(Rng&)> draw;

    static CovariateGenerator uniform(std::string name, double lo = -1.0, double hi = 1.0) {
        return {std::move(name), [lo, hi](Rng& rng) { return rng.uniform(lo, hi); }};
    }
};

/// Data-generating process for a non-homogeneous MS-GAMLSS.
struct DGPSpec {
    int n_states = 2;
    Family family = Family::normal();
    std::vector<double> initial;  // delta^(1)
    /// eta_{i,j}(z) for i != j (0-based states).
    std::function<double(int, int, const CovariateRow&)> transition_eta;
    /// Natural-scale parameters (mu, sigma[, nu]) of state i at covariates x.
    std::function<ParamTuple(int, const CovariateRow&)> state_params;
    std::vector<CovariateGenerator> covariates;
    std::size_t length = 4000;
    std::uint64_t seed = 1;
    std::string response_name = "y";
};

struct Simulation {
    TimeSeriesFrame frame;
    std::vector<int> states;  // 0-based true states
};

/// Covariates are drawn i.i.d. per time step. The state at t+1 is drawn from
/// row S_t of the TPM built from the covariates at t.
inline Simulation simulate(const DGPSpec& dgp) {
    if (dgp.length < 1) throw ConfigError("simulation length must be >= 1");
    if (static_cast<int>(dgp.initial.size()) != dgp.n_states)
        throw ConfigError("initial distribution must have one entry per state");
    Rng rng(dgp.seed);
    Simulation sim;
    sim.frame.response_name = dgp.response_name;
    const std::size_t t_len = dgp.length;
    std::vector<std::vector<double>> cols(dgp.covariates.size(), std::vector<double>(t_len));
    sim.frame.response.resize(t_len);
    sim.states.resize(t_len);

    auto draw_index = [&](const auto& probs) {
        const double u = rng.uniform();
        double acc = 0.0;
        for (int i = 0; i < dgp.n_states; ++i) {
            acc += probs[i];
            if (u < acc) return i;
        }
        return dgp.n_states - 1;
    };

    int state = 0;
    for (std::size_t t = 0; t < t_len; ++t) {
        CovariateRow row;
        for (std::size_t c = 0; c < dgp.covariates.size(); ++c) {
            cols[c][t] = dgp.covariates[c].draw(rng);
            row[dgp.covariates[c].name] = cols[c][t];
        }
        if (t == 0) {
            state = draw_index(dgp.initial);
        } else {
            // transition from t-1 to t uses the covariates of t-1
            CovariateRow prev;
            for (std::size_t c = 0; c < dgp.covariates.size(); ++c) prev[dgp.covariates[c].name] = cols[c][t - 1];
            Eigen::MatrixXd eta = Eigen::MatrixXd::Zero(dgp.n_states, dgp.n_states);
            for (int j = 0; j < dgp.n_states; ++j)
                if (j != state) eta(state, j) = dgp.transition_eta(state, j, prev);
            const Eigen::MatrixXd gamma = tpm_from_eta(eta);
            const Eigen::RowVectorXd r = gamma.row(state);
            state = draw_index(r);
        }
        sim.states[t] = state;
        const ParamTuple par = dgp.state_params(state, row);
        if (!(par[1] > 0.0) || !std::isfinite(par[1]))
            throw ParameterError("simulated sigma is not positive at time index " + std::to_string(t));
        sim.frame.response[t] = sample(dgp.family, par, rng);
    }
    for (std::size_t c = 0; c < dgp.covariates.size(); ++c) sim.frame.add_column(dgp.covariates[c].name, std::move(cols[c]));
    return sim;
}

// ---------------------------------------------------------------------------
// Two-state simulation design: quadratic transition predictors in z and
// nonlinear state-dependent mean / log-sd in x, both covariates U(-1, 1).

namespace paper_dgp {

inline double eta(int from, int to, double z) {
    if (from == 0 && to == 1) return -1.8 + 1.5 * z - 2.0 * z * z;
    if (from == 1 && to == 0) return -2.1 - 2.0 * z - 1.0 * z * z;
    return 0.0;
}

inline double mu(int state, double x) {
    return state == 0 ? x + x * x : -1.0 + x + 0.5 * std::sin(std::numbers::pi * x);
}

inline double log_sigma(int state, double x) { return state == 0 ? -0.5 + x * x : std::log(1.0 + 0.5 * x); }

/// Probability of staying in `state` at covariate z.
inline double persistence(int state, double z) {
    return 1.0 / (1.0 + std::exp(eta(state, 1 - state, z)));
}

}  // namespace paper_dgp

struct PaperDgpOptions {
    std::size_t length = 4000;
    std::uint64_t seed = 1;
    double mean_offset = 0.0;           // added to the mean of state 1
    std::optional<double> skew_shape;   // skew-normal responses with this constant shape
};

inline DGPSpec builtin_paper_dgp(const PaperDgpOptions& opt = {}) {
    DGPSpec dgp;
    dgp.n_states = 2;
    dgp.family = opt.skew_shape ? Family::skew_normal() : Family::normal();
    dgp.initial = {0.5, 0.5};
    dgp.transition_eta = [](int i, int j, const CovariateRow& row) { return paper_dgp::eta(i, j, lookup(row, "z")); };
    const double offset = opt.mean_offset;
    const double shape = opt.skew_shape.value_or(0.0);
    dgp.state_params = [offset, shape](int state, const CovariateRow& row) {
        const double x = lookup(row, "x");
        ParamTuple p{};
        p[0] = paper_dgp::mu(state, x) + (state == 0 ? offset : 0.0);
        p[1] = std::exp(paper_dgp::log_sigma(state, x));
        p[2] = shape;
        return p;
    };
    dgp.covariates = {CovariateGenerator::uniform("x"), CovariateGenerator::uniform("z")};
    dgp.length = opt.length;
    dgp.seed = opt.seed;
    return dgp;
}

/// The model matching the built-in design: smooth(x) for every distribution
/// parameter, smooth(z) for every transition, initial distribution (0.5, 0.5).
inline ModelSpec paper_model_spec(Family family = Family::normal(), int k = 10) {
    Formula fx;
    fx.smooths.push_back({"x", k, 3, 2});
    Formula fz;
    fz.smooths.push_back({"z", k, 3, 2});
    std::vector<Formula> per_param(static_cast<std::size_t>(family.num_params()), fx);
    return ModelSpec::shared(2, std::move(family), per_param, fz, {InitialKind::Fixed, {0.5, 0.5}});
}

}  // namespace msgamlss

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "families.hpp"
#include "markov.hpp"
#include "predictor.hpp"
#include "splines.hpp"

namespace msgamlss {

/// Response plus aligned covariate columns, in time order.
struct TimeSeriesFrame {
    std::string response_name = "y";
    std::vector<double> response;
    std::vector<std::string> names;
    std::vector<std::vector<double>> columns;
    std::vector<std::string> labels;  // optional opaque label column (dates)
    std::string label_name;

    std::size_t size() const { return response.size(); }

    bool has(std::string_view name) const {
        return std::find(names.begin(), names.end(), name) != names.end();
    }

    const std::vector<double>& column(std::string_view name) const {
        auto it = std::find(names.begin(), names.end(), name);
        if (it == names.end()) throw ConfigError("covariate '" + std::string(name) + "' not found in data");
        return columns[static_cast<std::size_t>(it - names.begin())];
    }

    void add_column(std::string name, std::vector<double> values) {
        if (values.size() != response.size())
            throw ConfigError("column '" + name + "' length does not match the response");
        auto it = std::find(names.begin(), names.end(), name);
        if (it != names.end()) {
            columns[static_cast<std::size_t>(it - names.begin())] = std::move(values);
            return;
        }
        names.push_back(std::move(name));
        columns.push_back(std::move(values));
    }

    CovariateRow row(std::size_t t) const {
        CovariateRow r;
        for (std::size_t c = 0; c < names.size(); ++c) r[names[c]] = columns[c][t];
        return r;
    }
};

/// Intercept (implicit) + linear terms + smooth terms.
struct Formula {
    std::vector<std::string> linear;
    std::vector<SmoothSpec> smooths;

    bool operator==(const Formula&) const = default;
};

enum class InitialKind { Uniform, Fixed, Stationary };

struct InitialDistribution {
    InitialKind kind = InitialKind::Uniform;
    std::vector<double> probs;  // used when kind == Fixed
};

/// Declarative model: number of states, response family, one formula per
/// (distribution parameter, state) and per off-diagonal transition pair.
struct ModelSpec {
    int n_states = 2;
    Family family = Family::normal();
    std::vector<std::vector<Formula>> state_formulas;  // [parameter][state]
    std::vector<Formula> transition_formulas;          // [pair], row-major off-diagonal
    InitialDistribution initial;

    /// Same formula for every state of a parameter and for every transition pair.
    static ModelSpec shared(int n_states, Family family, const std::vector<Formula>& per_parameter,
                            const Formula& transition, InitialDistribution initial = {}) {
        ModelSpec s;
        s.n_states = n_states;
        s.family = std::move(family);
        for (const auto& f : per_parameter) s.state_formulas.emplace_back(static_cast<std::size_t>(n_states), f);
        s.state_formulas.resize(static_cast<std::size_t>(s.family.num_params()),
                                std::vector<Formula>(static_cast<std::size_t>(n_states)));
        s.transition_formulas.assign(static_cast<std::size_t>(n_states * (n_states - 1)), transition);
        s.initial = std::move(initial);
        return s;
    }

    int num_params() const { return family.num_params(); }
    int num_pairs() const { return n_states * (n_states - 1); }

    void validate() const {
        if (n_states < 1) throw ConfigError("number of states must be >= 1");
        if (static_cast<int>(state_formulas.size()) != num_params())
            throw ConfigError("expected one formula list per distribution parameter");
        for (const auto& per_state : state_formulas)
            if (static_cast<int>(per_state.size()) != n_states)
                throw ConfigError("expected one formula per state for every parameter");
        if (static_cast<int>(transition_formulas.size()) != num_pairs())
            throw ConfigError("expected one transition formula per off-diagonal pair");
        if (initial.kind == InitialKind::Fixed) {
            if (static_cast<int>(initial.probs.size()) != n_states)
                throw ConfigError("initial distribution must have one entry per state");
            double sum = 0.0;
            for (double p : initial.probs) {
                if (!(p >= 0.0)) throw ConfigError("initial probabilities must be non-negative");
                sum += p;
            }
            if (std::abs(sum - 1.0) > 1e-8) throw ConfigError("initial probabilities must sum to one");
        }
        for (const auto& per_state : state_formulas)
            for (const auto& f : per_state)
                for (const auto& s : f.smooths) s.validate();
        for (const auto& f : transition_formulas)
            for (const auto& s : f.smooths) s.validate();
    }

    std::set<std::string> covariates() const {
        std::set<std::string> out;
        auto add = [&](const Formula& f) {
            out.insert(f.linear.begin(), f.linear.end());
            for (const auto& s : f.smooths) out.insert(s.covariate);
        };
        for (const auto& per_state : state_formulas)
            for (const auto& f : per_state) add(f);
        for (const auto& f : transition_formulas) add(f);
        return out;
    }

    std::vector<SmoothSpec> smooth_specs() const {
        std::vector<SmoothSpec> out;
        auto add = [&](const Formula& f) {
            for (const auto& s : f.smooths)
                if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
        };
        for (const auto& per_state : state_formulas)
            for (const auto& f : per_state) add(f);
        for (const auto& f : transition_formulas) add(f);
        return out;
    }
};

/// Centered bases for every distinct smooth spec, built on the fitting data.
/// One basis per (covariate, k, degree, order) is shared by all predictors.
struct BasisSet {
    std::vector<std::shared_ptr<const BasisBundle>> bundles;

    static BasisSet build(const ModelSpec& spec, const TimeSeriesFrame& frame) {
        BasisSet set;
        for (const auto& s : spec.smooth_specs()) {
            BasisBundle b = apply_centering(build_basis(s, frame.column(s.covariate)));
            b.design.resize(0, 0);  // rows are re-evaluated per data set
            set.bundles.push_back(std::make_shared<const BasisBundle>(std::move(b)));
        }
        return set;
    }

    int find(const SmoothSpec& s) const {
        for (std::size_t i = 0; i < bundles.size(); ++i)
            if (bundles[i]->spec == s) return static_cast<int>(i);
        throw ConfigError("no basis for smooth(" + s.covariate + ")");
    }
};

struct SmoothBlock {
    int basis = 0;    // index into BasisSet
    int offset = 0;   // into theta
    int size = 0;
    int penalty = 0;  // lambda slot
};

/// Contiguous coefficient range of one additive predictor within theta:
/// [intercept, linear..., smooth block 1..., smooth block 2..., ...].
struct PredictorLayout {
    int offset = 0;
    int size = 0;
    std::vector<std::string> linear;
    std::vector<SmoothBlock> smooths;
    std::string label;
};

struct PenaltyBlock {
    int offset = 0;
    int size = 0;
    int basis = 0;
    int rank = 0;
    std::string label;
};

/// Packing of theta. State predictors come first, ordered by state then by
/// distribution parameter; transition predictors follow in pair order.
struct ParameterLayout {
    int n_states = 1;
    int n_params = 2;
    std::vector<PredictorLayout> state;       // [state * n_params + parameter]
    std::vector<PredictorLayout> transition;  // [pair]
    std::vector<PenaltyBlock> penalties;
    int size = 0;

    const PredictorLayout& state_predictor(int state_index, int param) const {
        return this->state[static_cast<std::size_t>(state_index * n_params + param)];
    }

    static ParameterLayout build(const ModelSpec& spec, const BasisSet& bases) {
        ParameterLayout layout;
        layout.n_states = spec.n_states;
        layout.n_params = spec.num_params();
        int offset = 0;
        auto make = [&](const Formula& f, std::string label) {
            PredictorLayout p;
            p.offset = offset;
            p.linear = f.linear;
            p.label = std::move(label);
            offset += 1 + static_cast<int>(f.linear.size());
            for (const auto& s : f.smooths) {
                SmoothBlock block;
                block.basis = bases.find(s);
                block.offset = offset;
                block.size = bases.bundles[static_cast<std::size_t>(block.basis)]->num_coefficients();
                block.penalty = static_cast<int>(layout.penalties.size());
                offset += block.size;
                layout.penalties.push_back({block.offset, block.size, block.basis,
                                            bases.bundles[static_cast<std::size_t>(block.basis)]->penalty_rank(),
                                            p.label + ":s(" + s.covariate + ")"});
                p.smooths.push_back(block);
            }
            p.size = offset - p.offset;
            return p;
        };
        const auto names = spec.family.parameter_names();
        for (int i = 0; i < spec.n_states; ++i)
            for (int k = 0; k < spec.num_params(); ++k)
                layout.state.push_back(make(spec.state_formulas[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)],
                                            names[static_cast<std::size_t>(k)] + "[" + std::to_string(i + 1) + "]"));
        for (int p = 0; p < spec.num_pairs(); ++p) {
            const auto [i, j] = pair_states(spec.n_states, p);
            layout.transition.push_back(make(spec.transition_formulas[static_cast<std::size_t>(p)],
                                             "gamma[" + std::to_string(i + 1) + "," + std::to_string(j + 1) + "]"));
        }
        layout.size = offset;
        return layout;
    }

    std::vector<std::string> names(const BasisSet& bases) const {
        std::vector<std::string> out(static_cast<std::size_t>(size));
        auto fill = [&](const PredictorLayout& p) {
            out[static_cast<std::size_t>(p.offset)] = p.label + ":(Intercept)";
            for (std::size_t j = 0; j < p.linear.size(); ++j)
                out[static_cast<std::size_t>(p.offset) + 1 + j] = p.label + ":" + p.linear[j];
            for (const auto& b : p.smooths)
                for (int m = 0; m < b.size; ++m)
                    out[static_cast<std::size_t>(b.offset + m)] =
                        p.label + ":s(" + bases.bundles[static_cast<std::size_t>(b.basis)]->spec.covariate + ")." +
                        std::to_string(m + 1);
        };
        for (const auto& p : state) fill(p);
        for (const auto& p : transition) fill(p);
        return out;
    }
};

/// Model matrices of every predictor evaluated on one data set.
/// Transition design row t governs the transition from t to t+1.
struct Design {
    ModelSpec spec;
    ParameterLayout layout;
    std::vector<double> y;
    using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    std::vector<RowMatrix> state_x;       // parallel to layout.state
    std::vector<RowMatrix> transition_x;  // parallel to layout.transition
    std::vector<Eigen::MatrixXd> penalty_matrices;  // parallel to layout.penalties

    std::size_t length() const { return y.size(); }
    int n_states() const { return spec.n_states; }
    int n_params() const { return spec.num_params(); }
};

inline Design::RowMatrix predictor_matrix(const PredictorLayout& p, const BasisSet& bases,
                                          const TimeSeriesFrame& frame) {
    const auto t_len = static_cast<Eigen::Index>(frame.size());
    Design::RowMatrix x(t_len, p.size);
    x.col(0).setOnes();
    for (std::size_t j = 0; j < p.linear.size(); ++j) {
        const auto& col = frame.column(p.linear[j]);
        for (Eigen::Index t = 0; t < t_len; ++t) x(t, static_cast<Eigen::Index>(j) + 1) = col[static_cast<std::size_t>(t)];
    }
    for (const auto& b : p.smooths) {
        const auto& bundle = *bases.bundles[static_cast<std::size_t>(b.basis)];
        const auto& col = frame.column(bundle.spec.covariate);
        x.middleCols(b.offset - p.offset, b.size) = bundle.rows(col);
    }
    return x;
}

inline Design make_design(const ModelSpec& spec, const BasisSet& bases, const TimeSeriesFrame& frame) {
    spec.validate();
    if (frame.size() == 0) throw ConfigError("data set is empty");
    for (double v : frame.response)
        if (!std::isfinite(v)) throw ConfigError("response contains missing or non-finite values");
    std::vector<std::string> missing;
    for (const auto& c : spec.covariates())
        if (!frame.has(c)) missing.push_back(c);
    if (!missing.empty()) {
        std::string msg = "data is missing covariate column(s):";
        for (const auto& m : missing) msg += " " + m;
        throw ConfigError(msg);
    }
    Design d;
    d.spec = spec;
    d.layout = ParameterLayout::build(spec, bases);
    d.y = frame.response;
    for (const auto& p : d.layout.state) d.state_x.push_back(predictor_matrix(p, bases, frame));
    for (const auto& p : d.layout.transition) d.transition_x.push_back(predictor_matrix(p, bases, frame));
    for (const auto& pb : d.layout.penalties)
        d.penalty_matrices.push_back(bases.bundles[static_cast<std::size_t>(pb.basis)]->penalty);
    return d;
}

inline Predictor unpack_predictor(const PredictorLayout& p, const BasisSet& bases, std::span<const double> theta) {
    Predictor out;
    out.intercept = theta[static_cast<std::size_t>(p.offset)];
    out.linear_names = p.linear;
    for (std::size_t j = 0; j < p.linear.size(); ++j)
        out.linear_coef.push_back(theta[static_cast<std::size_t>(p.offset) + 1 + j]);
    for (const auto& b : p.smooths) {
        Eigen::VectorXd coef(b.size);
        for (int m = 0; m < b.size; ++m) coef(m) = theta[static_cast<std::size_t>(b.offset + m)];
        out.smooths.push_back({bases.bundles[static_cast<std::size_t>(b.basis)], std::move(coef)});
    }
    return out;
}

inline TransitionModel unpack_transition(const ParameterLayout& layout, const BasisSet& bases,
                                         std::span<const double> theta, CovariateRow reference = {}) {
    TransitionModel m;
    m.n_states = layout.n_states;
    for (const auto& p : layout.transition) m.pairs.push_back(unpack_predictor(p, bases, theta));
    m.reference = std::move(reference);
    return m;
}

}  // namespace msgamlss

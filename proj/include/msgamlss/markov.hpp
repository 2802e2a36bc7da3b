#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "predictor.hpp"

namespace msgamlss {

inline constexpr double kEtaClip = 50.0;

/// Off-diagonal pairs (i, j), i != j, are enumerated row-major.
inline int pair_index(int n_states, int from, int to) {
    return from * (n_states - 1) + (to < from ? to : to - 1);
}
inline std::pair<int, int> pair_states(int n_states, int index) {
    const int from = index / (n_states - 1);
    int to = index % (n_states - 1);
    if (to >= from) ++to;
    return {from, to};
}

/// Covariate-dependent transition model: one predictor per off-diagonal
/// pair, diagonal predictors identically zero.
struct TransitionModel {
    int n_states = 1;
    std::vector<Predictor> pairs;  // n_states * (n_states - 1), row-major
    CovariateRow reference;        // values used for covariates not on a curve grid

    bool is_constant() const {
        return std::all_of(pairs.begin(), pairs.end(), [](const Predictor& p) { return p.is_constant(); });
    }
};

inline Eigen::MatrixXd eta_matrix(const TransitionModel& model, const CovariateRow& z_row) {
    const int n = model.n_states;
    Eigen::MatrixXd eta = Eigen::MatrixXd::Zero(n, n);
    for (int p = 0; p < static_cast<int>(model.pairs.size()); ++p) {
        const auto [i, j] = pair_states(n, p);
        eta(i, j) = model.pairs[static_cast<std::size_t>(p)].eval(z_row);
    }
    return eta;
}

/// Row-wise softmax with max subtraction. Works for any real matrix.
inline Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& eta) {
    Eigen::MatrixXd out(eta.rows(), eta.cols());
    for (Eigen::Index i = 0; i < eta.rows(); ++i) {
        const double m = eta.row(i).maxCoeff();
        out.row(i) = (eta.row(i).array() - m).exp();
        out.row(i) /= out.row(i).sum();
    }
    return out;
}

/// Multinomial-logit TPM with the diagonal as reference category; entries
/// are clipped to +-50 before the softmax.
inline Eigen::MatrixXd tpm_from_eta(const Eigen::MatrixXd& eta) {
    return softmax_rows(eta.cwiseMax(-kEtaClip).cwiseMin(kEtaClip));
}

/// Stationary distribution of a row-stochastic matrix via
/// delta (I - Gamma + U) = 1, U the all-ones matrix.
inline Eigen::RowVectorXd stationary(const Eigen::MatrixXd& gamma) {
    const Eigen::Index n = gamma.rows();
    if (n == 1) return Eigen::RowVectorXd::Ones(1);
    const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n) - gamma + Eigen::MatrixXd::Ones(n, n);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(a.transpose());
    lu.setThreshold(1e-10);
    if (!lu.isInvertible())
        throw NumericError("stationary distribution is not unique (singular system)");
    Eigen::RowVectorXd delta = lu.solve(Eigen::VectorXd::Ones(n)).transpose();
    delta = delta.cwiseMax(0.0);
    return delta / delta.sum();
}

/// Stationary distribution along a grid of one covariate, with every other
/// covariate held at the model's reference value. Rows are grid points.
inline Eigen::MatrixXd stationary_curve(const TransitionModel& model, const std::string& covariate,
                                        std::span<const double> grid) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(grid.size()), model.n_states);
    CovariateRow row = model.reference;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        row[covariate] = grid[g];
        try {
            out.row(static_cast<Eigen::Index>(g)) = stationary(tpm_from_eta(eta_matrix(model, row)));
        } catch (const NumericError& e) {
            throw NumericError(std::string(e.what()) + " at " + covariate + " = " + std::to_string(grid[g]));
        }
    }
    return out;
}

}  // namespace msgamlss

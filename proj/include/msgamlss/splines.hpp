#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"

namespace msgamlss {

/// One smooth term s(x) = sum_m b_m phi_m(x) over a named covariate.
struct SmoothSpec {
    std::string covariate;
    int num_basis = 10;
    int degree = 3;
    int penalty_order = 2;

    void validate() const {
        if (degree < 0) throw ConfigError("smooth(" + covariate + "): degree must be >= 0");
        if (num_basis < degree + 2)
            throw ConfigError("smooth(" + covariate + "): k=" + std::to_string(num_basis) +
                              " too small, need at least degree + 2 = " +
                              std::to_string(degree + 2));
        if (penalty_order < 1 || penalty_order >= num_basis)
            throw ConfigError("smooth(" + covariate + "): penalty order must be in [1, k)");
    }

    bool operator==(const SmoothSpec&) const = default;
};

/// B-spline basis with equidistant knots over [lower, upper] and its
/// difference penalty. After `apply_centering` the design and penalty live in
/// the (M-1)-dimensional sum-to-zero subspace defined by `centering`.
struct BasisBundle {
    SmoothSpec spec;
    double lower = 0.0;
    double upper = 1.0;
    Eigen::MatrixXd design;   // T x M (or T x (M-1) once centered)
    Eigen::MatrixXd penalty;  // M x M (or (M-1) x (M-1))
    std::optional<Eigen::MatrixXd> centering;  // M x (M-1), columns orthonormal

    bool centered() const { return centering.has_value(); }
    int num_coefficients() const { return static_cast<int>(penalty.rows()); }
    int penalty_rank() const { return spec.num_basis - spec.penalty_order; }

    /// Raw (uncentered) basis row at x. Throws DomainError outside [lower, upper].
    Eigen::RowVectorXd raw_row(double x) const;

    /// Basis row in the same coordinates as `design`.
    Eigen::RowVectorXd row(double x) const {
        Eigen::RowVectorXd r = raw_row(x);
        if (centering) return r * (*centering);
        return r;
    }

    Eigen::MatrixXd rows(std::span<const double> xs) const {
        Eigen::MatrixXd out(static_cast<Eigen::Index>(xs.size()), num_coefficients());
        for (std::size_t t = 0; t < xs.size(); ++t) out.row(static_cast<Eigen::Index>(t)) = row(xs[t]);
        return out;
    }
};

namespace detail {

// Nonzero B-spline values at x for equidistant knots t_j = lower + (j - degree) h,
// j = 0..M+degree. Returns the index of the first nonzero basis function.
inline int bspline_nonzero(double x, double lower, double upper, int num_basis, int degree,
                           std::span<double> values) {
    const int intervals = num_basis - degree;
    const double h = (upper - lower) / intervals;
    auto knot = [&](int j) { return lower + (j - degree) * h; };

    int span_index = degree + static_cast<int>(std::floor((x - lower) / h));
    span_index = std::clamp(span_index, degree, num_basis - 1);

    // de Boor / Cox recursion on the degree+1 supporting functions.
    std::vector<double> left(static_cast<std::size_t>(degree) + 1);
    std::vector<double> right(static_cast<std::size_t>(degree) + 1);
    values[0] = 1.0;
    for (int j = 1; j <= degree; ++j) {
        left[j] = x - knot(span_index + 1 - j);
        right[j] = knot(span_index + j) - x;
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            const double tmp = values[r] / (right[r + 1] + left[j - r]);
            values[r] = saved + right[r + 1] * tmp;
            saved = left[j - r] * tmp;
        }
        values[j] = saved;
    }
    return span_index - degree;
}

}  // namespace detail

inline Eigen::RowVectorXd BasisBundle::raw_row(double x) const {
    const double slack = 1e-10 * (upper - lower);
    if (!std::isfinite(x) || x < lower - slack || x > upper + slack)
        throw DomainError("covariate '" + spec.covariate + "' value " + std::to_string(x) +
                          " outside the fitted range [" + std::to_string(lower) + ", " +
                          std::to_string(upper) + "]");
    x = std::clamp(x, lower, upper);
    Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(spec.num_basis);
    std::vector<double> values(static_cast<std::size_t>(spec.degree) + 1);
    const int first = detail::bspline_nonzero(x, lower, upper, spec.num_basis, spec.degree, values);
    for (int j = 0; j <= spec.degree; ++j) r(first + j) = values[static_cast<std::size_t>(j)];
    return r;
}

/// Difference matrix of the given order, (M - order) x M.
inline Eigen::MatrixXd difference_matrix(int num_basis, int order) {
    Eigen::MatrixXd d = Eigen::MatrixXd::Identity(num_basis, num_basis);
    for (int k = 0; k < order; ++k) {
        const Eigen::Index rows = d.rows() - 1;
        Eigen::MatrixXd next = d.bottomRows(rows) - d.topRows(rows);
        d = std::move(next);
    }
    return d;
}

/// Builds the design over the observed range of `x` and the penalty D^T D.
inline BasisBundle build_basis(const SmoothSpec& spec, std::span<const double> x) {
    spec.validate();
    if (x.empty()) throw ConfigError("smooth(" + spec.covariate + "): no observations");
    for (double v : x)
        if (!std::isfinite(v))
            throw ConfigError("smooth(" + spec.covariate + "): non-finite covariate value");
    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    if (!(*hi > *lo))
        throw ConfigError("smooth(" + spec.covariate + "): covariate is constant");

    BasisBundle b;
    b.spec = spec;
    b.lower = *lo;
    b.upper = *hi;
    b.design = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(x.size()), spec.num_basis);
    for (std::size_t t = 0; t < x.size(); ++t) b.design.row(static_cast<Eigen::Index>(t)) = b.raw_row(x[t]);
    const Eigen::MatrixXd d = difference_matrix(spec.num_basis, spec.penalty_order);
    b.penalty = d.transpose() * d;
    return b;
}

/// Reparametrizes the smooth onto the subspace where its fitted values sum to
/// zero over the fitting sample. Already-centered bundles are returned as is.
inline BasisBundle apply_centering(BasisBundle bundle) {
    if (bundle.centered()) return bundle;
    const Eigen::VectorXd column_sums = bundle.design.colwise().sum().transpose();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(column_sums);
    const Eigen::MatrixXd q = qr.householderQ();
    Eigen::MatrixXd z = q.rightCols(q.cols() - 1);
    bundle.design = bundle.design * z;
    bundle.penalty = z.transpose() * bundle.penalty * z;
    bundle.penalty = 0.5 * (bundle.penalty + bundle.penalty.transpose());
    bundle.centering = std::move(z);
    return bundle;
}

}  // namespace msgamlss

#pragma once

#include <Eigen/Dense>

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "error.hpp"
#include "splines.hpp"

namespace msgamlss {

/// Covariate values at a single time point, keyed by column name.
using CovariateRow = std::map<std::string, double, std::less<>>;

inline double lookup(const CovariateRow& row, const std::string& name) {
    auto it = row.find(name);
    if (it == row.end()) throw ConfigError("missing covariate '" + name + "'");
    return it->second;
}

struct SmoothTerm {
    std::shared_ptr<const BasisBundle> basis;
    Eigen::VectorXd coef;
};

/// Additive predictor: intercept + linear terms + centered smooths.
struct Predictor {
    double intercept = 0.0;
    std::vector<std::string> linear_names;
    std::vector<double> linear_coef;
    std::vector<SmoothTerm> smooths;

    double eval(const CovariateRow& row) const {
        double eta = intercept;
        for (std::size_t j = 0; j < linear_names.size(); ++j) eta += linear_coef[j] * lookup(row, linear_names[j]);
        for (const auto& s : smooths) eta += s.basis->row(lookup(row, s.basis->spec.covariate)).dot(s.coef);
        return eta;
    }

    bool is_constant() const { return linear_names.empty() && smooths.empty(); }
};

}  // namespace msgamlss

#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include <boost/math/distributions/normal.hpp>

namespace msgamlss {

/// Kolmogorov-Smirnov statistic of a sample against the standard normal.
inline double ks_statistic(std::span<const double> sample) {
    std::vector<double> x(sample.begin(), sample.end());
    std::sort(x.begin(), x.end());
    const boost::math::normal std_normal;
    const double n = static_cast<double>(x.size());
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double f = boost::math::cdf(std_normal, x[i]);
        d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
    }
    return d;
}

/// Limiting Kolmogorov distribution P(K <= k).
inline double kolmogorov_cdf(double k) {
    if (k <= 0.0) return 0.0;
    if (k < 1.0) {
        // small-k form: sqrt(2 pi)/k sum exp(-(2j-1)^2 pi^2 / (8 k^2))
        const double pi2 = M_PI * M_PI;
        double s = 0.0;
        for (int j = 1; j <= 20; ++j) s += std::exp(-(2.0 * j - 1) * (2.0 * j - 1) * pi2 / (8.0 * k * k));
        return std::sqrt(2.0 * M_PI) / k * s;
    }
    double s = 0.0;
    for (int j = 1; j <= 100; ++j) s += (j % 2 ? 1.0 : -1.0) * std::exp(-2.0 * j * j * k * k);
    return 1.0 - 2.0 * s;
}

/// Asymptotic p-value with Stephens' finite-sample correction.
inline double ks_pvalue(double statistic, std::size_t n) {
    const double rn = std::sqrt(static_cast<double>(n));
    return std::clamp(1.0 - kolmogorov_cdf((rn + 0.12 + 0.11 / rn) * statistic), 0.0, 1.0);
}

/// Empirical quantile with linear interpolation (R type 7) of sorted data.
inline double sorted_quantile(std::span<const double> sorted, double p) {
    if (sorted.empty()) return std::nan("");
    const double h = (static_cast<double>(sorted.size()) - 1.0) * std::clamp(p, 0.0, 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace msgamlss

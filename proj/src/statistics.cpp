// Copyright 2026 The fleming-viot Authors.
// SPDX-License-Identifier: Apache-2.0
#include "fv/statistics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "fv/errors.hpp"

namespace fv::stats {

Moments moments(std::span<const double> xs) {
    require(!xs.empty(), "moments of an empty sample");
    const auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
    if (*lo == *hi) return Moments{*lo, 0.0, 0.0, 0.0};
    const auto n = static_cast<double>(xs.size());
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= n;
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double x : xs) {
        const double d = x - mean;
        const double d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    Moments m;
    m.mean = mean;
    m.var = xs.size() > 1 ? m2 / (n - 1.0) : 0.0;
    const double pop2 = m2 / n;
    if (pop2 > 0.0) {
        m.skewness = (m3 / n) / std::pow(pop2, 1.5);
        m.excess_kurtosis = (m4 / n) / (pop2 * pop2) - 3.0;
    }
    return m;
}

double ks_distance_normal(std::span<const double> xs, double sigma2) {
    require(!xs.empty(), "KS distance of an empty sample");
    require(sigma2 > 0.0, "KS reference variance must be > 0");
    std::vector<double> sorted(xs.begin(), xs.end());
    std::sort(sorted.begin(), sorted.end());
    const boost::math::normal_distribution<double> ref(0.0, std::sqrt(sigma2));
    const auto n = static_cast<double>(sorted.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        const double F = boost::math::cdf(ref, sorted[i]);
        d = std::max({d, static_cast<double>(i + 1) / n - F, F - static_cast<double>(i) / n});
    }
    return d;
}

double median(std::span<const double> xs) {
    require(!xs.empty(), "median of an empty sample");
    std::vector<double> v(xs.begin(), xs.end());
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double hi = v[mid];
    if (v.size() % 2) return hi;
    return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
}

double t_quantile(double level, double dof) {
    const boost::math::students_t_distribution<double> t(dof);
    return boost::math::quantile(t, 0.5 + 0.5 * level);
}

Interval mean_interval(std::span<const double> xs, double level) {
    require(xs.size() >= 2, "a confidence interval needs at least two samples");
    const auto m = moments(xs);
    const double half = t_quantile(level, static_cast<double>(xs.size() - 1)) *
                        std::sqrt(m.var / static_cast<double>(xs.size()));
    return {m.mean - half, m.mean + half};
}

double mean_upper_bound(std::span<const double> xs, double level) {
    require(xs.size() >= 2, "a confidence bound needs at least two samples");
    const auto m = moments(xs);
    const boost::math::students_t_distribution<double> t(static_cast<double>(xs.size() - 1));
    return m.mean + boost::math::quantile(t, level) * std::sqrt(m.var / static_cast<double>(xs.size()));
}

}  // namespace fv::stats

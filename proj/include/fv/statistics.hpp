// Copyright 2026 The fleming-viot Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

namespace fv::stats {

struct Moments {
    double mean = 0.0;
    double var = 0.0;  // unbiased (R - 1) sample variance
    double skewness = 0.0;
    double excess_kurtosis = 0.0;
};

/// Two-pass moments; skewness and kurtosis are the plain (biased) sample ratios.
Moments moments(std::span<const double> xs);

/// Kolmogorov-Smirnov distance between the sample and N(0, sigma2).
double ks_distance_normal(std::span<const double> xs, double sigma2);

double median(std::span<const double> xs);

/// Two-sided Student-t quantile for `level` coverage with `dof` degrees of freedom.
double t_quantile(double level, double dof);

struct Interval {
    double lower, upper;
    // A few ulps of slack, so a zero-width interval from a constant sample still
    // contains a target that was computed along a different rounding path.
    bool contains(double v) const noexcept {
        const double slack = 8.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(v));
        return lower - slack <= v && v <= upper + slack;
    }
};

/// t-interval for the mean at `level` coverage.
Interval mean_interval(std::span<const double> xs, double level);

/// One-sided upper confidence bound on the mean at `level`.
double mean_upper_bound(std::span<const double> xs, double level);

}  // namespace fv::stats

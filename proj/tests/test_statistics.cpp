// Copyright 2026 The fleming-viot Authors.
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <vector>

#include "fv/rng.hpp"
#include "fv/statistics.hpp"

using namespace fv;

TEST_SUITE("statistics") {

TEST_CASE("moments of a small sample") {
    const std::vector<double> xs{1, 2, 3, 4, 10};
    const auto m = stats::moments(xs);
    CHECK(m.mean == doctest::Approx(4.0));
    CHECK(m.var == doctest::Approx(12.5));  // sum of squares 50 over 4
    // biased ratios: m2 = 10, m3 = 21.6*... computed by hand below
    const double m2 = 10.0, m3 = (-27 - 8 - 1 + 0 + 216) / 5.0, m4 = (81 + 16 + 1 + 0 + 1296) / 5.0;
    CHECK(m.skewness == doctest::Approx(m3 / std::pow(m2, 1.5)));
    CHECK(m.excess_kurtosis == doctest::Approx(m4 / (m2 * m2) - 3.0));
}

TEST_CASE("constant sample") {
    const std::vector<double> xs(10, 0.3);
    const auto m = stats::moments(xs);
    CHECK(m.var == 0.0);
    CHECK(m.skewness == 0.0);
    CHECK(m.excess_kurtosis == 0.0);
    const auto ci = stats::mean_interval(xs, 0.99);
    CHECK(ci.lower == doctest::Approx(0.3));
    CHECK(ci.upper == doctest::Approx(0.3));
    CHECK(ci.contains(0.3));
}

TEST_CASE("median") {
    CHECK(stats::median(std::vector<double>{3, 1, 2}) == 2.0);
    CHECK(stats::median(std::vector<double>{4, 1, 3, 2}) == 2.5);
}

TEST_CASE("Student t quantiles") {
    // two-sided 99% with 10 dof, and the normal limit
    CHECK(stats::t_quantile(0.99, 10) == doctest::Approx(3.169273).epsilon(1e-6));
    CHECK(stats::t_quantile(0.95, 1e7) == doctest::Approx(1.959964).epsilon(1e-5));
}

TEST_CASE("KS distance") {
    // exact normal quantiles are at distance ~1/(2n)
    const int n = 1000;
    std::vector<double> xs;
    RngStream rng(1);
    for (int i = 0; i < n; ++i) xs.push_back(2.0 * rng.normal());
    const double d = stats::ks_distance_normal(xs, 4.0);
    CHECK(d > 0.0);
    CHECK(d < 1.63 / std::sqrt(n));  // 99% critical value
    CHECK(stats::ks_distance_normal(xs, 1.0) > 0.1);
}

TEST_CASE("one-sided bound sits above the mean") {
    RngStream rng(2);
    std::vector<double> xs;
    for (int i = 0; i < 500; ++i) xs.push_back(rng.uniform());
    const auto m = stats::moments(xs);
    const double ub = stats::mean_upper_bound(xs, 0.99);
    const auto ci = stats::mean_interval(xs, 0.98);
    CHECK(ub > m.mean);
    // the one-sided 99% bound equals the upper end of the two-sided 98% interval
    CHECK(ub == doctest::Approx(ci.upper).epsilon(1e-12));
}

}

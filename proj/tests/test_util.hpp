// Copyright 2026 The fleming-viot Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Shared fixtures and reference computations for the tests. The reference
// code here is deliberately written independently of the library (different
// algorithms) so that agreement means something.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <vector>

#include "fv/process_models.hpp"

namespace fv::test {

inline AbsorbingChainModel single_state(double kappa) {
    return AbsorbingChainModel(Eigen::MatrixXd::Constant(1, 1, -kappa), Eigen::VectorXd::Ones(1));
}

// A_F = [[-2, 1], [1, -3]], so κ = (1, 2); starts in state 0.
inline AbsorbingChainModel two_state() {
    Eigen::MatrixXd gen(2, 2);
    gen << -2.0, 1.0, 1.0, -3.0;
    return AbsorbingChainModel(gen, Eigen::Vector2d(1.0, 0.0));
}

// Switches between two states and is never killed.
inline AbsorbingChainModel conservative_chain() {
    Eigen::MatrixXd jumps(2, 2);
    jumps << 0.0, 1.5, 0.7, 0.0;
    return AbsorbingChainModel::from_rates(jumps, Eigen::Vector2d::Zero(), Eigen::Vector2d(0.3, 0.7));
}

// e^{tA} by the plain power series, truncated after k_max terms.
inline Eigen::MatrixXd expm_series(const Eigen::MatrixXd& A, double t, int k_max = 60) {
    const auto n = A.rows();
    Eigen::MatrixXd term = Eigen::MatrixXd::Identity(n, n), sum = term;
    for (int k = 1; k <= k_max; ++k) {
        term = term * (t * A) / static_cast<double>(k);
        sum += term;
    }
    return sum;
}

// P_x(Brownian motion stays in (a, b) up to t), reflection principle.
inline double brownian_survival_images(double a, double b, double x, double t) {
    const double L = b - a, s = std::sqrt(2.0 * t);
    const auto Phi = [&](double z) { return 0.5 * std::erfc(-z / s); };
    double sum = 0.0;
    for (int k = -30; k <= 30; ++k) {
        const double sh = 2.0 * k * L;
        sum += Phi(b - x + sh) - Phi(a - x + sh) - Phi(b + x - 2.0 * a + sh) + Phi(x - a + sh);
    }
    return sum;
}

// E_x[f(B_t); t < τ] for Brownian motion killed outside (a, b): Crank-Nicolson
// on u_t = u_xx / 2 with u = 0 at the ends, started by a few implicit Euler
// steps to damp the discontinuities of the data.
inline double heat_solve(double a, double b, const std::function<double(double)>& f, double x, double t,
                         int cells = 2000, int steps = 4000) {
    const int m = cells - 1;  // interior nodes
    const double dx = (b - a) / cells, dt = t / steps;
    std::vector<double> u(m);
    // cell averages, so a jump in f costs O(dx^2) rather than O(dx)
    const int sub = 32;
    for (int i = 0; i < m; ++i) {
        double acc = 0.0;
        for (int k = 0; k < sub; ++k) acc += f(a + (i + 1) * dx + ((k + 0.5) / sub - 0.5) * dx);
        u[i] = acc / sub;
    }
    std::vector<double> cp(m), rhs(m);
    const auto step = [&](double theta) {
        const double r = dt / (2.0 * dx * dx);
        // (I - θ r D) u' = (I + (1-θ) r D) u, D the second difference
        for (int i = 0; i < m; ++i) {
            const double left = i > 0 ? u[i - 1] : 0.0, right = i + 1 < m ? u[i + 1] : 0.0;
            rhs[i] = u[i] + (1.0 - theta) * r * (left - 2.0 * u[i] + right);
        }
        const double lo = -theta * r, di = 1.0 + 2.0 * theta * r;
        // Thomas algorithm for the constant tridiagonal system
        cp[0] = lo / di;
        rhs[0] /= di;
        for (int i = 1; i < m; ++i) {
            const double den = di - lo * cp[i - 1];
            cp[i] = lo / den;
            rhs[i] = (rhs[i] - lo * rhs[i - 1]) / den;
        }
        for (int i = m - 2; i >= 0; --i) rhs[i] -= cp[i] * rhs[i + 1];
        u.swap(rhs);
    };
    const int rannacher = 4;
    for (int k = 0; k < steps; ++k) step(k < rannacher ? 1.0 : 0.5);
    // linear interpolation at x
    const double pos = (x - a) / dx - 1.0;
    const int i = static_cast<int>(std::floor(pos));
    const double w = pos - i;
    const auto at = [&](int j) { return (j < 0 || j >= m) ? 0.0 : u[j]; };
    return (1.0 - w) * at(i) + w * at(i + 1);
}

}  // namespace fv::test

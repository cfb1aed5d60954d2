// Copyright 2026 The fleming-viot Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Exact semigroup quantities for models where Q^t is computable: survival
// p_t, its derivative, γ_t(φ) = η_0(Q^t φ), and the asymptotic variance of
// √N(γ_T^N(φ) - γ_T(φ)) in two algebraically equivalent forms.
#pragma once

#include <Eigen/Dense>

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fv/observable.hpp"
#include "fv/process_models.hpp"

namespace fv {

/// e^{tA_F} by uniformization; truncation error below 1e-13 in max norm.
Eigen::MatrixXd chain_semigroup(const AbsorbingChainModel& chain, Time t);

struct SeriesValue {
    double value = 0.0;
    double tail_bound = 0.0;
};

/// Truncated eigenfunction expansion of P_x(τ > t) for Brownian motion on (a, b),
/// with a bound on the discarded terms.
SeriesValue brownian_survival_series(double a, double b, double x, Time t, int terms);

/// p_t. Brownian models use the eigen series with `series_terms` when its tail
/// bound is below 1e-12, otherwise the method-of-images sum.
SeriesValue exact_survival(const ProcessModel& model, Time t);

/// dp_t/dt.
double exact_survival_rate(const ProcessModel& model, Time t);

/// Pointwise access to the semigroup of a supported model.
class SemigroupEvaluator {
public:
    virtual ~SemigroupEvaluator() = default;

    virtual double survival(Time t) const = 0;
    virtual double survival_rate(Time t) const = 0;
    /// γ_t(φ^power) for power 1 or 2.
    virtual double gamma(Time t, const Observable& phi, int power = 1) const = 0;

    struct Propagated {
        double first;   // γ_t(Q^{T-t}φ)
        double second;  // γ_t([Q^{T-t}φ]²)
    };
    virtual Propagated propagated(Time t, Time T, const Observable& phi) const = 0;

    /// Throws UnsupportedObservable if φ is outside what this evaluator handles.
    virtual void check(const Observable& phi) const = 0;

    /// True when t ↦ γ_t([Q^{T-t}φ]²) may behave like √(T-t) near T, so time
    /// integrals should be taken in w with T - t = T w².
    virtual bool rough_near_horizon() const { return false; }
};

/// Throws FvError(UnsupportedModel) for general diffusions.
std::unique_ptr<SemigroupEvaluator> make_evaluator(const ProcessModel& model);

/// Q^s φ as a vector over chain states.
Eigen::VectorXd propagate(const AbsorbingChainModel& chain, Time s, const Observable& phi);

struct Sigma2Result {
    double value = 0.0;
    double quad_error = 0.0;  // Richardson estimate |S_2n - S_n| / 15 of the time integral
    int n_quad = 0;
};

inline constexpr int kDefaultQuadPanels = 512;

/// p_T² V_{η_T}(φ) - p_T² ln(p_T) η_T(φ)² - 2∫ V_{η_t}(Q^{T-t}φ) p_t p_t' dt.
Sigma2Result sigma2_var2(const ProcessModel& model, const Observable& phi, Time T,
                         int n_quad = kDefaultQuadPanels);

/// V_{η_0}(Q^T φ) + i_T(φ) with
/// i_T = p_T γ_T(Q²) - γ_0(Q²) + γ_T(Q)² ln p_T - 2∫ γ_u(Q²) p_u' du.
Sigma2Result sigma2_var1(const ProcessModel& model, const Observable& phi, Time T,
                         int n_quad = kDefaultQuadPanels);

/// Variance of φ(X_T)1{T < τ}: the per-path variance of crude Monte Carlo.
double crude_mc_variance(const ProcessModel& model, const Observable& phi, Time T);

struct ObservableOracle {
    std::string name;
    double gamma_T = 0.0;
    double eta_T = 0.0;
    Sigma2Result sigma2_var2;
    Sigma2Result sigma2_var1;
    double sigma2_crude = 0.0;
    std::vector<double> var_eta_q;  // V_{η_t}(Q^{T-t}φ) on the report grid
    std::vector<double> gamma_q2;   // γ_t([Q^{T-t}φ]²) on the report grid
};

struct OracleReport {
    Time T = 0.0;
    std::vector<Time> time_grid;
    std::vector<double> p_vals;
    std::vector<double> dp_vals;
    std::vector<ObservableOracle> observables;
};

/// Uniform 11-point grid on [0, T] when `grid` is empty.
OracleReport build_oracle_report(const ProcessModel& model, const std::vector<Observable>& observables,
                                 Time T, std::span<const Time> grid = {},
                                 int n_quad = kDefaultQuadPanels);

}  // namespace fv

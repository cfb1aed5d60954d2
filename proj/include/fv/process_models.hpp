// Copyright 2026 The fleming-viot Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Killed Markov processes on F ∪ {cemetery}. Three concrete families:
// a finite absorbing chain (exact event-time simulation), Brownian motion
// killed at the ends of an interval, and a 1D diffusion with affine drift and
// constant volatility killed at the ends of an interval (Euler scheme).
#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "fv/rng.hpp"

namespace fv {

using Time = double;

/// A point of F ∪ {∂}. Chain states carry an index, interval states a coordinate.
class KilledState {
public:
    static KilledState cemetery() noexcept { return KilledState{}; }
    static KilledState at_index(std::size_t i) noexcept { return KilledState{i}; }
    static KilledState at_point(double x) noexcept { return KilledState{x}; }

    bool is_live() const noexcept { return !std::holds_alternative<std::monostate>(value_); }
    bool is_cemetery() const noexcept { return !is_live(); }
    bool is_index() const noexcept { return std::holds_alternative<std::size_t>(value_); }

    /// Throws std::bad_variant_access when the state does not hold an index.
    std::size_t index() const { return std::get<std::size_t>(value_); }
    double point() const { return std::get<double>(value_); }

    friend bool operator==(const KilledState&, const KilledState&) = default;

private:
    KilledState() = default;
    explicit KilledState(std::size_t i) : value_(i) {}
    explicit KilledState(double x) : value_(x) {}

    std::variant<std::monostate, std::size_t, double> value_;
};

enum class BoundaryRule { SignCrossing, BridgeCorrection };

std::string_view to_string(BoundaryRule rule) noexcept;

class AbsorbingChainModel {
public:
    /// `generator` is the sub-Markovian generator A_F restricted to live states.
    /// Kill rates are read off as κ_i = -Σ_j A_ij.
    AbsorbingChainModel(Eigen::MatrixXd generator, Eigen::VectorXd initial_dist);

    /// Validates that the diagonal of `generator` matches -(off-diagonal row sum) - κ.
    AbsorbingChainModel(Eigen::MatrixXd generator, Eigen::VectorXd kill_rates,
                        Eigen::VectorXd initial_dist);

    /// Builds the generator from nonnegative off-diagonal jump rates (diagonal ignored).
    static AbsorbingChainModel from_rates(const Eigen::MatrixXd& jump_rates,
                                          const Eigen::VectorXd& kill_rates,
                                          const Eigen::VectorXd& initial_dist);

    std::size_t n_states() const noexcept { return static_cast<std::size_t>(generator_.rows()); }
    const Eigen::MatrixXd& generator() const noexcept { return generator_; }
    const Eigen::VectorXd& kill_rates() const noexcept { return kill_rates_; }
    const Eigen::VectorXd& initial_dist() const noexcept { return initial_dist_; }
    bool never_killed() const noexcept { return never_killed_; }

    /// Total event rate out of state i, |A_ii|.
    double total_rate(std::size_t i) const noexcept { return -generator_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)); }
    double max_total_rate() const noexcept;

    /// Destination of a jump out of state i; n_states() stands for the cemetery.
    std::size_t draw_jump(std::size_t i, RngStream& rng) const noexcept;
    std::size_t draw_initial(RngStream& rng) const noexcept;

private:
    void validate_and_prepare();

    Eigen::MatrixXd generator_;
    Eigen::VectorXd kill_rates_;
    Eigen::VectorXd initial_dist_;
    bool never_killed_ = false;
    // Per state: cumulative rates over (live targets..., cemetery).
    std::vector<std::vector<double>> jump_cdf_;
    std::vector<double> initial_cdf_;
};

/// Standard Brownian motion (generator ½ d²/dx²) killed on leaving (a, b).
struct KilledBrownianModel {
    double a = 0.0;
    double b = 1.0;
    double x0 = 0.5;
    int series_terms = 25;
    double dt = 1e-4;
    BoundaryRule boundary_rule = BoundaryRule::BridgeCorrection;

    void validate() const;
};

/// dX = (c0 + c1 X) dt + s dW killed on leaving (a, b).
struct KilledDiffusionModel {
    double drift_c0 = 0.0;
    double drift_c1 = 0.0;
    double sigma = 1.0;
    double a = 0.0;
    double b = 1.0;
    double x0 = 0.5;
    double dt = 1e-3;
    BoundaryRule boundary_rule = BoundaryRule::SignCrossing;

    void validate() const;
};

using ProcessModel = std::variant<AbsorbingChainModel, KilledBrownianModel, KilledDiffusionModel>;

/// Coefficients of the Euler scheme shared by both interval models.
struct EulerScheme {
    double a, b;
    double drift_c0, drift_c1;
    double sigma;
    double dt;
    BoundaryRule rule;

    static EulerScheme of(const KilledBrownianModel& m) noexcept;
    static EulerScheme of(const KilledDiffusionModel& m) noexcept;

    /// One step of length h from x. Returns false if the path is killed in the step.
    /// Throws FvError(NonFiniteState) on a non-finite update.
    bool step(double& x, double h, RngStream& rng) const;
};

bool is_chain(const ProcessModel& model) noexcept;
/// Endpoints (a, b) of an interval model; throws for chains.
std::pair<double, double> interval_of(const ProcessModel& model);
void validate(const ProcessModel& model);

KilledState sample_initial(const ProcessModel& model, RngStream& rng);

/// Simulates the killed process from (t_now, state) up to t_stop. Returns
/// (Live, t_stop) on survival or (Cemetery, τ) with t_now < τ ≤ t_stop.
std::pair<KilledState, Time> advance_until(const ProcessModel& model, const KilledState& state,
                                           Time t_now, Time t_stop, RngStream& rng);

bool exact_semigroup_available(const ProcessModel& model) noexcept;

}  // namespace fv

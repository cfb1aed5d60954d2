// Copyright 2026 The fleming-viot Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Fleming-Viot particle system: N copies of a killed process; whenever one is
// absorbed it is instantly given the state of a uniformly chosen other
// particle. The number of such branchings up to T gives the survival estimate
// p_T^N = (1 - 1/N)^{branchings}.
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fv/observable.hpp"
#include "fv/process_models.hpp"

namespace fv {

struct ObservableEstimate {
    std::string name;
    double eta = 0.0;    // η_T^N(φ)
    double gamma = 0.0;  // γ_T^N(φ) = p_est · η_T^N(φ)
};

struct EstimateRecord {
    std::size_t N = 0;
    double p_est = 1.0;
    std::vector<ObservableEstimate> estimates;
    std::uint64_t n_branchings = 0;
    std::uint64_t seed = 0;
    std::int64_t wall_ns = 0;

    const ObservableEstimate& estimate(const std::string& name) const;
};

/// State of the particle system at one requested observation time.
struct GridSnapshot {
    Time t = 0.0;
    double p = 1.0;
    std::uint64_t n_branchings = 0;
    std::size_t alive = 0;
    std::vector<double> eta;                // one per observable
    std::vector<std::uint32_t> occupancy;   // chains: live particles per state
    std::vector<double> positions;          // interval models: live coordinates
};

/// Who may donate its state to a killed particle. Anything other than
/// OtherParticle is a deliberately wrong rule kept for negative controls.
enum class DonorRule {
    OtherParticle,
    AnyParticle,  // includes the killed particle itself, reborn where it died
};

struct FvOptions {
    std::optional<std::uint64_t> branch_cap;
    DonorRule donor = DonorRule::OtherParticle;
    /// When false, killed particles are removed instead of reborn; p is then the
    /// surviving fraction and η the survivors' mean (0/0 = 0).
    bool branching = true;
    /// Keep particle states in grid snapshots (occupancy or positions).
    bool keep_states = true;
};

/// p = (1 - 1/N)^k evaluated as exp(k log1p(-1/N)).
double survival_estimate(std::uint64_t n_branchings, std::size_t N) noexcept;

/// 50·N·max(1, λ·T) with λ the maximal total event rate for chains, and
/// λ = 1/dt for interval models.
std::uint64_t default_branch_cap(const ProcessModel& model, std::size_t N, Time T);

EstimateRecord run_fv(const ProcessModel& model, std::size_t N, Time T,
                      const std::vector<Observable>& observables, std::uint64_t seed,
                      const FvOptions& options = {});

std::pair<EstimateRecord, std::vector<GridSnapshot>> run_fv_traced(
    const ProcessModel& model, std::size_t N, Time T, const std::vector<Observable>& observables,
    std::uint64_t seed, std::span<const Time> time_grid, const FvOptions& options = {});

/// As run_fv_traced, but starting from the given live particles instead of
/// i.i.d. draws from η_0.
std::pair<EstimateRecord, std::vector<GridSnapshot>> run_fv_from(
    const ProcessModel& model, std::vector<KilledState> initial, Time T,
    const std::vector<Observable>& observables, std::uint64_t seed,
    std::span<const Time> time_grid, const FvOptions& options = {});

/// N independent killed paths; p̂ = alive/N, η̂ = survivors' mean with 0/0 = 0.
EstimateRecord run_crude_mc(const ProcessModel& model, std::size_t N, Time T,
                            const std::vector<Observable>& observables, std::uint64_t seed);

}  // namespace fv

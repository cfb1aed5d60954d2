// Copyright 2026 The fleming-viot Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Replica ensembles of the particle system and the statistical checks run on
// them against exact oracle values.
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fv/fv_engine.hpp"
#include "fv/statistics.hpp"

namespace fv {

enum class Mode { FV, CrudeMC };

struct EnsembleSpec {
    std::size_t N = 2;
    Time T = 1.0;
    std::vector<Observable> observables;
    std::size_t R = 100;
    std::uint64_t master_seed = 0;
    Mode mode = Mode::FV;
    std::vector<Time> traced_grid;  // empty: untraced
    FvOptions options;
    unsigned workers = 0;  // 0: hardware concurrency
};

struct Ensemble {
    EnsembleSpec spec;
    std::vector<EstimateRecord> records;          // in replica order
    std::vector<std::vector<GridSnapshot>> traces;  // empty unless traced
};

/// Runs R replicas; replica r uses seed derive_seed(master_seed, r). The result
/// does not depend on the worker count. An ExplosionGuard is rethrown with the
/// lowest failing replica index attached.
Ensemble run_ensemble(const ProcessModel& model, const EnsembleSpec& spec);

/// Exact values the ensemble is compared against.
struct OracleTargets {
    double p = 1.0;
    double sigma2_p = 0.0;  // σ_T²(1_F)
    struct Entry {
        std::string name;
        double gamma = 0.0;
        double sigma2 = 0.0;
    };
    std::vector<Entry> observables;
};

OracleTargets oracle_targets(const ProcessModel& model, const std::vector<Observable>& observables,
                             Time T, int n_quad = 512);

struct QuantityStats {
    std::string quantity;  // "p", or "gamma:<name>" / "eta:<name>"
    stats::Moments raw;    // of the estimates themselves
    std::optional<double> target;
    std::optional<double> sigma2_oracle;
    std::optional<stats::Moments> rescaled;  // of √N(estimate - target)
    std::optional<double> ks_distance;       // rescaled errors vs N(0, σ²)
    std::optional<double> mse;               // E[(estimate - target)²]
    std::optional<double> n_mse_upper;       // one-sided upper bound on N·MSE at ci_level
};

struct EnsembleStats {
    std::size_t R = 0;
    std::size_t N = 0;
    double ci_level = 0.99;
    std::vector<QuantityStats> quantities;

    const QuantityStats& get(const std::string& quantity) const;
};

EnsembleStats compute_stats(const Ensemble& ensemble, const std::optional<OracleTargets>& targets,
                            double ci_level = 0.99);

std::vector<double> p_values(const Ensemble& ensemble);
std::vector<double> gamma_values(const Ensemble& ensemble, const std::string& name);

struct TestVerdict {
    enum class Outcome { Pass, Fail, NotApplicable };
    Outcome outcome = Outcome::NotApplicable;
    std::string detail;

    bool passed() const noexcept { return outcome == Outcome::Pass; }
};

const char* to_string(TestVerdict::Outcome outcome) noexcept;

/// Pass iff `oracle` lies in the t-interval of the sample mean at ci_level.
TestVerdict test_unbiasedness(std::span<const double> values, double oracle, double ci_level = 0.99);

/// How a grid snapshot turns into an estimate of γ_t(Q^{T-t}φ).
enum class MartingaleEstimator {
    Weighted,       // p_t^N · (1/N) Σ Q^{T-t}φ(X_t^i)
    SurvivorsOnly,  // survivors' mean of Q^{T-t}φ with no p_t^N factor
};

/// Per grid point, per replica: the estimate of γ_t(Q^{T-t}φ) for chain traces.
/// `q_values[k]` is Q^{T-t_k}φ over chain states.
std::vector<std::vector<double>> martingale_values(const std::vector<std::vector<GridSnapshot>>& traces,
                                                   const std::vector<Eigen::VectorXd>& q_values,
                                                   MartingaleEstimator estimator = MartingaleEstimator::Weighted);

/// Every grid mean must cover γ_T(φ) with Bonferroni-corrected t-intervals.
TestVerdict test_martingale_flatness(const std::vector<std::vector<double>>& values_per_grid,
                                     double gamma_T, double ci_level = 0.99);

struct LadderRung {
    std::size_t N = 0;
    std::vector<std::vector<GridSnapshot>> traces;
};

struct UniformConvergenceSummary {
    struct Row {
        std::size_t N = 0;
        std::size_t R = 0;
        double median_sup = 0.0;
        double median_sup_sqrt_n = 0.0;
        double q90_sup = 0.0;
    };
    std::vector<Row> rows;
    /// max/min of median·√N across the ladder.
    double sqrt_n_band = 0.0;
    TestVerdict verdict;
};

/// Medians of sup_t |p_t^N - p_t| along an N ladder; pass iff strictly decreasing.
UniformConvergenceSummary test_uniform_p_convergence(const std::vector<LadderRung>& ladder,
                                                     std::span<const double> p_oracle);

}  // namespace fv

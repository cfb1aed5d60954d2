// Copyright 2026 The fleming-viot Authors.
// SPDX-License-Identifier: Apache-2.0
#include "fv/clt_harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include "fv/errors.hpp"
#include "fv/rng.hpp"
#include "fv/semigroup_oracle.hpp"

namespace fv {

Ensemble run_ensemble(const ProcessModel& model, const EnsembleSpec& spec) {
    require(spec.R >= 1, "ensemble needs R >= 1");
    if (spec.mode == Mode::FV) require(spec.N >= 2, "population must be ≥ 2");
    require(spec.mode == Mode::FV || spec.traced_grid.empty(), "crude Monte Carlo runs are not traced");

    Ensemble out;
    out.spec = spec;
    out.records.resize(spec.R);
    const bool traced = !spec.traced_grid.empty();
    if (traced) out.traces.resize(spec.R);

    std::mutex error_mutex;
    std::optional<std::uint64_t> failed_replica;
    std::exception_ptr error;

    const auto run_one = [&](std::size_t r) {
        const std::uint64_t seed = derive_seed(spec.master_seed, r);
        if (spec.mode == Mode::CrudeMC) {
            out.records[r] = run_crude_mc(model, spec.N, spec.T, spec.observables, seed);
        } else if (traced) {
            auto [rec, snaps] = run_fv_traced(model, spec.N, spec.T, spec.observables, seed,
                                              spec.traced_grid, spec.options);
            out.records[r] = std::move(rec);
            out.traces[r] = std::move(snaps);
        } else {
            out.records[r] = run_fv(model, spec.N, spec.T, spec.observables, seed, spec.options);
        }
    };

    unsigned workers = spec.workers ? spec.workers : std::max(1u, std::thread::hardware_concurrency());
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, spec.R));
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (std::size_t r = next++; r < spec.R; r = next++) {
            try {
                run_one(r);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!failed_replica || r < *failed_replica) {
                    failed_replica = r;
                    error = std::current_exception();
                }
            }
        }
    };
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    }

    if (error) {
        try {
            std::rethrow_exception(error);
        } catch (FvError& e) {
            e.replica = failed_replica;
            throw;
        }
    }
    return out;
}

OracleTargets oracle_targets(const ProcessModel& model, const std::vector<Observable>& observables,
                             Time T, int n_quad) {
    OracleTargets targets;
    const Observable one = Observable::indicator_f();
    targets.p = exact_survival(model, T).value;
    targets.sigma2_p = sigma2_var2(model, one, T, n_quad).value;
    const auto ev = make_evaluator(model);
    for (const auto& phi : observables)
        targets.observables.push_back({phi.name, ev->gamma(T, phi, 1), sigma2_var2(model, phi, T, n_quad).value});
    return targets;
}

const QuantityStats& EnsembleStats::get(const std::string& quantity) const {
    for (const auto& q : quantities)
        if (q.quantity == quantity) return q;
    fail(ErrorKind::Validation, "no statistics for quantity '" + quantity + "'");
}

std::vector<double> p_values(const Ensemble& ensemble) {
    std::vector<double> v;
    v.reserve(ensemble.records.size());
    for (const auto& r : ensemble.records) v.push_back(r.p_est);
    return v;
}

std::vector<double> gamma_values(const Ensemble& ensemble, const std::string& name) {
    std::vector<double> v;
    v.reserve(ensemble.records.size());
    for (const auto& r : ensemble.records) v.push_back(r.estimate(name).gamma);
    return v;
}

namespace {

QuantityStats summarize(std::string quantity, const std::vector<double>& values, std::size_t N,
                        std::optional<double> target, std::optional<double> sigma2, double ci_level) {
    QuantityStats q;
    q.quantity = std::move(quantity);
    q.raw = stats::moments(values);
    if (!target) return q;
    q.target = target;
    q.sigma2_oracle = sigma2;
    const double root_n = std::sqrt(static_cast<double>(N));
    std::vector<double> rescaled, n_sq;
    rescaled.reserve(values.size());
    n_sq.reserve(values.size());
    double sq = 0.0;
    for (double v : values) {
        const double e = v - *target;
        rescaled.push_back(root_n * e);
        n_sq.push_back(static_cast<double>(N) * e * e);
        sq += e * e;
    }
    q.rescaled = stats::moments(rescaled);
    q.mse = sq / static_cast<double>(values.size());
    if (values.size() >= 2) q.n_mse_upper = stats::mean_upper_bound(n_sq, ci_level);
    if (sigma2 && *sigma2 > 0.0) q.ks_distance = stats::ks_distance_normal(rescaled, *sigma2);
    return q;
}

}  // namespace

EnsembleStats compute_stats(const Ensemble& ensemble, const std::optional<OracleTargets>& targets,
                            double ci_level) {
    require(!ensemble.records.empty(), "statistics need at least one replica");
    EnsembleStats st;
    st.R = ensemble.records.size();
    st.N = ensemble.spec.N;
    st.ci_level = ci_level;
    const bool fv = ensemble.spec.mode == Mode::FV;
    std::optional<double> p_target, p_sigma2;
    if (targets) {
        p_target = targets->p;
        // Crude Monte Carlo: Bernoulli variance of the survival indicator.
        p_sigma2 = fv ? targets->sigma2_p : targets->p * (1.0 - targets->p);
    }
    st.quantities.push_back(summarize("p", p_values(ensemble), st.N, p_target, p_sigma2, ci_level));
    for (const auto& phi : ensemble.spec.observables) {
        std::optional<double> g, s2, eta;
        if (targets) {
            for (const auto& e : targets->observables) {
                if (e.name != phi.name) continue;
                g = e.gamma;
                eta = e.gamma / targets->p;
                if (fv) s2 = e.sigma2;
            }
        }
        st.quantities.push_back(summarize("gamma:" + phi.name, gamma_values(ensemble, phi.name), st.N, g, s2,
                                          ci_level));
        std::vector<double> etas;
        for (const auto& r : ensemble.records) etas.push_back(r.estimate(phi.name).eta);
        st.quantities.push_back(summarize("eta:" + phi.name, etas, st.N, eta, std::nullopt, ci_level));
    }
    return st;
}

const char* to_string(TestVerdict::Outcome outcome) noexcept {
    switch (outcome) {
        case TestVerdict::Outcome::Pass: return "pass";
        case TestVerdict::Outcome::Fail: return "fail";
        case TestVerdict::Outcome::NotApplicable: return "not-applicable";
    }
    return "unknown";
}

TestVerdict test_unbiasedness(std::span<const double> values, double oracle, double ci_level) {
    TestVerdict v;
    if (values.size() < 2) {
        v.detail = "fewer than two replicas";
        return v;
    }
    const auto ci = stats::mean_interval(values, ci_level);
    std::ostringstream msg;
    msg.precision(10);
    msg << "oracle " << oracle << " vs " << ci_level * 100 << "% CI [" << ci.lower << ", " << ci.upper << "]";
    v.detail = msg.str();
    v.outcome = ci.contains(oracle) ? TestVerdict::Outcome::Pass : TestVerdict::Outcome::Fail;
    return v;
}

std::vector<std::vector<double>> martingale_values(const std::vector<std::vector<GridSnapshot>>& traces,
                                                   const std::vector<Eigen::VectorXd>& q_values,
                                                   MartingaleEstimator estimator) {
    std::vector<std::vector<double>> out(q_values.size());
    for (const auto& trace : traces) {
        require(trace.size() == q_values.size(), "trace length must match the number of grid points");
        for (std::size_t k = 0; k < trace.size(); ++k) {
            const auto& snap = trace[k];
            require(static_cast<Eigen::Index>(snap.occupancy.size()) == q_values[k].size(),
                    "snapshot occupancy does not match the chain");
            double acc = 0.0;
            std::size_t count = 0;
            for (std::size_t s = 0; s < snap.occupancy.size(); ++s) {
                acc += snap.occupancy[s] * q_values[k](static_cast<Eigen::Index>(s));
                count += snap.occupancy[s];
            }
            double value = 0.0;
            if (count == 0) {
                value = 0.0;
            } else if (estimator == MartingaleEstimator::Weighted) {
                value = snap.p * acc / static_cast<double>(count);
            } else {
                value = acc / static_cast<double>(count);
            }
            out[k].push_back(value);
        }
    }
    return out;
}

TestVerdict test_martingale_flatness(const std::vector<std::vector<double>>& values_per_grid,
                                     double gamma_T, double ci_level) {
    TestVerdict v;
    if (values_per_grid.empty() || values_per_grid.front().size() < 2) {
        v.detail = "no grid points or fewer than two replicas";
        return v;
    }
    const double per_point = 1.0 - (1.0 - ci_level) / static_cast<double>(values_per_grid.size());
    std::ostringstream msg;
    msg.precision(8);
    bool all = true;
    for (std::size_t k = 0; k < values_per_grid.size(); ++k) {
        const auto ci = stats::mean_interval(values_per_grid[k], per_point);
        const bool ok = ci.contains(gamma_T);
        all = all && ok;
        msg << (k ? "; " : "") << "t" << k << " [" << ci.lower << ", " << ci.upper << "]" << (ok ? "" : " MISS");
    }
    v.detail = "target " + std::to_string(gamma_T) + ": " + msg.str();
    v.outcome = all ? TestVerdict::Outcome::Pass : TestVerdict::Outcome::Fail;
    return v;
}

UniformConvergenceSummary test_uniform_p_convergence(const std::vector<LadderRung>& ladder,
                                                     std::span<const double> p_oracle) {
    UniformConvergenceSummary out;
    bool enough = !ladder.empty();
    for (const auto& rung : ladder) {
        UniformConvergenceSummary::Row row;
        row.N = rung.N;
        row.R = rung.traces.size();
        std::vector<double> sups;
        for (const auto& trace : rung.traces) {
            require(trace.size() == p_oracle.size(), "trace length must match the oracle grid");
            double sup = 0.0;
            for (std::size_t k = 0; k < trace.size(); ++k) sup = std::max(sup, std::abs(trace[k].p - p_oracle[k]));
            sups.push_back(sup);
        }
        if (!sups.empty()) {
            row.median_sup = stats::median(sups);
            row.median_sup_sqrt_n = row.median_sup * std::sqrt(static_cast<double>(rung.N));
            std::sort(sups.begin(), sups.end());
            row.q90_sup = sups[static_cast<std::size_t>(0.9 * static_cast<double>(sups.size() - 1))];
        }
        enough = enough && row.R >= 2;
        out.rows.push_back(row);
    }
    if (!out.rows.empty()) {
        double lo = out.rows.front().median_sup_sqrt_n, hi = lo;
        for (const auto& row : out.rows) {
            lo = std::min(lo, row.median_sup_sqrt_n);
            hi = std::max(hi, row.median_sup_sqrt_n);
        }
        out.sqrt_n_band = lo > 0.0 ? hi / lo : (hi > 0.0 ? INFINITY : 1.0);
    }
    if (!enough) {
        out.verdict.detail = "replica count too small for a median";
        return out;
    }
    const bool exact = std::all_of(out.rows.begin(), out.rows.end(),
                                   [](const auto& row) { return row.median_sup == 0.0 && row.q90_sup == 0.0; });
    bool decreasing = true;
    for (std::size_t k = 1; k < out.rows.size(); ++k)
        decreasing = decreasing && out.rows[k].median_sup < out.rows[k - 1].median_sup;
    std::ostringstream msg;
    for (const auto& row : out.rows) msg << (&row == &out.rows.front() ? "" : " ") << "N=" << row.N << " median=" << row.median_sup;
    out.verdict.detail = msg.str();
    if (exact) {
        out.verdict.detail = "p_t^N equals p_t on the whole grid";
    } else if (out.rows.size() < 2) {
        out.verdict.detail += " (a single rung says nothing about the trend)";
        return out;
    }
    out.verdict.outcome = (decreasing || exact) ? TestVerdict::Outcome::Pass : TestVerdict::Outcome::Fail;
    return out;
}

}  // namespace fv

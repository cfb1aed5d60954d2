// Copyright 2026 The fleming-viot Authors.
// SPDX-License-Identifier: Apache-2.0
#include "fv/fv_engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <queue>
#include <sstream>

#include "fv/errors.hpp"

namespace fv {

const ObservableEstimate& EstimateRecord::estimate(const std::string& name) const {
    for (const auto& e : estimates)
        if (e.name == name) return e;
    fail(ErrorKind::Validation, "no estimate for observable '" + name + "'");
}

double survival_estimate(std::uint64_t n_branchings, std::size_t N) noexcept {
    // long double keeps small cases such as (1 - 1/2)^3 exact after rounding
    const long double k = static_cast<long double>(n_branchings);
    return static_cast<double>(std::exp(k * std::log1p(-1.0L / static_cast<long double>(N))));
}

std::uint64_t default_branch_cap(const ProcessModel& model, std::size_t N, Time T) {
    double rate = 0.0;
    if (const auto* chain = std::get_if<AbsorbingChainModel>(&model)) {
        rate = chain->max_total_rate();
    } else {
        const double dt = std::holds_alternative<KilledBrownianModel>(model)
                              ? std::get<KilledBrownianModel>(model).dt
                              : std::get<KilledDiffusionModel>(model).dt;
        rate = 1.0 / dt;
    }
    const double cap = 50.0 * static_cast<double>(N) * std::max(1.0, rate * T);
    if (cap >= 9.0e18) return std::numeric_limits<std::uint64_t>::max();
    return static_cast<std::uint64_t>(std::ceil(cap));
}

namespace {

using Clock = std::chrono::steady_clock;

constexpr std::uint64_t kDynamicsStream = 0;
constexpr std::uint64_t kInitialStream = 1;

void validate_grid(std::span<const Time> grid, Time T) {
    for (std::size_t k = 0; k < grid.size(); ++k) {
        require(grid[k] >= 0.0 && grid[k] <= T, "time_grid entries must lie in [0, T]");
        if (k > 0) require(grid[k - 1] <= grid[k], "time_grid must be sorted");
    }
}

/// Bookkeeping shared by the chain and interval simulators.
class Population {
public:
    Population(std::size_t N, const FvOptions& options, std::uint64_t cap, RngStream& rng)
        : N_(N), options_(options), cap_(cap), rng_(rng), alive_(N, 1), alive_count_(N) {}

    std::size_t N() const noexcept { return N_; }
    bool alive(std::size_t i) const noexcept { return alive_[i] != 0; }
    std::size_t alive_count() const noexcept { return alive_count_; }
    std::uint64_t branchings() const noexcept { return branchings_; }

    double p() const noexcept {
        if (!options_.branching)
            return static_cast<double>(alive_count_) / static_cast<double>(N_);
        return survival_estimate(branchings_, N_);
    }

    /// Picks the donor for killed particle i; `blocked(j)` marks particles that
    /// cannot donate right now (dead, or killed in the same step and not yet
    /// reborn). Returns i itself only under DonorRule::AnyParticle. Returns N
    /// when every other particle is blocked.
    template <class Blocked>
    std::size_t pick_donor(std::size_t i, Blocked&& blocked) {
        const bool any = options_.donor == DonorRule::AnyParticle;
        bool someone = any;
        for (std::size_t j = 0; j < N_ && !someone; ++j) someone = (j != i) && !blocked(j);
        if (!someone) return N_;
        while (true) {
            std::size_t j = 0;
            if (any) {
                j = static_cast<std::size_t>(rng_.below(N_));
                if (j == i) return i;
            } else {
                j = static_cast<std::size_t>(rng_.below(N_ - 1));
                if (j >= i) ++j;
            }
            if (!blocked(j)) return j;
        }
    }

    void count_branching() {
        ++branchings_;
        if (branchings_ > cap_) {
            std::ostringstream msg;
            msg << "branch count exceeded branch_cap = " << cap_;
            fail(ErrorKind::ExplosionGuard, msg.str());
        }
    }

    void remove(std::size_t i) noexcept {
        alive_[i] = 0;
        --alive_count_;
    }

    const FvOptions& options() const noexcept { return options_; }

private:
    std::size_t N_;
    const FvOptions& options_;
    std::uint64_t cap_;
    RngStream& rng_;
    std::vector<char> alive_;
    std::size_t alive_count_;
    std::uint64_t branchings_ = 0;
};

template <class ValueOf>
std::vector<double> empirical_means(const Population& pop, const std::vector<Observable>& observables,
                                    ValueOf&& value_of) {
    std::vector<double> eta(observables.size(), 0.0);
    if (pop.alive_count() == 0) return eta;
    for (std::size_t k = 0; k < observables.size(); ++k) {
        double acc = 0.0;
        for (std::size_t i = 0; i < pop.N(); ++i)
            if (pop.alive(i)) acc += observables[k].at(value_of(i));
        eta[k] = acc / static_cast<double>(pop.alive_count());
    }
    return eta;
}

// ---------------------------------------------------------------------------
// Chains: exact event-driven simulation with one pending clock per particle.

struct ChainRun {
    std::vector<GridSnapshot> snapshots;
    std::vector<double> eta;
};

ChainRun simulate_chain(const AbsorbingChainModel& chain, std::vector<std::size_t> state, Time T,
                        const std::vector<Observable>& observables, std::span<const Time> grid,
                        Population& pop, RngStream& rng) {
    using Event = std::pair<Time, std::size_t>;  // ties resolve to the lowest index
    std::priority_queue<Event, std::vector<Event>, std::greater<>> clocks;
    const auto arm = [&](std::size_t i, Time now) {
        const double rate = chain.total_rate(state[i]);
        if (rate > 0.0) clocks.emplace(now + rng.exponential(rate), i);
    };
    for (std::size_t i = 0; i < state.size(); ++i) arm(i, 0.0);

    const auto snapshot = [&](Time t) {
        GridSnapshot snap;
        snap.t = t;
        snap.p = pop.p();
        snap.n_branchings = pop.branchings();
        snap.alive = pop.alive_count();
        snap.eta = empirical_means(pop, observables, [&](std::size_t i) { return static_cast<double>(state[i]); });
        if (pop.options().keep_states) {
            snap.occupancy.assign(chain.n_states(), 0);
            for (std::size_t i = 0; i < state.size(); ++i)
                if (pop.alive(i)) ++snap.occupancy[state[i]];
        }
        return snap;
    };

    ChainRun run;
    const auto advance_to = [&](Time stop) {
        while (!clocks.empty() && clocks.top().first <= stop) {
            const auto [tau, i] = clocks.top();
            clocks.pop();
            const std::size_t from = state[i];
            const std::size_t to = chain.draw_jump(from, rng);
            if (to != chain.n_states()) {
                state[i] = to;
                arm(i, tau);
                continue;
            }
            if (!pop.options().branching) {
                pop.remove(i);
                continue;
            }
            const std::size_t donor = pop.pick_donor(i, [](std::size_t) { return false; });
            state[i] = (donor == i) ? from : state[donor];
            pop.count_branching();
            arm(i, tau);
        }
    };

    for (const Time t : grid) {
        advance_to(t);
        run.snapshots.push_back(snapshot(t));
    }
    advance_to(T);
    run.eta = empirical_means(pop, observables, [&](std::size_t i) { return static_cast<double>(state[i]); });
    return run;
}

// ---------------------------------------------------------------------------
// Interval models: all particles advance on a shared Euler grid; killings
// detected in a step branch at its end, in increasing particle index.

ChainRun simulate_euler(const EulerScheme& scheme, std::vector<double> x, Time T,
                        const std::vector<Observable>& observables, std::span<const Time> grid,
                        Population& pop, RngStream& rng) {
    const std::size_t N = x.size();
    std::vector<double> start(N);
    std::vector<char> pending(N, 0);
    std::vector<std::size_t> killed;
    killed.reserve(N);

    const auto snapshot = [&](Time t) {
        GridSnapshot snap;
        snap.t = t;
        snap.p = pop.p();
        snap.n_branchings = pop.branchings();
        snap.alive = pop.alive_count();
        snap.eta = empirical_means(pop, observables, [&](std::size_t i) { return x[i]; });
        if (pop.options().keep_states)
            for (std::size_t i = 0; i < N; ++i)
                if (pop.alive(i)) snap.positions.push_back(x[i]);
        return snap;
    };

    const auto step_to = [&](Time from, Time to) {
        const double h = to - from;
        start = x;
        killed.clear();
        for (std::size_t i = 0; i < N; ++i) {
            if (!pop.alive(i)) continue;
            if (!scheme.step(x[i], h, rng)) {
                pending[i] = 1;
                killed.push_back(i);
            }
        }
        for (const std::size_t i : killed) {
            if (!pop.options().branching) {
                pending[i] = 0;
                pop.remove(i);
                continue;
            }
            std::size_t donor = pop.pick_donor(i, [&](std::size_t j) { return pending[j] != 0; });
            if (donor == i) {
                x[i] = start[i];
            } else if (donor == N) {
                // Every other particle died in this step too: fall back to the
                // start-of-step position of a uniformly chosen other particle.
                std::size_t j = static_cast<std::size_t>(rng.below(N - 1));
                if (j >= i) ++j;
                x[i] = start[j];
            } else {
                x[i] = x[donor];
            }
            pending[i] = 0;
            pop.count_branching();
        }
    };

    ChainRun run;
    Time t = 0.0;
    long long k = 1;  // index of the next base grid point k·dt
    const auto advance_to = [&](Time stop) {
        while (t < stop) {
            const Time base = static_cast<double>(k) * scheme.dt;
            Time next = std::min(base, stop);
            if (stop - base <= 1e-9 * scheme.dt) next = stop;
            if (next >= base - 1e-9 * scheme.dt) ++k;
            step_to(t, next);
            t = next;
        }
    };
    for (const Time g : grid) {
        advance_to(g);
        run.snapshots.push_back(snapshot(g));
    }
    advance_to(T);
    run.eta = empirical_means(pop, observables, [&](std::size_t i) { return x[i]; });
    return run;
}

std::pair<EstimateRecord, std::vector<GridSnapshot>> simulate(
    const ProcessModel& model, std::vector<KilledState> initial, Time T,
    const std::vector<Observable>& observables, std::uint64_t seed, std::span<const Time> grid,
    const FvOptions& options) {
    const std::size_t N = initial.size();
    require(N >= 2, "population must be ≥ 2");
    require(std::isfinite(T) && T > 0.0, "T must be > 0");
    validate(model);
    for (const auto& obs : observables) obs.validate(model);
    validate_grid(grid, T);
    for (const auto& s : initial) require(s.is_live(), "initial particles must be live");
    const std::uint64_t cap = options.branch_cap.value_or(default_branch_cap(model, N, T));
    require(cap > 0, "branch_cap must be > 0");

    const auto t0 = Clock::now();
    RngStream rng(seed, kDynamicsStream);
    Population pop(N, options, cap, rng);
    ChainRun run;
    if (const auto* chain = std::get_if<AbsorbingChainModel>(&model)) {
        std::vector<std::size_t> state(N);
        for (std::size_t i = 0; i < N; ++i) {
            state[i] = initial[i].index();
            require(state[i] < chain->n_states(), "initial chain state out of range");
        }
        run = simulate_chain(*chain, std::move(state), T, observables, grid, pop, rng);
    } else {
        const EulerScheme scheme = std::holds_alternative<KilledBrownianModel>(model)
                                       ? EulerScheme::of(std::get<KilledBrownianModel>(model))
                                       : EulerScheme::of(std::get<KilledDiffusionModel>(model));
        std::vector<double> x(N);
        for (std::size_t i = 0; i < N; ++i) {
            x[i] = initial[i].point();
            require(x[i] > scheme.a && x[i] < scheme.b, "initial position outside (a, b)");
        }
        run = simulate_euler(scheme, std::move(x), T, observables, grid, pop, rng);
    }

    EstimateRecord rec;
    rec.N = N;
    rec.seed = seed;
    rec.n_branchings = pop.branchings();
    rec.p_est = pop.p();
    for (std::size_t k = 0; k < observables.size(); ++k)
        rec.estimates.push_back({observables[k].name, run.eta[k], rec.p_est * run.eta[k]});
    rec.wall_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - t0).count();
    return {std::move(rec), std::move(run.snapshots)};
}

std::vector<KilledState> draw_initial(const ProcessModel& model, std::size_t N, std::uint64_t seed) {
    RngStream rng(seed, kInitialStream);
    std::vector<KilledState> init;
    init.reserve(N);
    for (std::size_t i = 0; i < N; ++i) init.push_back(sample_initial(model, rng));
    return init;
}

}  // namespace

EstimateRecord run_fv(const ProcessModel& model, std::size_t N, Time T,
                      const std::vector<Observable>& observables, std::uint64_t seed,
                      const FvOptions& options) {
    return run_fv_traced(model, N, T, observables, seed, {}, options).first;
}

std::pair<EstimateRecord, std::vector<GridSnapshot>> run_fv_traced(
    const ProcessModel& model, std::size_t N, Time T, const std::vector<Observable>& observables,
    std::uint64_t seed, std::span<const Time> time_grid, const FvOptions& options) {
    require(N >= 2, "population must be ≥ 2");
    return simulate(model, draw_initial(model, N, seed), T, observables, seed, time_grid, options);
}

std::pair<EstimateRecord, std::vector<GridSnapshot>> run_fv_from(
    const ProcessModel& model, std::vector<KilledState> initial, Time T,
    const std::vector<Observable>& observables, std::uint64_t seed,
    std::span<const Time> time_grid, const FvOptions& options) {
    return simulate(model, std::move(initial), T, observables, seed, time_grid, options);
}

EstimateRecord run_crude_mc(const ProcessModel& model, std::size_t N, Time T,
                            const std::vector<Observable>& observables, std::uint64_t seed) {
    require(N >= 1, "crude Monte Carlo needs N >= 1");
    require(std::isfinite(T) && T > 0.0, "T must be > 0");
    validate(model);
    for (const auto& obs : observables) obs.validate(model);

    const auto t0 = Clock::now();
    RngStream init_rng(seed, kInitialStream);
    RngStream rng(seed, kDynamicsStream);
    std::vector<double> sums(observables.size(), 0.0);
    std::size_t alive = 0;
    for (std::size_t i = 0; i < N; ++i) {
        const KilledState s0 = sample_initial(model, init_rng);
        const auto [s, tau] = advance_until(model, s0, 0.0, T, rng);
        if (s.is_cemetery()) continue;
        ++alive;
        for (std::size_t k = 0; k < observables.size(); ++k) sums[k] += observables[k](s);
    }

    EstimateRecord rec;
    rec.N = N;
    rec.seed = seed;
    rec.p_est = static_cast<double>(alive) / static_cast<double>(N);
    for (std::size_t k = 0; k < observables.size(); ++k) {
        const double eta = alive == 0 ? 0.0 : sums[k] / static_cast<double>(alive);
        rec.estimates.push_back({observables[k].name, eta, rec.p_est * eta});
    }
    rec.wall_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - t0).count();
    return rec;
}

}  // namespace fv

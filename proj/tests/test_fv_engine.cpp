// Copyright 2026 The fleming-viot Authors.
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "fv/errors.hpp"
#include "fv/fv_engine.hpp"
#include "test_util.hpp"

using namespace fv;

namespace {

struct MeanSe {
    double mean, se;
};

MeanSe mean_se(const std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return {m, std::sqrt(ss / (n - 1) / n)};
}

const std::vector<Observable> kOne{Observable::indicator_f()};

}  // namespace

TEST_SUITE("fv_engine") {

TEST_CASE("p estimate is (1 - 1/N)^k") {
    CHECK(survival_estimate(0, 7) == 1.0);
    CHECK(survival_estimate(3, 2) == 0.125);
    CHECK(survival_estimate(1, 4) == doctest::Approx(0.75).epsilon(1e-15));
    // no underflow drift at large counts
    CHECK(survival_estimate(100000, 1000) == doctest::Approx(std::pow(0.999, 100000)).epsilon(1e-12));
}

TEST_CASE("no killing: nothing branches") {
    const ProcessModel model = test::conservative_chain();
    for (const std::size_t N : {2u, 17u, 300u}) {
        const auto rec = run_fv(model, N, 5.0, kOne, 11);
        CHECK(rec.n_branchings == 0);
        CHECK(rec.p_est == 1.0);
        CHECK(rec.estimate("one").eta == 1.0);
        CHECK(rec.estimate("one").gamma == 1.0);
    }
}

TEST_CASE("record invariants over many seeds") {
    const ProcessModel model = test::two_state();
    const std::vector<Observable> obs{Observable::indicator_f(), {"s0", Observable::IndicatorStates{{0}}}};
    bool saw_three = false;
    for (std::uint64_t seed = 0; seed < 400; ++seed) {
        const auto rec = run_fv(model, 2, 1.0, obs, seed);
        CHECK(rec.p_est == survival_estimate(rec.n_branchings, 2));
        for (const auto& e : rec.estimates) CHECK(e.gamma == rec.p_est * e.eta);
        if (rec.n_branchings == 3) {
            saw_three = true;
            CHECK(rec.p_est == 0.125);
        }
    }
    CHECK(saw_three);
}

TEST_CASE("donor is never the killed particle") {
    // Only state 1 is killed and nothing moves between states. With N = 2 and
    // one particle in each state, the first killing must copy the survivor in
    // state 0, after which nobody can die.
    Eigen::MatrixXd jumps = Eigen::MatrixXd::Zero(2, 2);
    const ProcessModel model = AbsorbingChainModel::from_rates(jumps, Eigen::Vector2d(0.0, 5.0), Eigen::Vector2d(0.5, 0.5));
    const std::vector<Observable> obs{{"s0", Observable::IndicatorStates{{0}}}};
    const std::vector<KilledState> init{KilledState::at_index(0), KilledState::at_index(1)};
    bool self_donor_seen = false;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const auto [rec, snaps] = run_fv_from(model, init, 2.0, obs, seed, {});
        CHECK(rec.n_branchings <= 1);
        if (rec.n_branchings == 1) CHECK(rec.estimate("s0").eta == 1.0);

        FvOptions broken;
        broken.donor = DonorRule::AnyParticle;
        self_donor_seen |= run_fv_from(model, init, 2.0, obs, seed, {}, broken).first.n_branchings > 1;
    }
    // the negative control does break the rule
    CHECK(self_donor_seen);
}

TEST_CASE("traced snapshots at 0 and T") {
    const ProcessModel model = test::two_state();
    const std::vector<Observable> obs{Observable::indicator_f(), {"s0", Observable::IndicatorStates{{0}}}};
    const std::vector<Time> grid{0.0, 1.0};
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto [rec, snaps] = run_fv_traced(model, 20, 1.0, obs, seed, grid);
        REQUIRE(snaps.size() == 2);
        CHECK(snaps[0].p == 1.0);
        CHECK(snaps[0].n_branchings == 0);
        CHECK(snaps[1].p == rec.p_est);
        CHECK(snaps[1].n_branchings == rec.n_branchings);
        CHECK(snaps[1].alive == 20);
        for (std::size_t k = 0; k < obs.size(); ++k) CHECK(snaps[1].eta[k] == rec.estimates[k].eta);
        // tracing a chain does not touch its random stream
        const auto plain = run_fv(model, 20, 1.0, obs, seed);
        CHECK(plain.n_branchings == rec.n_branchings);
        CHECK(plain.estimates[1].eta == rec.estimates[1].eta);
    }
}

TEST_CASE("run_fv equals run_fv_from on its own initial draw") {
    const ProcessModel model = test::two_state();
    Eigen::MatrixXd jumps(2, 2);
    jumps << 0.0, 1.0, 2.0, 0.0;
    const ProcessModel mixed = AbsorbingChainModel::from_rates(jumps, Eigen::Vector2d(1.0, 0.5), Eigen::Vector2d(0.4, 0.6));
    const std::uint64_t seed = 1234;
    RngStream init_rng(seed, 1);  // the initial-draw substream
    std::vector<KilledState> init;
    for (int i = 0; i < 30; ++i) init.push_back(sample_initial(mixed, init_rng));
    const auto a = run_fv(mixed, 30, 1.5, kOne, seed);
    const auto b = run_fv_from(mixed, init, 1.5, kOne, seed, {}).first;
    CHECK(a.n_branchings == b.n_branchings);
    CHECK(a.estimates[0].eta == b.estimates[0].eta);
}

TEST_CASE("bit-reproducible for a fixed seed") {
    KilledDiffusionModel dm;
    dm.a = -1.0;
    dm.b = 1.0;
    dm.x0 = 0.0;
    dm.drift_c0 = 0.5;
    dm.drift_c1 = -1.0;
    dm.sigma = 0.8;
    const ProcessModel model = dm;
    const std::vector<Observable> obs{{"x", Observable::Affine{0.0, 1.0}}};
    const auto a = run_fv(model, 50, 1.0, obs, 77);
    const auto b = run_fv(model, 50, 1.0, obs, 77);
    CHECK(a.n_branchings == b.n_branchings);
    CHECK(a.estimates[0].eta == b.estimates[0].eta);
    CHECK(a.n_branchings > 0);
}

TEST_CASE("unbiasedness of p at N = 1000") {
    const ProcessModel model = test::single_state(1.0);
    std::vector<double> p;
    for (std::uint64_t r = 0; r < 5000; ++r) p.push_back(run_fv(model, 1000, 1.0, kOne, derive_seed(3, r)).p_est);
    const auto s = mean_se(p);
    CHECK(std::abs(s.mean - std::exp(-1.0)) < 3 * s.se);
}

TEST_CASE("traced p_t tracks e^{-t}") {
    const ProcessModel model = test::single_state(1.0);
    const std::vector<Time> grid{0.25, 0.5, 0.75, 1.0};
    std::vector<std::vector<double>> p(grid.size());
    for (std::uint64_t r = 0; r < 5000; ++r) {
        const auto snaps = run_fv_traced(model, 500, 1.0, kOne, derive_seed(4, r), grid).second;
        for (std::size_t k = 0; k < grid.size(); ++k) p[k].push_back(snaps[k].p);
    }
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const auto s = mean_se(p[k]);
        CHECK(std::abs(s.mean - std::exp(-grid[k])) < 3 * s.se);
    }
}

TEST_CASE("exchangeability: particle order does not matter") {
    const ProcessModel model = test::two_state();
    const std::vector<Observable> obs{{"s0", Observable::IndicatorStates{{0}}}};
    std::vector<KilledState> fwd;
    for (int i = 0; i < 10; ++i) fwd.push_back(KilledState::at_index(i < 4 ? 0 : 1));
    std::vector<KilledState> rev(fwd.rbegin(), fwd.rend());
    std::vector<double> pa, pb, ea, eb;
    for (std::uint64_t r = 0; r < 5000; ++r) {
        const auto a = run_fv_from(model, fwd, 1.0, obs, derive_seed(5, r), {}).first;
        const auto b = run_fv_from(model, rev, 1.0, obs, derive_seed(6, r), {}).first;
        pa.push_back(a.p_est);
        pb.push_back(b.p_est);
        ea.push_back(a.estimates[0].eta);
        eb.push_back(b.estimates[0].eta);
    }
    const auto check = [](const std::vector<double>& x, const std::vector<double>& y) {
        const auto sx = mean_se(x), sy = mean_se(y);
        CHECK(std::abs(sx.mean - sy.mean) < 3 * std::hypot(sx.se, sy.se));
    };
    check(pa, pb);
    check(ea, eb);
}

TEST_CASE("explosion guard") {
    Eigen::MatrixXd gen = Eigen::MatrixXd::Constant(1, 1, -50.0);
    const ProcessModel model = AbsorbingChainModel(gen, Eigen::VectorXd::Ones(1));
    FvOptions opt;
    opt.branch_cap = 1;
    try {
        run_fv(model, 10, 1.0, kOne, 1, opt);
        FAIL("expected ExplosionGuard");
    } catch (const FvError& e) {
        CHECK(e.kind() == ErrorKind::ExplosionGuard);
    }
    CHECK(default_branch_cap(model, 10, 1.0) == 50u * 10u * 50u);
    CHECK(default_branch_cap(test::single_state(0.1), 10, 1.0) == 500u);
    CHECK(default_branch_cap(KilledBrownianModel{}, 10, 0.1) == 50u * 10u * 1000u);
}

TEST_CASE("argument validation") {
    const ProcessModel model = test::single_state(1.0);
    try {
        run_fv(model, 1, 1.0, kOne, 1);
        FAIL("expected a validation error");
    } catch (const FvError& e) {
        CHECK(e.kind() == ErrorKind::Validation);
        CHECK(std::string(e.what()) == "population must be ≥ 2");
    }
    CHECK_THROWS_AS(run_fv(model, 10, 0.0, kOne, 1), FvError);
    const std::vector<Time> unsorted{0.5, 0.25};
    CHECK_THROWS_AS(run_fv_traced(model, 10, 1.0, kOne, 1, unsorted), FvError);
    const std::vector<Time> outside{1.5};
    CHECK_THROWS_AS(run_fv_traced(model, 10, 1.0, kOne, 1, outside), FvError);
}

TEST_CASE("Brownian particle system") {
    KilledBrownianModel bm;
    bm.dt = 1e-3;
    const ProcessModel model = bm;
    const std::vector<Observable> obs{Observable::indicator_f(), {"mid", Observable::IndicatorInterval{0.25, 0.75}}};
    const std::vector<Time> grid{0.05, 0.1};
    const auto [rec, snaps] = run_fv_traced(model, 200, 0.1, obs, 9, grid);
    CHECK(rec.n_branchings > 0);
    CHECK(rec.p_est == survival_estimate(rec.n_branchings, 200));
    REQUIRE(snaps.size() == 2);
    CHECK(snaps[1].positions.size() == 200);
    for (double x : snaps[1].positions) {
        CHECK(x > 0.0);
        CHECK(x < 1.0);
    }
    CHECK(snaps[1].p == rec.p_est);
}

TEST_CASE("crude Monte Carlo") {
    SUBCASE("no killing") {
        const auto rec = run_crude_mc(test::conservative_chain(), 100, 3.0, kOne, 1);
        CHECK(rec.p_est == 1.0);
        CHECK(rec.estimate("one").eta == 1.0);
    }
    SUBCASE("everyone dies: 0/0 = 0") {
        const auto rec = run_crude_mc(test::single_state(1000.0), 50, 1.0, kOne, 1);
        CHECK(rec.p_est == 0.0);
        CHECK(rec.estimate("one").eta == 0.0);
        CHECK(rec.estimate("one").gamma == 0.0);
    }
    SUBCASE("binomial accuracy") {
        const int N = 100000;
        const auto rec = run_crude_mc(test::single_state(1.0), N, 1.0, kOne, 2);
        const double p = std::exp(-1.0);
        CHECK(std::abs(rec.p_est - p) < 3 * std::sqrt(p * (1 - p) / N));
    }
}

TEST_CASE("without branching p is the surviving fraction") {
    FvOptions opt;
    opt.branching = false;
    const auto rec = run_fv(test::single_state(1.0), 1000, 1.0, kOne, 5, opt);
    CHECK(rec.n_branchings == 0);
    CHECK(rec.p_est < 0.5);
    CHECK(rec.estimate("one").eta == 1.0);
}

}

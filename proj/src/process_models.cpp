// Copyright 2026 The fleming-viot Authors.
// SPDX-License-Identifier: Apache-2.0
#include "fv/process_models.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fv/errors.hpp"

namespace fv {

std::string_view to_string(BoundaryRule rule) noexcept {
    return rule == BoundaryRule::SignCrossing ? "sign_crossing" : "bridge_correction";
}

// ---------------------------------------------------------------------------
// AbsorbingChainModel

AbsorbingChainModel::AbsorbingChainModel(Eigen::MatrixXd generator, Eigen::VectorXd initial_dist)
    : generator_(std::move(generator)), initial_dist_(std::move(initial_dist)) {
    require(generator_.rows() > 0 && generator_.rows() == generator_.cols(),
            "generator must be a non-empty square matrix");
    kill_rates_ = -generator_.rowwise().sum();
    for (Eigen::Index i = 0; i < kill_rates_.size(); ++i) {
        // Rounding in the row sum must not manufacture a negative rate.
        const double scale = std::max(1.0, std::abs(generator_(i, i)));
        if (kill_rates_(i) < 0.0 && kill_rates_(i) > -1e-12 * scale) kill_rates_(i) = 0.0;
    }
    validate_and_prepare();
}

AbsorbingChainModel::AbsorbingChainModel(Eigen::MatrixXd generator, Eigen::VectorXd kill_rates,
                                         Eigen::VectorXd initial_dist)
    : generator_(std::move(generator)),
      kill_rates_(std::move(kill_rates)),
      initial_dist_(std::move(initial_dist)) {
    require(generator_.rows() > 0 && generator_.rows() == generator_.cols(),
            "generator must be a non-empty square matrix");
    require(kill_rates_.size() == generator_.rows(), "kill_rates length must equal n_states");
    for (Eigen::Index i = 0; i < generator_.rows(); ++i) {
        double off = 0.0;
        for (Eigen::Index j = 0; j < generator_.cols(); ++j)
            if (j != i) off += generator_(i, j);
        const double expected = -off - kill_rates_(i);
        const double scale = std::max(1.0, std::abs(expected));
        if (std::abs(generator_(i, i) - expected) > 1e-9 * scale) {
            std::ostringstream msg;
            msg << "generator diagonal at state " << i << " is " << generator_(i, i)
                << " but -(off-diagonal sum) - kill_rate = " << expected;
            fail(ErrorKind::Validation, msg.str());
        }
    }
    validate_and_prepare();
}

AbsorbingChainModel AbsorbingChainModel::from_rates(const Eigen::MatrixXd& jump_rates,
                                                    const Eigen::VectorXd& kill_rates,
                                                    const Eigen::VectorXd& initial_dist) {
    require(jump_rates.rows() == jump_rates.cols(), "jump rate matrix must be square");
    Eigen::MatrixXd gen = jump_rates;
    for (Eigen::Index i = 0; i < gen.rows(); ++i) {
        gen(i, i) = 0.0;
        gen(i, i) = -gen.row(i).sum() - (i < kill_rates.size() ? kill_rates(i) : 0.0);
    }
    return AbsorbingChainModel(std::move(gen), kill_rates, initial_dist);
}

void AbsorbingChainModel::validate_and_prepare() {
    const auto n = generator_.rows();
    require(initial_dist_.size() == n, "initial_dist length must equal n_states");
    for (Eigen::Index i = 0; i < n; ++i) {
        require(std::isfinite(kill_rates_(i)) && kill_rates_(i) >= 0.0,
                "kill rates must be finite and nonnegative");
        for (Eigen::Index j = 0; j < n; ++j) {
            require(std::isfinite(generator_(i, j)), "generator entries must be finite");
            if (i != j) require(generator_(i, j) >= 0.0, "off-diagonal generator entries must be >= 0");
        }
        require(initial_dist_(i) >= 0.0, "initial_dist entries must be >= 0");
    }
    require(std::abs(initial_dist_.sum() - 1.0) <= 1e-12, "initial_dist must sum to 1 within 1e-12");
    never_killed_ = (kill_rates_.array() <= 0.0).all();

    jump_cdf_.assign(static_cast<std::size_t>(n), {});
    for (Eigen::Index i = 0; i < n; ++i) {
        auto& cdf = jump_cdf_[static_cast<std::size_t>(i)];
        double acc = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            acc += (i == j) ? 0.0 : generator_(i, j);
            cdf.push_back(acc);
        }
        cdf.push_back(acc + kill_rates_(i));
    }
    initial_cdf_.clear();
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) initial_cdf_.push_back(acc += initial_dist_(i));
}

double AbsorbingChainModel::max_total_rate() const noexcept {
    return (-generator_.diagonal()).maxCoeff();
}

std::size_t AbsorbingChainModel::draw_jump(std::size_t i, RngStream& rng) const noexcept {
    const auto& cdf = jump_cdf_[i];
    const double u = rng.uniform() * cdf.back();
    // Zero-width bins (the diagonal, absent transitions) are never selected
    // because upper_bound skips entries equal to u.
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    const auto k = static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - cdf.begin(),
                                                                      static_cast<std::ptrdiff_t>(cdf.size()) - 1));
    return k;  // k == n_states() means the cemetery.
}

std::size_t AbsorbingChainModel::draw_initial(RngStream& rng) const noexcept {
    const double u = rng.uniform() * initial_cdf_.back();
    const auto it = std::upper_bound(initial_cdf_.begin(), initial_cdf_.end(), u);
    return static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - initial_cdf_.begin(),
                                                             static_cast<std::ptrdiff_t>(initial_cdf_.size()) - 1));
}

// ---------------------------------------------------------------------------
// Interval models

namespace {
void validate_interval(double a, double b, double x0, double dt) {
    require(std::isfinite(a) && std::isfinite(b) && a < b, "interval requires a < b");
    require(a < x0 && x0 < b, "x0 must lie in the open interval (a, b)");
    require(std::isfinite(dt) && dt > 0.0, "dt must be > 0");
}
}  // namespace

void KilledBrownianModel::validate() const {
    validate_interval(a, b, x0, dt);
    require(series_terms >= 1, "series_terms must be >= 1");
}

void KilledDiffusionModel::validate() const {
    validate_interval(a, b, x0, dt);
    require(std::isfinite(drift_c0) && std::isfinite(drift_c1), "drift coefficients must be finite");
    require(std::isfinite(sigma) && sigma > 0.0, "diffusion coefficient must be > 0");
}

EulerScheme EulerScheme::of(const KilledBrownianModel& m) noexcept {
    return {m.a, m.b, 0.0, 0.0, 1.0, m.dt, m.boundary_rule};
}

EulerScheme EulerScheme::of(const KilledDiffusionModel& m) noexcept {
    return {m.a, m.b, m.drift_c0, m.drift_c1, m.sigma, m.dt, m.boundary_rule};
}

bool EulerScheme::step(double& x, double h, RngStream& rng) const {
    const double y = x + (drift_c0 + drift_c1 * x) * h + sigma * std::sqrt(h) * rng.normal();
    if (!std::isfinite(y)) fail(ErrorKind::NonFiniteState, "Euler update produced a non-finite state");
    if (y <= a || y >= b) return false;
    if (rule == BoundaryRule::BridgeCorrection) {
        // Probability that the Brownian bridge between x and y touched a or b.
        const double s2h = sigma * sigma * h;
        const double hit_a = std::exp(-2.0 * (x - a) * (y - a) / s2h);
        const double hit_b = std::exp(-2.0 * (b - x) * (b - y) / s2h);
        const double survive = (1.0 - hit_a) * (1.0 - hit_b);
        if (rng.uniform() >= survive) return false;
    }
    x = y;
    return true;
}

// ---------------------------------------------------------------------------

bool is_chain(const ProcessModel& model) noexcept {
    return std::holds_alternative<AbsorbingChainModel>(model);
}

std::pair<double, double> interval_of(const ProcessModel& model) {
    if (const auto* bm = std::get_if<KilledBrownianModel>(&model)) return {bm->a, bm->b};
    if (const auto* dm = std::get_if<KilledDiffusionModel>(&model)) return {dm->a, dm->b};
    fail(ErrorKind::Validation, "chain models have no interval");
}

void validate(const ProcessModel& model) {
    if (const auto* bm = std::get_if<KilledBrownianModel>(&model)) bm->validate();
    if (const auto* dm = std::get_if<KilledDiffusionModel>(&model)) dm->validate();
}

KilledState sample_initial(const ProcessModel& model, RngStream& rng) {
    if (const auto* chain = std::get_if<AbsorbingChainModel>(&model))
        return KilledState::at_index(chain->draw_initial(rng));
    if (const auto* bm = std::get_if<KilledBrownianModel>(&model)) return KilledState::at_point(bm->x0);
    return KilledState::at_point(std::get<KilledDiffusionModel>(model).x0);
}

namespace {

std::pair<KilledState, Time> advance_chain(const AbsorbingChainModel& chain, std::size_t i,
                                           Time t, Time t_stop, RngStream& rng) {
    while (true) {
        const double rate = chain.total_rate(i);
        if (rate <= 0.0) return {KilledState::at_index(i), t_stop};
        const Time next = t + rng.exponential(rate);
        if (next > t_stop) return {KilledState::at_index(i), t_stop};
        t = next;
        const std::size_t j = chain.draw_jump(i, rng);
        if (j == chain.n_states()) return {KilledState::cemetery(), t};
        i = j;
    }
}

std::pair<KilledState, Time> advance_euler(const EulerScheme& scheme, double x, Time t_now,
                                           Time t_stop, RngStream& rng) {
    const double span = t_stop - t_now;
    const auto steps = static_cast<long long>(std::max(1.0, std::ceil(span / scheme.dt - 1e-9)));
    for (long long k = 0; k < steps; ++k) {
        const Time start = t_now + static_cast<double>(k) * scheme.dt;
        const Time end = (k + 1 == steps) ? t_stop : start + scheme.dt;
        if (!scheme.step(x, end - start, rng)) return {KilledState::cemetery(), end};
    }
    return {KilledState::at_point(x), t_stop};
}

}  // namespace

std::pair<KilledState, Time> advance_until(const ProcessModel& model, const KilledState& state,
                                           Time t_now, Time t_stop, RngStream& rng) {
    require(state.is_live(), "advance_until requires a live state");
    require(t_now < t_stop, "advance_until requires t_now < t_stop");
    if (const auto* chain = std::get_if<AbsorbingChainModel>(&model))
        return advance_chain(*chain, state.index(), t_now, t_stop, rng);
    const EulerScheme scheme = std::holds_alternative<KilledBrownianModel>(model)
                                   ? EulerScheme::of(std::get<KilledBrownianModel>(model))
                                   : EulerScheme::of(std::get<KilledDiffusionModel>(model));
    return advance_euler(scheme, state.point(), t_now, t_stop, rng);
}

bool exact_semigroup_available(const ProcessModel& model) noexcept {
    return !std::holds_alternative<KilledDiffusionModel>(model);
}

}  // namespace fv

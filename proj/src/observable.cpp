// Copyright 2026 The fleming-viot Authors.
// SPDX-License-Identifier: Apache-2.0
#include "fv/observable.hpp"

#include <algorithm>
#include <cmath>

#include "fv/errors.hpp"

namespace fv {

namespace {
template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;
}  // namespace

double Observable::at(double x) const {
    return std::visit(
        overloaded{
            [](const IndicatorF&) { return 1.0; },
            [x](const IndicatorStates& k) {
                return std::any_of(k.states.begin(), k.states.end(),
                                   [x](std::size_t s) { return static_cast<double>(s) == x; })
                           ? 1.0
                           : 0.0;
            },
            [x](const IndicatorInterval& k) { return (x >= k.lo && x <= k.hi) ? 1.0 : 0.0; },
            [x](const Affine& k) { return k.c0 + k.c1 * x; },
            [x](const Trig& k) { return k.offset + k.amplitude * std::sin(k.frequency * x + k.phase); },
        },
        kind);
}

double Observable::operator()(const KilledState& s) const {
    if (s.is_cemetery()) return 0.0;
    return at(s.is_index() ? static_cast<double>(s.index()) : s.point());
}

Eigen::VectorXd Observable::tabulate(const AbsorbingChainModel& chain) const {
    Eigen::VectorXd v(static_cast<Eigen::Index>(chain.n_states()));
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = at(static_cast<double>(i));
    return v;
}

double Observable::sup_norm(const ProcessModel& model) const {
    if (const auto* chain = std::get_if<AbsorbingChainModel>(&model))
        return tabulate(*chain).cwiseAbs().maxCoeff();
    if (is_indicator()) return 1.0;
    const auto [a, b] = interval_of(model);
    if (const auto* aff = std::get_if<Affine>(&kind))
        return std::max(std::abs(aff->c0 + aff->c1 * a), std::abs(aff->c0 + aff->c1 * b));
    const auto& trig = std::get<Trig>(kind);
    return std::abs(trig.offset) + std::abs(trig.amplitude);
}

void Observable::validate(const ProcessModel& model) const {
    require(!name.empty(), "observable name must be non-empty");
    const bool chain = is_chain(model);
    std::visit(overloaded{
                   [](const IndicatorF&) {},
                   [&](const IndicatorStates& k) {
                       require(chain, "observable '" + name + "': state-set indicators need a chain model");
                       const auto n = std::get<AbsorbingChainModel>(model).n_states();
                       for (auto s : k.states)
                           require(s < n, "observable '" + name + "': state index out of range");
                   },
                   [&](const IndicatorInterval& k) {
                       require(!chain, "observable '" + name + "': interval indicators need an interval model");
                       require(k.lo <= k.hi, "observable '" + name + "': interval requires lo <= hi");
                   },
                   [&](const Affine& k) {
                       require(std::isfinite(k.c0) && std::isfinite(k.c1),
                               "observable '" + name + "': coefficients must be finite");
                   },
                   [&](const Trig& k) {
                       require(std::isfinite(k.offset) && std::isfinite(k.amplitude) &&
                                   std::isfinite(k.frequency) && std::isfinite(k.phase),
                               "observable '" + name + "': coefficients must be finite");
                   },
               },
               kind);
}

}  // namespace fv

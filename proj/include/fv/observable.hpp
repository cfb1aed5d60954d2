// Copyright 2026 The fleming-viot Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <string>
#include <variant>
#include <vector>

#include "fv/process_models.hpp"

namespace fv {

/// Test functions on F, extended by φ(∂) = 0. Chain states are evaluated at
/// their index, interval states at their coordinate.
struct Observable {
    struct IndicatorF {};
    struct IndicatorStates {
        std::vector<std::size_t> states;
    };
    struct IndicatorInterval {
        double lo, hi;  // closed sub-interval [lo, hi]
    };
    struct Affine {
        double c0, c1;
    };
    struct Trig {
        double offset, amplitude, frequency, phase;
    };
    using Kind = std::variant<IndicatorF, IndicatorStates, IndicatorInterval, Affine, Trig>;

    std::string name;
    Kind kind;

    static Observable indicator_f(std::string name = "one") { return {std::move(name), IndicatorF{}}; }

    double operator()(const KilledState& s) const;
    double at(double x) const;

    bool is_indicator() const noexcept {
        return !std::holds_alternative<Affine>(kind) && !std::holds_alternative<Trig>(kind);
    }

    /// sup |φ| over the live state space of `model`.
    double sup_norm(const ProcessModel& model) const;

    /// Values φ(0), ..., φ(n-1) on the states of a chain.
    Eigen::VectorXd tabulate(const AbsorbingChainModel& chain) const;

    void validate(const ProcessModel& model) const;
};

}  // namespace fv

// Copyright 2026 The fleming-viot Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace fv {

enum class ErrorKind {
    Validation,
    NonFiniteState,
    ExplosionGuard,
    UnsupportedModel,
    UnsupportedObservable,
    QuadratureNotConverged,
};

const char* to_string(ErrorKind kind) noexcept;

class FvError : public std::runtime_error {
public:
    FvError(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

    /// Replica that raised the error, when it came out of an ensemble.
    std::optional<std::uint64_t> replica;

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw FvError(kind, what); }

inline void require(bool cond, const std::string& what) {
    if (!cond) fail(ErrorKind::Validation, what);
}

}  // namespace fv

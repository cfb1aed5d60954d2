// Copyright 2026 The fleming-viot Authors.
// SPDX-License-Identifier: Apache-2.0
#include "fv/errors.hpp"

namespace fv {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::Validation: return "Validation";
        case ErrorKind::NonFiniteState: return "NonFiniteState";
        case ErrorKind::ExplosionGuard: return "ExplosionGuard";
        case ErrorKind::UnsupportedModel: return "UnsupportedModel";
        case ErrorKind::UnsupportedObservable: return "UnsupportedObservable";
        case ErrorKind::QuadratureNotConverged: return "QuadratureNotConverged";
    }
    return "Unknown";
}

}  // namespace fv

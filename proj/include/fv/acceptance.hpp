// Copyright 2026 The fleming-viot Authors.
// SPDX-License-Identifier: Apache-2.0
//
// The acceptance suite: pinned-seed ensembles compared against exact oracle
// values, one verdict per criterion.
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace fv {

struct AcceptanceOptions {
    /// Replica counts divided by 10, variance bands widened from ±10% to ±25%.
    bool quick = false;
    unsigned workers = 0;
    std::optional<std::filesystem::path> output_dir;
    std::uint64_t master_seed = 20260611;
    /// Negative control: donors drawn from all N particles, the killed one included.
    bool inject_self_donor = false;
    /// Run only criteria whose id is listed (all when empty).
    std::vector<std::string> only;
};

struct CriterionResult {
    std::string id;
    std::string title;
    bool hard = true;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;
    double budget_seconds = 0.0;  // 0: no runtime budget
};

struct AcceptanceReport {
    std::vector<CriterionResult> criteria;

    bool all_hard_passed() const;
    const CriterionResult* first_hard_failure() const;
};

/// Runs the suite, streaming one line per criterion to `log` when given.
AcceptanceReport run_acceptance(const AcceptanceOptions& options, std::ostream* log = nullptr);

/// CLI entry point: prints the table; exit 0 iff every hard gate passes.
int cmd_acceptance(const AcceptanceOptions& options);

}  // namespace fv

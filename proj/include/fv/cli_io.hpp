// Copyright 2026 The fleming-viot Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Experiment configuration and result files: JSON configs in, stats.json,
// replicas.csv, oracle.json and error.json out.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fv/clt_harness.hpp"
#include "fv/semigroup_oracle.hpp"

namespace fv::io {

using nlohmann::json;

enum class RunMode { FV, Crude, Both };
enum class OracleMode { Auto, On, Off };

struct ExperimentConfig {
    explicit ExperimentConfig(ProcessModel m) : model(std::move(m)) {}

    ProcessModel model;
    std::size_t N = 2;
    Time T = 1.0;
    std::size_t R = 100;
    std::vector<Observable> observables;
    std::uint64_t master_seed = 0;
    RunMode mode = RunMode::FV;
    std::vector<Time> traced_grid;
    std::filesystem::path output_dir = "out";
    OracleMode oracle = OracleMode::Auto;
    int n_quad = kDefaultQuadPanels;
    std::optional<std::uint64_t> branch_cap;
};

/// Parses and validates a config document. Throws FvError(Validation).
ExperimentConfig parse_config(const json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Inverse of parse_config; the result parses back to an equal config.
json config_to_json(const ExperimentConfig& cfg);

ProcessModel parse_model(const json& doc);
json model_to_json(const ProcessModel& model);
Observable parse_observable(const json& doc);
json observable_to_json(const Observable& obs);

json stats_to_json(const EnsembleStats& stats, Mode mode);
json oracle_report_to_json(const OracleReport& report);

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

/// Per-replica CSV: seed, p_est, n_branchings, eta:<name>..., gamma:<name>...
std::string records_csv(const std::vector<EstimateRecord>& records, const std::vector<Observable>& observables);

void write_text(const std::filesystem::path& path, const std::string& text);
void write_json(const std::filesystem::path& path, const json& doc);

/// Process exit codes.
enum ExitCode : int {
    kOk = 0,
    kFailure = 1,
    kValidation = 2,
    kExplosion = 3,
    kUnsupported = 4,
};

struct CommandOptions {
    std::optional<std::filesystem::path> output_dir;
    unsigned workers = 0;
};

int cmd_run(const std::filesystem::path& config_path, const CommandOptions& options);
int cmd_oracle(const std::filesystem::path& config_path, const CommandOptions& options);

}  // namespace fv::io

// Copyright 2026 The fleming-viot Authors.
// SPDX-License-Identifier: Apache-2.0
//
// fvsim: run Fleming-Viot ensembles, evaluate oracles, run the acceptance suite.
#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "fv/acceptance.hpp"
#include "fv/cli_io.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Fleming-Viot particle system simulator and verification harness"};
    app.require_subcommand(1);

    unsigned workers = 0;
    std::string output_dir;
    app.add_option("--workers", workers, "Concurrent replica workers (results do not depend on it)");
    app.add_option("--output-dir", output_dir, "Override the output directory");

    std::string config;
    auto* run = app.add_subcommand("run", "Run the ensemble described by a config file");
    run->add_option("config", config, "Experiment config (JSON)")->required();

    auto* oracle = app.add_subcommand("oracle", "Evaluate the exact oracle only");
    oracle->add_option("config", config, "Experiment config (JSON)")->required();

    bool quick = false;
    std::string fault;
    std::vector<std::string> only;
    std::optional<std::uint64_t> seed;
    auto* acceptance = app.add_subcommand("acceptance", "Run the acceptance suite with pinned seeds");
    acceptance->add_flag("--quick", quick, "Reduce replica counts 10x with widened variance bands");
    acceptance->add_option("--only", only, "Run only the listed criteria (e.g. AC3 AC9)");
    acceptance->add_option("--seed", seed, "Master seed (defaults to the pinned seed)");
    acceptance->add_option("--inject-fault", fault, "Negative control: 'self-donor'")
        ->check(CLI::IsMember({"self-donor"}));

    CLI11_PARSE(app, argc, argv);

    fv::io::CommandOptions options;
    options.workers = workers;
    if (!output_dir.empty()) options.output_dir = output_dir;

    if (*run) return fv::io::cmd_run(config, options);
    if (*oracle) return fv::io::cmd_oracle(config, options);

    fv::AcceptanceOptions acc;
    acc.quick = quick;
    acc.workers = workers;
    acc.output_dir = options.output_dir;
    acc.only = only;
    acc.inject_self_donor = fault == "self-donor";
    if (seed) acc.master_seed = *seed;
    return fv::cmd_acceptance(acc);
}

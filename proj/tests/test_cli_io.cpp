// Copyright 2026 The fleming-viot Authors.
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "fv/cli_io.hpp"
#include "fv/errors.hpp"

using namespace fv;
using namespace fv::io;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("fv_cli_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

fs::path write_config(const fs::path& dir, const json& doc) {
    const fs::path p = dir / "config.json";
    std::ofstream(p) << doc.dump(2);
    return p;
}

json read_json(const fs::path& p) {
    std::ifstream in(p);
    REQUIRE(in.good());
    return json::parse(in);
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json single_state_config(std::size_t N, std::size_t R) {
    return {{"model", {{"type", "chain"}, {"generator", {{-1.0}}}}},
            {"N", N},
            {"T", 1.0},
            {"R", R},
            {"observables", {{{"name", "one"}, {"kind", "indicator_f"}}}},
            {"master_seed", 42}};
}

CommandOptions into(const fs::path& dir) {
    CommandOptions o;
    o.output_dir = dir / "out";
    o.workers = 2;
    return o;
}

}  // namespace

TEST_SUITE("cli_io") {

TEST_CASE("config round trip") {
    const json doc = {
        {"model", {{"type", "diffusion"}, {"drift", {{"c0", 0.5}, {"c1", -1.0}}}, {"sigma", 0.8}, {"a", -1.0}, {"b", 1.0}, {"x0", 0.0}, {"dt", 1e-3}, {"boundary_rule", "bridge_correction"}}},
        {"N", 64},
        {"T", 2.0},
        {"R", 10},
        {"observables", {{{"name", "x"}, {"kind", "affine"}, {"c0", 0.0}, {"c1", 1.0}},
                         {{"name", "w"}, {"kind", "trig"}, {"offset", 0.1}, {"amplitude", 0.5}, {"frequency", 3.0}, {"phase", 0.2}},
                         {{"name", "pos"}, {"kind", "indicator_interval"}, {"lo", 0.0}, {"hi", 1.0}}}},
        {"master_seed", 5},
        {"mode", "both"},
        {"traced_grid", {0.5, 1.0}},
        {"oracle", "off"},
        {"branch_cap", 1000000}};
    const auto cfg = parse_config(doc);
    const json again = config_to_json(cfg);
    CHECK(config_to_json(parse_config(again)) == again);
    CHECK(again.at("model").at("boundary_rule") == "bridge_correction");
    CHECK(again.at("observables").size() == 3);
    CHECK(again.at("branch_cap") == 1000000);

    const json chain = {{"model", {{"type", "chain"}, {"generator", {{-2.0, 1.0}, {1.0, -3.0}}}, {"initial_dist", {0.25, 0.75}}}},
                        {"N", 10}, {"T", 1.0}};
    const auto c = parse_config(chain);
    CHECK(config_to_json(parse_config(config_to_json(c))) == config_to_json(c));
    CHECK(c.observables.size() == 1);  // defaults to 1_F
}

TEST_CASE("config validation") {
    auto doc = single_state_config(1, 10);
    try {
        parse_config(doc);
        FAIL("expected a validation error");
    } catch (const FvError& e) {
        CHECK(std::string(e.what()) == "population must be ≥ 2");
    }
    doc["mode"] = "crude";
    CHECK_NOTHROW(parse_config(doc));  // one path is fine for crude Monte Carlo

    auto bad = single_state_config(10, 10);
    bad["model"]["type"] = "levy";
    CHECK_THROWS_AS(parse_config(bad), FvError);
    bad = single_state_config(10, 10);
    bad["observables"] = {{{"name", "a"}, {"kind", "indicator_f"}}, {{"name", "a"}, {"kind", "indicator_f"}}};
    CHECK_THROWS_AS(parse_config(bad), FvError);
    bad = single_state_config(10, 10);
    bad["observables"] = {{{"name", "s"}, {"kind", "indicator_set"}, {"states", {3}}}};
    CHECK_THROWS_AS(parse_config(bad), FvError);
    bad = single_state_config(10, 10);
    bad["traced_grid"] = {0.5, 0.2};
    CHECK_THROWS_AS(parse_config(bad), FvError);
    bad = single_state_config(10, 10);
    bad.erase("T");
    CHECK_THROWS_AS(parse_config(bad), FvError);
}

TEST_CASE("run: N = 1 exits 2 with a reason") {
    const auto dir = scratch("n1");
    const int code = cmd_run(write_config(dir, single_state_config(1, 10)), into(dir));
    CHECK(code == 2);
    const auto err = read_json(dir / "out" / "error.json");
    CHECK(err.at("exit_code") == 2);
    CHECK(err.at("reason") == "population must be ≥ 2");
    CHECK(err.at("kind") == "Validation");
}

TEST_CASE("run: tripped branch cap exits 3") {
    const auto dir = scratch("cap");
    auto doc = single_state_config(10, 5);
    doc["model"]["generator"] = {{-50.0}};
    doc["branch_cap"] = 1;
    CHECK(cmd_run(write_config(dir, doc), into(dir)) == 3);
    const auto err = read_json(dir / "out" / "error.json");
    CHECK(err.at("kind") == "ExplosionGuard");
    CHECK(err.at("replica") == 0);
}

TEST_CASE("oracle: general diffusion exits 4") {
    const auto dir = scratch("diffusion");
    const json doc = {{"model", {{"type", "diffusion"}, {"drift", {{"c0", 0.5}, {"c1", -1.0}}}, {"sigma", 0.8}, {"a", -1.0}, {"b", 1.0}, {"x0", 0.0}, {"dt", 1e-3}}},
                      {"N", 10}, {"T", 1.0}};
    CHECK(cmd_oracle(write_config(dir, doc), into(dir)) == 4);
    CHECK(read_json(dir / "out" / "error.json").at("kind") == "UnsupportedModel");
}

TEST_CASE("oracle: T = 0 gives the initial variance") {
    const auto dir = scratch("t0");
    const json doc = {{"model", {{"type", "chain"}, {"generator", {{-2.0, 1.0}, {1.0, -3.0}}}, {"initial_dist", {0.5, 0.5}}}},
                      {"N", 10},
                      {"T", 0.0},
                      {"observables", {{{"name", "s0"}, {"kind", "indicator_set"}, {"states", {0}}}}}};
    CHECK(cmd_oracle(write_config(dir, doc), into(dir)) == 0);
    const auto rep = read_json(dir / "out" / "oracle.json");
    CHECK(rep.at("p_T").get<double>() == 1.0);
    CHECK(rep.at("observables")[0].at("sigma2_var2").at("value").get<double>() == doctest::Approx(0.25));
}

TEST_CASE("run: bundled single-state config") {
    const auto dir = scratch("bundled");
    const fs::path config = fs::path(FV_SOURCE_DIR) / "configs" / "single_state.json";
    REQUIRE(fs::exists(config));
    CHECK(cmd_run(config, into(dir)) == 0);
    const auto stats = read_json(dir / "out" / "stats.json");
    CHECK(stats.at("oracle").at("sigma2_p").get<double>() == doctest::Approx(0.135335).epsilon(1e-5));
    CHECK(stats.at("oracle").at("observables")[0].at("sigma2_var2").get<double>() == doctest::Approx(std::exp(-2.0)).epsilon(1e-12));
    const auto R = stats.at("config").at("R").get<std::size_t>();
    const auto csv = read_text(dir / "out" / "replicas.csv");
    CHECK(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')) == R + 1);
    CHECK(csv.rfind("seed,p_est,n_branchings,eta:one,gamma:one\n", 0) == 0);
    CHECK(fs::exists(dir / "out" / "oracle.json"));
}

TEST_CASE("seed override and worker count") {
    const auto dir = scratch("override");
    const auto cfg = write_config(dir, single_state_config(20, 30));
    auto opt = into(dir);
    opt.workers = 1;
    REQUIRE(cmd_run(cfg, opt) == 0);
    const auto base = read_text(dir / "out" / "replicas.csv");
    opt.workers = 3;
    REQUIRE(cmd_run(cfg, opt) == 0);
    CHECK(read_text(dir / "out" / "replicas.csv") == base);

    ::setenv("FV_SEED_OVERRIDE", "43", 1);
    const int code = cmd_run(cfg, opt);
    ::unsetenv("FV_SEED_OVERRIDE");
    REQUIRE(code == 0);
    CHECK(read_text(dir / "out" / "replicas.csv") != base);
    CHECK(read_json(dir / "out" / "stats.json").at("config").at("master_seed") == 43);
}

TEST_CASE("format_double round trips") {
    for (const double v : {0.1, 1.0 / 3.0, 1e-300, 123456789.0, -2.5}) CHECK(std::stod(format_double(v)) == v);
    CHECK(format_double(0.5) == "0.5");
}

}

// Copyright 2026 The fleming-viot Authors.
// SPDX-License-Identifier: Apache-2.0
#include "fv/cli_io.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "fv/errors.hpp"

namespace fv::io {

namespace {

template <class T>
T get(const json& doc, const char* key) {
    if (!doc.contains(key)) fail(ErrorKind::Validation, std::string("missing field '") + key + "'");
    try {
        return doc.at(key).get<T>();
    } catch (const json::exception&) {
        fail(ErrorKind::Validation, std::string("field '") + key + "' has the wrong type");
    }
}

template <class T>
T get_or(const json& doc, const char* key, T fallback) {
    if (!doc.contains(key) || doc.at(key).is_null()) return fallback;
    return get<T>(doc, key);
}

Eigen::MatrixXd to_matrix(const json& rows, const char* what) {
    if (!rows.is_array() || rows.empty()) fail(ErrorKind::Validation, std::string(what) + " must be a non-empty array");
    const auto n = static_cast<Eigen::Index>(rows.size());
    Eigen::MatrixXd m(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& row = rows.at(static_cast<std::size_t>(i));
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != n)
            fail(ErrorKind::Validation, std::string(what) + " must be square");
        for (Eigen::Index j = 0; j < n; ++j) {
            if (!row.at(static_cast<std::size_t>(j)).is_number())
                fail(ErrorKind::Validation, std::string(what) + " entries must be numbers");
            m(i, j) = row.at(static_cast<std::size_t>(j)).get<double>();
        }
    }
    return m;
}

Eigen::VectorXd to_vector(const json& arr, const char* what) {
    if (!arr.is_array()) fail(ErrorKind::Validation, std::string(what) + " must be an array");
    Eigen::VectorXd v(static_cast<Eigen::Index>(arr.size()));
    for (std::size_t i = 0; i < arr.size(); ++i) {
        if (!arr[i].is_number()) fail(ErrorKind::Validation, std::string(what) + " entries must be numbers");
        v(static_cast<Eigen::Index>(i)) = arr[i].get<double>();
    }
    return v;
}

json to_json_vector(const Eigen::VectorXd& v) {
    json arr = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
    return arr;
}

BoundaryRule parse_rule(const std::string& s) {
    if (s == "sign_crossing") return BoundaryRule::SignCrossing;
    if (s == "bridge_correction") return BoundaryRule::BridgeCorrection;
    fail(ErrorKind::Validation, "boundary_rule must be 'sign_crossing' or 'bridge_correction'");
}

}  // namespace

ProcessModel parse_model(const json& doc) {
    if (!doc.is_object()) fail(ErrorKind::Validation, "model must be an object");
    const auto type = get<std::string>(doc, "type");
    if (type == "chain") {
        Eigen::MatrixXd gen = to_matrix(doc.at("generator"), "generator");
        Eigen::VectorXd init = doc.contains("initial_dist")
                                   ? to_vector(doc.at("initial_dist"), "initial_dist")
                                   : Eigen::VectorXd::Unit(gen.rows(), 0);
        if (doc.contains("kill_rates"))
            return AbsorbingChainModel(std::move(gen), to_vector(doc.at("kill_rates"), "kill_rates"), std::move(init));
        return AbsorbingChainModel(std::move(gen), std::move(init));
    }
    if (type == "brownian") {
        KilledBrownianModel m;
        m.a = get_or(doc, "a", m.a);
        m.b = get_or(doc, "b", m.b);
        m.x0 = get<double>(doc, "x0");
        m.series_terms = get_or(doc, "series_terms", m.series_terms);
        m.dt = get_or(doc, "dt", m.dt);
        m.boundary_rule = parse_rule(get_or<std::string>(doc, "boundary_rule", "bridge_correction"));
        m.validate();
        return m;
    }
    if (type == "diffusion") {
        KilledDiffusionModel m;
        if (doc.contains("drift")) {
            m.drift_c0 = get_or(doc.at("drift"), "c0", 0.0);
            m.drift_c1 = get_or(doc.at("drift"), "c1", 0.0);
        }
        m.sigma = get_or(doc, "sigma", m.sigma);
        m.a = get<double>(doc, "a");
        m.b = get<double>(doc, "b");
        m.x0 = get<double>(doc, "x0");
        m.dt = get<double>(doc, "dt");
        m.boundary_rule = parse_rule(get_or<std::string>(doc, "boundary_rule", "sign_crossing"));
        m.validate();
        return m;
    }
    fail(ErrorKind::Validation, "model.type must be 'chain', 'brownian' or 'diffusion'");
}

json model_to_json(const ProcessModel& model) {
    if (const auto* chain = std::get_if<AbsorbingChainModel>(&model)) {
        json gen = json::array();
        for (Eigen::Index i = 0; i < chain->generator().rows(); ++i)
            gen.push_back(to_json_vector(chain->generator().row(i).transpose()));
        return {{"type", "chain"},
                {"generator", gen},
                {"kill_rates", to_json_vector(chain->kill_rates())},
                {"initial_dist", to_json_vector(chain->initial_dist())}};
    }
    if (const auto* bm = std::get_if<KilledBrownianModel>(&model)) {
        return {{"type", "brownian"},     {"a", bm->a},   {"b", bm->b},
                {"x0", bm->x0},           {"dt", bm->dt}, {"series_terms", bm->series_terms},
                {"boundary_rule", std::string(to_string(bm->boundary_rule))}};
    }
    const auto& dm = std::get<KilledDiffusionModel>(model);
    return {{"type", "diffusion"},
            {"drift", {{"c0", dm.drift_c0}, {"c1", dm.drift_c1}}},
            {"sigma", dm.sigma},
            {"a", dm.a},
            {"b", dm.b},
            {"x0", dm.x0},
            {"dt", dm.dt},
            {"boundary_rule", std::string(to_string(dm.boundary_rule))}};
}

Observable parse_observable(const json& doc) {
    if (!doc.is_object()) fail(ErrorKind::Validation, "observable must be an object");
    Observable obs;
    obs.name = get<std::string>(doc, "name");
    const auto kind = get<std::string>(doc, "kind");
    if (kind == "indicator_f") {
        obs.kind = Observable::IndicatorF{};
    } else if (kind == "indicator_set") {
        obs.kind = Observable::IndicatorStates{get<std::vector<std::size_t>>(doc, "states")};
    } else if (kind == "indicator_interval") {
        obs.kind = Observable::IndicatorInterval{get<double>(doc, "lo"), get<double>(doc, "hi")};
    } else if (kind == "affine") {
        obs.kind = Observable::Affine{get_or(doc, "c0", 0.0), get_or(doc, "c1", 0.0)};
    } else if (kind == "trig") {
        obs.kind = Observable::Trig{get_or(doc, "offset", 0.0), get<double>(doc, "amplitude"),
                                    get<double>(doc, "frequency"), get_or(doc, "phase", 0.0)};
    } else {
        fail(ErrorKind::Validation, "unknown observable kind '" + kind + "'");
    }
    return obs;
}

json observable_to_json(const Observable& obs) {
    json out{{"name", obs.name}};
    if (std::holds_alternative<Observable::IndicatorF>(obs.kind)) {
        out["kind"] = "indicator_f";
    } else if (const auto* s = std::get_if<Observable::IndicatorStates>(&obs.kind)) {
        out["kind"] = "indicator_set";
        out["states"] = s->states;
    } else if (const auto* iv = std::get_if<Observable::IndicatorInterval>(&obs.kind)) {
        out["kind"] = "indicator_interval";
        out["lo"] = iv->lo;
        out["hi"] = iv->hi;
    } else if (const auto* af = std::get_if<Observable::Affine>(&obs.kind)) {
        out["kind"] = "affine";
        out["c0"] = af->c0;
        out["c1"] = af->c1;
    } else {
        const auto& tr = std::get<Observable::Trig>(obs.kind);
        out["kind"] = "trig";
        out["offset"] = tr.offset;
        out["amplitude"] = tr.amplitude;
        out["frequency"] = tr.frequency;
        out["phase"] = tr.phase;
    }
    return out;
}

ExperimentConfig parse_config(const json& doc) {
    if (!doc.is_object()) fail(ErrorKind::Validation, "config must be a JSON object");
    if (!doc.contains("model")) fail(ErrorKind::Validation, "missing field 'model'");
    ExperimentConfig cfg(parse_model(doc.at("model")));

    const auto N = get<long long>(doc, "N");
    const auto mode = get_or<std::string>(doc, "mode", "fv");
    if (mode == "fv") cfg.mode = RunMode::FV;
    else if (mode == "crude") cfg.mode = RunMode::Crude;
    else if (mode == "both") cfg.mode = RunMode::Both;
    else fail(ErrorKind::Validation, "mode must be 'fv', 'crude' or 'both'");
    if (cfg.mode != RunMode::Crude) require(N >= 2, "population must be ≥ 2");
    require(N >= 1, "population must be ≥ 1");
    cfg.N = static_cast<std::size_t>(N);

    cfg.T = get<double>(doc, "T");
    require(std::isfinite(cfg.T) && cfg.T >= 0.0, "T must be finite and >= 0");
    const auto R = get_or<long long>(doc, "R", 100);
    require(R >= 1, "R must be >= 1");
    cfg.R = static_cast<std::size_t>(R);

    if (doc.contains("observables")) {
        if (!doc.at("observables").is_array()) fail(ErrorKind::Validation, "observables must be an array");
        for (const auto& o : doc.at("observables")) cfg.observables.push_back(parse_observable(o));
    }
    if (cfg.observables.empty()) cfg.observables.push_back(Observable::indicator_f());
    for (std::size_t i = 0; i < cfg.observables.size(); ++i) {
        cfg.observables[i].validate(cfg.model);
        for (std::size_t j = 0; j < i; ++j)
            require(cfg.observables[i].name != cfg.observables[j].name, "observable names must be unique");
    }

    cfg.master_seed = get_or<std::uint64_t>(doc, "master_seed", 0);
    cfg.traced_grid = get_or<std::vector<double>>(doc, "traced_grid", {});
    for (std::size_t k = 0; k < cfg.traced_grid.size(); ++k) {
        require(cfg.traced_grid[k] >= 0.0 && cfg.traced_grid[k] <= cfg.T, "traced_grid entries must lie in [0, T]");
        if (k) require(cfg.traced_grid[k - 1] <= cfg.traced_grid[k], "traced_grid must be sorted");
    }
    cfg.output_dir = get_or<std::string>(doc, "output_dir", "out");
    const auto oracle = get_or<std::string>(doc, "oracle", "auto");
    if (oracle == "auto") cfg.oracle = OracleMode::Auto;
    else if (oracle == "on") cfg.oracle = OracleMode::On;
    else if (oracle == "off") cfg.oracle = OracleMode::Off;
    else fail(ErrorKind::Validation, "oracle must be 'auto', 'on' or 'off'");
    cfg.n_quad = get_or(doc, "n_quad", kDefaultQuadPanels);
    require(cfg.n_quad >= 2, "n_quad must be >= 2");
    if (doc.contains("branch_cap") && !doc.at("branch_cap").is_null()) {
        const auto cap = get<long long>(doc, "branch_cap");
        require(cap > 0, "branch_cap must be > 0");
        cfg.branch_cap = static_cast<std::uint64_t>(cap);
    }
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Validation, "cannot open config file '" + path.string() + "'");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        fail(ErrorKind::Validation, std::string("config is not valid JSON: ") + e.what());
    }
    return parse_config(doc);
}

// ---------------------------------------------------------------------------
// Output

json config_to_json(const ExperimentConfig& cfg) {
    static constexpr const char* kModes[] = {"fv", "crude", "both"};
    static constexpr const char* kOracle[] = {"auto", "on", "off"};
    json doc{{"model", model_to_json(cfg.model)},
             {"N", cfg.N},
             {"T", cfg.T},
             {"R", cfg.R},
             {"observables", json::array()},
             {"master_seed", cfg.master_seed},
             {"mode", kModes[static_cast<int>(cfg.mode)]},
             {"traced_grid", cfg.traced_grid},
             {"output_dir", cfg.output_dir.string()},
             {"oracle", kOracle[static_cast<int>(cfg.oracle)]},
             {"n_quad", cfg.n_quad}};
    for (const auto& o : cfg.observables) doc["observables"].push_back(observable_to_json(o));
    if (cfg.branch_cap) doc["branch_cap"] = *cfg.branch_cap;
    return doc;
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string records_csv(const std::vector<EstimateRecord>& records, const std::vector<Observable>& observables) {
    std::string out = "seed,p_est,n_branchings";
    for (const auto& o : observables) out += ",eta:" + o.name;
    for (const auto& o : observables) out += ",gamma:" + o.name;
    out += '\n';
    for (const auto& r : records) {
        out += std::to_string(r.seed) + ',' + format_double(r.p_est) + ',' + std::to_string(r.n_branchings);
        for (const auto& e : r.estimates) out += ',' + format_double(e.eta);
        for (const auto& e : r.estimates) out += ',' + format_double(e.gamma);
        out += '\n';
    }
    return out;
}

namespace {

json moments_json(const stats::Moments& m) {
    return {{"mean", m.mean}, {"var", m.var}, {"skewness", m.skewness}, {"excess_kurtosis", m.excess_kurtosis}};
}

json sigma2_json(const Sigma2Result& s) {
    return {{"value", s.value}, {"quad_error", s.quad_error}, {"n_quad", s.n_quad}};
}

}  // namespace

json stats_to_json(const EnsembleStats& st, Mode mode) {
    json out{{"mode", mode == Mode::FV ? "fv" : "crude"},
             {"R", st.R},
             {"N", st.N},
             {"ci_level", st.ci_level},
             {"quantities", json::array()}};
    for (const auto& q : st.quantities) {
        json item{{"quantity", q.quantity}, {"raw", moments_json(q.raw)}};
        if (q.target) item["target"] = *q.target;
        if (q.sigma2_oracle) item["sigma2_oracle"] = *q.sigma2_oracle;
        if (q.rescaled) {
            item["rescaled"] = moments_json(*q.rescaled);
            item["mean"] = q.rescaled->mean;
            item["var"] = q.rescaled->var;
            item["skewness"] = q.rescaled->skewness;
            item["excess_kurtosis"] = q.rescaled->excess_kurtosis;
        }
        if (q.ks_distance) item["ks_distance"] = *q.ks_distance;
        if (q.mse) item["mse"] = *q.mse;
        if (q.n_mse_upper) item["n_mse_upper"] = *q.n_mse_upper;
        out["quantities"].push_back(std::move(item));
    }
    return out;
}

json oracle_report_to_json(const OracleReport& report) {
    json out{{"T", report.T},
             {"time_grid", report.time_grid},
             {"p_vals", report.p_vals},
             {"dp_vals", report.dp_vals},
             {"p_T", report.p_vals.empty() ? json(nullptr) : json(report.p_vals.back())},
             {"observables", json::array()}};
    for (const auto& o : report.observables) {
        out["observables"].push_back({{"name", o.name},
                                      {"gamma_T", o.gamma_T},
                                      {"eta_T", o.eta_T},
                                      {"sigma2_var2", sigma2_json(o.sigma2_var2)},
                                      {"sigma2_var1", sigma2_json(o.sigma2_var1)},
                                      {"sigma2_crude", o.sigma2_crude},
                                      {"var_eta_q", o.var_eta_q},
                                      {"gamma_q2", o.gamma_q2}});
    }
    return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << text;
}

void write_json(const std::filesystem::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

// ---------------------------------------------------------------------------
// Commands

namespace {

int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Validation:
        case ErrorKind::QuadratureNotConverged: return kValidation;
        case ErrorKind::ExplosionGuard: return kExplosion;
        case ErrorKind::UnsupportedModel:
        case ErrorKind::UnsupportedObservable: return kUnsupported;
        case ErrorKind::NonFiniteState: return kFailure;
    }
    return kFailure;
}

/// Best guess at where error.json should go before the config has been parsed.
std::filesystem::path error_dir(const std::filesystem::path& config_path, const CommandOptions& options) {
    if (options.output_dir) return *options.output_dir;
    try {
        std::ifstream in(config_path);
        const auto doc = json::parse(in);
        if (doc.contains("output_dir") && doc.at("output_dir").is_string())
            return doc.at("output_dir").get<std::string>();
    } catch (...) {
    }
    return ".";
}

template <class Body>
int guarded(const std::filesystem::path& config_path, const CommandOptions& options, Body&& body) {
    json error;
    int code = kOk;
    try {
        return body();
    } catch (const FvError& e) {
        code = exit_code_for(e.kind());
        error = {{"exit_code", code}, {"kind", to_string(e.kind())}, {"reason", e.what()}};
        if (e.replica) error["replica"] = *e.replica;
    } catch (const std::exception& e) {
        code = kFailure;
        error = {{"exit_code", code}, {"kind", "Internal"}, {"reason", e.what()}};
    }
    std::cerr << "error: " << error["reason"].get<std::string>() << '\n';
    try {
        write_json(error_dir(config_path, options) / "error.json", error);
    } catch (const std::exception& e) {
        std::cerr << "error: could not write error.json: " << e.what() << '\n';
    }
    return code;
}

ExperimentConfig load_with_overrides(const std::filesystem::path& path, const CommandOptions& options) {
    ExperimentConfig cfg = load_config(path);
    if (options.output_dir) cfg.output_dir = *options.output_dir;
    if (const char* env = std::getenv("FV_SEED_OVERRIDE"); env && *env) {
        std::uint64_t seed = 0;
        const auto* end = env + std::char_traits<char>::length(env);
        const auto res = std::from_chars(env, end, seed);
        require(res.ec == std::errc{} && res.ptr == end, "FV_SEED_OVERRIDE must be an unsigned integer");
        cfg.master_seed = seed;
    }
    return cfg;
}

bool oracle_supported(const ExperimentConfig& cfg) {
    if (!exact_semigroup_available(cfg.model)) return false;
    try {
        const auto ev = make_evaluator(cfg.model);
        for (const auto& o : cfg.observables) ev->check(o);
    } catch (const FvError&) {
        return false;
    }
    return true;
}

json verdict_json(const std::string& test, const std::string& quantity, const TestVerdict& v) {
    return {{"test", test}, {"quantity", quantity}, {"outcome", to_string(v.outcome)}, {"detail", v.detail}};
}

// Oracle-based checks on one FV ensemble at 99%.
json fv_verdicts(const ExperimentConfig& cfg, const Ensemble& ens, const OracleTargets& targets) {
    json out = json::array();
    out.push_back(verdict_json("unbiasedness", "p", test_unbiasedness(p_values(ens), targets.p)));
    for (const auto& e : targets.observables)
        out.push_back(verdict_json("unbiasedness", "gamma:" + e.name,
                                   test_unbiasedness(gamma_values(ens, e.name), e.gamma)));
    if (cfg.traced_grid.empty()) return out;

    if (const auto* chain = std::get_if<AbsorbingChainModel>(&cfg.model)) {
        for (std::size_t i = 0; i < cfg.observables.size(); ++i) {
            std::vector<Eigen::VectorXd> q;
            for (const Time t : cfg.traced_grid) q.push_back(propagate(*chain, cfg.T - t, cfg.observables[i]));
            const auto values = martingale_values(ens.traces, q);
            out.push_back(verdict_json("martingale_flatness", "gamma:" + cfg.observables[i].name,
                                       test_martingale_flatness(values, targets.observables[i].gamma)));
        }
    }
    std::vector<double> p_grid;
    for (const Time t : cfg.traced_grid) p_grid.push_back(exact_survival(cfg.model, t).value);
    const auto summary = test_uniform_p_convergence({LadderRung{cfg.N, ens.traces}}, p_grid);
    json v = verdict_json("uniform_p_convergence", "p", summary.verdict);
    v["median_sup"] = summary.rows.front().median_sup;
    v["q90_sup"] = summary.rows.front().q90_sup;
    out.push_back(std::move(v));
    return out;
}

}  // namespace

int cmd_run(const std::filesystem::path& config_path, const CommandOptions& options) {
    return guarded(config_path, options, [&] {
        const ExperimentConfig cfg = load_with_overrides(config_path, options);
        require(cfg.T > 0.0, "T must be > 0 to simulate");
        const bool with_oracle = cfg.oracle == OracleMode::On || (cfg.oracle == OracleMode::Auto && oracle_supported(cfg));

        std::optional<OracleTargets> targets;
        std::optional<OracleReport> report;
        if (with_oracle) {
            report = build_oracle_report(cfg.model, cfg.observables, cfg.T, cfg.traced_grid, cfg.n_quad);
            targets = oracle_targets(cfg.model, cfg.observables, cfg.T, cfg.n_quad);
        }

        json stats_doc{{"config", config_to_json(cfg)}, {"ensembles", json::array()}};
        const auto run_mode = [&](Mode mode, const char* csv_name) {
            EnsembleSpec spec;
            spec.N = cfg.N;
            spec.T = cfg.T;
            spec.observables = cfg.observables;
            spec.R = cfg.R;
            spec.master_seed = cfg.master_seed;
            spec.mode = mode;
            if (mode == Mode::FV) spec.traced_grid = cfg.traced_grid;
            spec.options.branch_cap = cfg.branch_cap;
            // Chain occupancies feed the martingale check.
            spec.options.keep_states = is_chain(cfg.model) && !spec.traced_grid.empty() && targets;
            spec.workers = options.workers;
            const Ensemble ens = run_ensemble(cfg.model, spec);
            write_text(cfg.output_dir / csv_name, records_csv(ens.records, cfg.observables));
            json ens_doc = stats_to_json(compute_stats(ens, targets), mode);
            if (mode == Mode::FV && targets) ens_doc["verdicts"] = fv_verdicts(cfg, ens, *targets);
            stats_doc["ensembles"].push_back(std::move(ens_doc));
        };
        if (cfg.mode != RunMode::Crude) run_mode(Mode::FV, "replicas.csv");
        if (cfg.mode == RunMode::Crude) run_mode(Mode::CrudeMC, "replicas.csv");
        if (cfg.mode == RunMode::Both) run_mode(Mode::CrudeMC, "replicas_crude.csv");

        if (report) {
            json oracle = oracle_report_to_json(*report);
            stats_doc["oracle"] = {{"p_T", targets->p}, {"sigma2_p", targets->sigma2_p}, {"observables", json::array()}};
            for (const auto& o : report->observables)
                stats_doc["oracle"]["observables"].push_back({{"name", o.name},
                                                              {"gamma_T", o.gamma_T},
                                                              {"sigma2_var2", o.sigma2_var2.value},
                                                              {"sigma2_var1", o.sigma2_var1.value},
                                                              {"sigma2_crude", o.sigma2_crude}});
            write_json(cfg.output_dir / "oracle.json", oracle);
        }
        write_json(cfg.output_dir / "stats.json", stats_doc);
        std::cout << "wrote results to " << cfg.output_dir.string() << '\n';
        return static_cast<int>(kOk);
    });
}

int cmd_oracle(const std::filesystem::path& config_path, const CommandOptions& options) {
    return guarded(config_path, options, [&] {
        const ExperimentConfig cfg = load_with_overrides(config_path, options);
        const auto report = build_oracle_report(cfg.model, cfg.observables, cfg.T, cfg.traced_grid, cfg.n_quad);
        write_json(cfg.output_dir / "oracle.json", oracle_report_to_json(report));
        std::cout << "p_T = " << format_double(report.p_vals.back()) << '\n';
        for (const auto& o : report.observables)
            std::cout << o.name << ": sigma2_var2 = " << format_double(o.sigma2_var2.value)
                      << ", sigma2_var1 = " << format_double(o.sigma2_var1.value) << '\n';
        return static_cast<int>(kOk);
    });
}

}  // namespace fv::io

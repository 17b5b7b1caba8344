#pragma once

// Run configuration for the command-line tool: JSON config files, flag overrides,
// builtin flow names and the report.json layout.

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include <znneig/harness.hpp>

namespace znneig::cli {

using nlohmann::json;

struct Scenario {
    std::string flow = "paper";
    /// Unset means the flow's default; a held nullopt means no conjugation.
    std::optional<std::optional<std::uint64_t>> randomize_seed;
    /// Unset means the flow's default; an empty list means no jumps.
    std::optional<std::vector<double>> jumps;
    double tau = 1.0 / 200.0;
    double eta = 4.5;
    std::optional<double> mu;
    std::string preset = "ifd5";
    double jump_threshold = 300.0;
    std::optional<double> t0;
    std::optional<double> tf;
    std::string output = "";
    std::string metric = "per-pair";
    std::vector<double> taus;
    std::string sweep_hold = "product";
};

inline const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys{"flow", "randomize_seed", "jumps", "tau", "eta", "mu",
                                            "preset", "jump_threshold", "t0", "tf", "output",
                                            "metric", "taus", "sweep_hold"};
    return keys;
}

inline bool is_benchmark_flow(const std::string& name) { return name == "paper" || name == "paper-raw"; }

namespace detail {

template <class T>
T get_as(const json& j, const char* key) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("config key '") + key + "' has the wrong type");
    }
}

inline double get_number(const json& j, const char* key) {
    if (!j.at(key).is_number()) throw ConfigError(std::string("config key '") + key + "' must be a number");
    return j.at(key).get<double>();
}

} // namespace detail

/// Applies a JSON config object on top of `s`. Unknown keys are rejected.
inline void apply_json(Scenario& s, const json& j) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    for (const auto& [key, _] : j.items())
        if (!known_keys().count(key)) throw ConfigError("unknown config key '" + key + "'");
    if (j.contains("flow")) s.flow = detail::get_as<std::string>(j, "flow");
    if (j.contains("randomize_seed")) {
        const auto& v = j.at("randomize_seed");
        if (v.is_null()) s.randomize_seed = std::optional<std::uint64_t>{};
        else if (v.is_number_unsigned()) s.randomize_seed = std::optional<std::uint64_t>{v.get<std::uint64_t>()};
        else throw ConfigError("randomize_seed must be a nonnegative integer or null");
    }
    if (j.contains("jumps")) {
        const auto& v = j.at("jumps");
        if (v.is_null()) s.jumps = std::vector<double>{};
        else s.jumps = detail::get_as<std::vector<double>>(j, "jumps");
    }
    if (j.contains("tau")) s.tau = detail::get_number(j, "tau");
    if (j.contains("eta")) s.eta = detail::get_number(j, "eta");
    if (j.contains("mu")) {
        if (j.at("mu").is_null()) s.mu.reset();
        else s.mu = detail::get_number(j, "mu");
    }
    if (j.contains("preset")) s.preset = detail::get_as<std::string>(j, "preset");
    if (j.contains("jump_threshold")) s.jump_threshold = detail::get_number(j, "jump_threshold");
    if (j.contains("t0")) s.t0 = detail::get_number(j, "t0");
    if (j.contains("tf")) s.tf = detail::get_number(j, "tf");
    if (j.contains("output")) s.output = detail::get_as<std::string>(j, "output");
    if (j.contains("metric")) s.metric = detail::get_as<std::string>(j, "metric");
    if (j.contains("taus")) s.taus = detail::get_as<std::vector<double>>(j, "taus");
    if (j.contains("sweep_hold")) s.sweep_hold = detail::get_as<std::string>(j, "sweep_hold");
}

inline json read_json_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file " + path);
    try {
        return json::parse(is);
    } catch (const json::parse_error& e) {
        throw ConfigError("config file " + path + ": " + e.what());
    }
}

/// "8,14.5" -> {8, 14.5}; "none" or "" -> {}.
inline std::vector<double> parse_list(const std::string& text, const std::string& what) {
    std::vector<double> out;
    if (text.empty() || text == "none") return out;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(tok, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != tok.size()) throw ConfigError("bad number '" + tok + "' in " + what);
        out.push_back(v);
    }
    return out;
}

/// A scenario with every default filled in.
struct Resolved {
    Scenario scenario;
    std::optional<std::uint64_t> seed;
    std::vector<double> jumps;
    SolverConfig config;
    Metric metric = Metric::per_pair;
    SweepHold hold = SweepHold::product;
    MatrixFlow flow;
};

inline MatrixFlow constant3_flow() {
    return constant_flow(Matrix{{2.0, 1.0, 0.0}, {1.0, 3.0, 1.0}, {0.0, 1.0, 4.0}}, "constant3");
}

inline Resolved resolve(Scenario s) {
    const bool benchmark = is_benchmark_flow(s.flow);
    std::optional<std::uint64_t> seed;
    if (s.randomize_seed) seed = *s.randomize_seed;
    else if (s.flow == "paper") seed = 1;
    if (s.flow == "paper-raw" && seed) throw ConfigError("paper-raw is unconjugated; use flow 'paper' with a seed");

    std::vector<double> jumps = s.jumps ? *s.jumps : (benchmark ? std::vector<double>{8.0, 14.5} : std::vector<double>{});
    if (!benchmark && !jumps.empty()) throw ConfigError("jumps are only available for the paper and paper-raw flows");

    std::optional<MatrixFlow> flow;
    try {
        if (benchmark) {
            flow = benchmark_scenario(seed, JumpSchedule(jumps));
        } else {
            if (s.flow == "constant3") flow = constant3_flow();
            else if (s.flow == "diag-linear") flow = diag_linear_flow();
            else flow = flow_from_file(s.flow);
            if (seed) flow = conjugate(*flow, random_orthogonal(flow->dimension(), *seed));
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError("flow '" + s.flow + "': " + e.what());
    }

    SolverConfig c;
    c.tau = s.tau;
    c.eta = s.eta;
    c.mu = s.mu;
    c.formulas = catalog().preset(s.preset);
    c.jump_threshold = s.jump_threshold;
    const bool bounded = std::isfinite(flow->span_begin()) && std::isfinite(flow->span_end());
    c.t0 = s.t0.value_or(bounded ? flow->span_begin() : 0.0);
    c.tf = s.tf.value_or(bounded ? flow->span_end() : 20.0);
    c.validate();
    if (!flow->covers(c.t0) || !flow->covers(c.time(c.steps())))
        throw ConfigError("[t0, tf] is outside the flow's span");
    for (double tau : s.taus)
        if (!(tau > 0.0)) throw ConfigError("taus must be positive");

    Resolved r{s, seed, jumps, c, parse_metric(s.metric), parse_sweep_hold(s.sweep_hold), *flow};
    r.scenario.t0 = c.t0;
    r.scenario.tf = c.tf;
    return r;
}

/// Config echo: feeding this back as a config file reproduces the run.
inline json echo(const Resolved& r) {
    const auto& s = r.scenario;
    json j;
    j["flow"] = s.flow;
    j["randomize_seed"] = r.seed ? json(*r.seed) : json(nullptr);
    j["jumps"] = r.jumps.empty() ? json(nullptr) : json(r.jumps);
    j["tau"] = r.config.tau;
    j["eta"] = r.config.eta;
    j["mu"] = r.config.mu ? json(*r.config.mu) : json(nullptr);
    j["preset"] = s.preset;
    j["jump_threshold"] = r.config.jump_threshold;
    j["t0"] = r.config.t0;
    j["tf"] = r.config.tf;
    j["output"] = s.output;
    j["metric"] = s.metric;
    if (!s.taus.empty()) {
        j["taus"] = s.taus;
        j["sweep_hold"] = s.sweep_hold;
    }
    return j;
}

inline json nan_safe(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json summary_json(const RunReport& rep) {
    const auto& s = rep.summary;
    json j;
    j["flow_label"] = rep.flow_label;
    j["metric"] = std::string(to_string(rep.metric));
    j["completed"] = s.completed;
    j["abort_reason"] = s.abort_reason ? json(*s.abort_reason) : json(nullptr);
    j["instants"] = s.instants;
    j["restart_count"] = s.restart_count;
    j["restarts"] = json::array();
    for (std::size_t i = 0; i < s.restart_times.size(); ++i)
        j["restarts"].push_back({{"t", s.restart_times[i]}, {"adot_norm", nan_safe(s.restart_adot_norms[i])}});
    j["steady_instants"] = s.steady_instants;
    j["median_residual"] = nan_safe(s.median_residual);
    j["max_residual"] = nan_safe(s.max_residual);
    j["median_orth_deviation"] = nan_safe(s.median_orth_deviation);
    j["max_orth_deviation"] = nan_safe(s.max_orth_deviation);
    j["max_smooth_adot_norm"] = s.max_smooth_adot_norm;
    j["least_squares_solves"] = s.least_squares_solves;
    j["norm_excursions"] = s.norm_excursions;
    j["glitch_windows"] = json::array();
    for (const auto& w : s.glitch_windows) j["glitch_windows"].push_back({w.begin, w.end});
    j["segments"] = json::array();
    for (const auto& seg : s.segments)
        j["segments"].push_back({{"t_begin", seg.t_begin},
                                 {"t_end", seg.t_end},
                                 {"steady_instants", seg.steady_instants},
                                 {"median_residual", nan_safe(seg.median_residual)},
                                 {"max_residual", nan_safe(seg.max_residual)}});
    j["seconds_per_step"] = s.seconds_per_step;
    j["idle_fraction"] = s.idle_fraction;
    return j;
}

inline json sweep_json(const SweepResult& sw) {
    json j;
    j["hold"] = std::string(to_string(sw.hold));
    j["slope"] = sw.slope;
    j["points"] = json::array();
    for (const auto& p : sw.points)
        j["points"].push_back({{"tau", p.tau},
                               {"eta", p.eta},
                               {"median_residual", nan_safe(p.median_residual)},
                               {"steady_instants", p.steady_instants},
                               {"restarts", p.restarts}});
    return j;
}

inline json formulas_json() {
    const auto& cat = catalog();
    auto rationals = [](const std::vector<Rational>& v) {
        json a = json::array();
        for (const auto& r : v) a.push_back(to_string(r));
        return a;
    };
    json j;
    j["backward"] = json::array();
    for (const auto& f : cat.backward)
        j["backward"].push_back({{"name", f.name},
                                 {"coefficients", rationals(f.coefficients)},
                                 {"denominator", std::to_string(f.denominator) + "tau"},
                                 {"declared_order", f.declared_order},
                                 {"truncation_order", truncation_order(f)}});
    j["recursions"] = json::array();
    for (const auto& r : cat.recursions) {
        const auto zs = check_zero_stability(r);
        j["recursions"].push_back({{"name", r.name},
                                   {"state_weights", rationals(r.state_weights)},
                                   {"derivative_weight", to_string(r.derivative_weight)},
                                   {"reconstructed", r.reconstructed},
                                   {"declared_order", r.declared_order},
                                   {"truncation_order", truncation_order(r)},
                                   {"zero_stable", zs.stable},
                                   {"root_moduli", zs.root_moduli}});
    }
    j["presets"] = json::array();
    for (const auto& p : cat.presets)
        j["presets"].push_back({{"name", p.name},
                                {"recursion", p.recursion.name},
                                {"derivative", p.derivative.name},
                                {"startup_length", p.startup_length()}});
    return j;
}

} // namespace znneig::cli

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include <znneig/io.hpp>

#include "scenario.hpp"

namespace {

using namespace znneig;
using cli::json;

constexpr int exit_config = 2;
constexpr int exit_abort = 3;

struct Flags {
    std::string config_file;
    std::optional<std::string> flow, jumps, preset, output, metric, taus, hold;
    std::optional<double> tau, eta, mu, jump_threshold, t0, tf;
    std::optional<std::string> seed;
};

void add_scenario_flags(CLI::App* app, Flags& f) {
    app->add_option("--config", f.config_file, "JSON config file; flags override its keys");
    app->add_option("--flow", f.flow, "paper, paper-raw, constant3, diag-linear or a flow file path");
    app->add_option("--seed", f.seed, "randomize_seed: integer or 'none'");
    app->add_option("--jumps", f.jumps, "comma-separated switch times, or 'none'");
    app->add_option("--tau", f.tau, "sampling gap");
    app->add_option("--eta", f.eta, "decay constant");
    app->add_option("--mu", f.mu, "normalization decay constant (default eta)");
    app->add_option("--preset", f.preset, "ifd5, ifd6 or ifd7");
    app->add_option("--jump-threshold", f.jump_threshold, "restart when ||Adot||_F exceeds this");
    app->add_option("--t0", f.t0, "start time");
    app->add_option("--tf", f.tf, "end time");
    app->add_option("--output", f.output, "output path prefix");
    app->add_option("--metric", f.metric, "per-pair or full-matrix");
}

cli::Resolved resolve(const Flags& f) {
    cli::Scenario s;
    if (!f.config_file.empty()) cli::apply_json(s, cli::read_json_file(f.config_file));
    if (f.flow) s.flow = *f.flow;
    if (f.seed) {
        if (*f.seed == "none") {
            s.randomize_seed = std::optional<std::uint64_t>{};
        } else {
            std::size_t used = 0;
            unsigned long long v = 0;
            try {
                v = std::stoull(*f.seed, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used == 0 || used != f.seed->size() || f.seed->front() == '-')
                throw ConfigError("--seed must be a nonnegative integer or 'none'");
            s.randomize_seed = std::optional<std::uint64_t>{v};
        }
    }
    if (f.jumps) s.jumps = cli::parse_list(*f.jumps, "--jumps");
    if (f.tau) s.tau = *f.tau;
    if (f.eta) s.eta = *f.eta;
    if (f.mu) s.mu = *f.mu;
    if (f.preset) s.preset = *f.preset;
    if (f.jump_threshold) s.jump_threshold = *f.jump_threshold;
    if (f.t0) s.t0 = *f.t0;
    if (f.tf) s.tf = *f.tf;
    if (f.output) s.output = *f.output;
    if (f.metric) s.metric = *f.metric;
    if (f.taus) s.taus = cli::parse_list(*f.taus, "--taus");
    if (f.hold) s.sweep_hold = *f.hold;
    return cli::resolve(std::move(s));
}

void write_json(const std::string& path, const json& j) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open " + path + " for writing");
    os << j.dump(2) << '\n';
}

int emit_run(const cli::Resolved& r, const RunReport& rep, const char* command) {
    const std::string& prefix = r.scenario.output;
    write_trajectory_csv(prefix + "trajectory.csv", rep.trajectory, r.flow.dimension());
    json j;
    j["command"] = command;
    j["config"] = cli::echo(r);
    j["summary"] = cli::summary_json(rep);
    write_json(prefix + "report.json", j);
    const auto& s = rep.summary;
    std::printf("%s: %zu instants, %zu restarts, median residual %.3e, max orth deviation %.3e\n",
                command, s.instants, s.restart_count, s.median_residual, s.max_orth_deviation);
    if (!s.completed) {
        std::fprintf(stderr, "numerical abort: %s\n", s.abort_reason->c_str());
        return exit_abort;
    }
    return 0;
}

void print_formulas() {
    const auto& cat = catalog();
    for (const auto& f : cat.backward) {
        std::printf("%s  (", f.name.c_str());
        for (std::size_t i = 0; i < f.coefficients.size(); ++i)
            std::printf("%s%s", i ? ", " : "", to_string(f.coefficients[i]).c_str());
        std::printf(") / %lld tau   order %d\n", static_cast<long long>(f.denominator), truncation_order(f));
    }
    for (const auto& r : cat.recursions) {
        const auto zs = check_zero_stability(r);
        std::printf("%s  a = (", r.name.c_str());
        for (std::size_t i = 0; i < r.state_weights.size(); ++i)
            std::printf("%s%s", i ? ", " : "", to_string(r.state_weights[i]).c_str());
        std::printf(")  c = %s%s   order %d   %s   |roots| =", to_string(r.derivative_weight).c_str(),
                    r.reconstructed ? " (reconstructed)" : "", truncation_order(r),
                    zs.stable ? "stable" : "UNSTABLE");
        for (double m : zs.root_moduli) std::printf(" %.6f", m);
        std::printf("\n");
    }
    for (const auto& p : cat.presets)
        std::printf("preset %s = %s + %s, startup %zu\n", p.name.c_str(), p.recursion.name.c_str(),
                    p.derivative.name.c_str(), p.startup_length());
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Look-ahead eigendecomposition tracking for symmetric matrix flows"};
    app.require_subcommand(1);

    Flags run_f, base_f, conv_f;
    auto* run_cmd = app.add_subcommand("run", "predict eigendata along a flow");
    add_scenario_flags(run_cmd, run_f);
    auto* base_cmd = app.add_subcommand("baseline", "score the static previous-instant predictor");
    add_scenario_flags(base_cmd, base_f);
    auto* conv_cmd = app.add_subcommand("converge", "tau sweep and log-log slope");
    add_scenario_flags(conv_cmd, conv_f);
    conv_cmd->add_option("--taus", conv_f.taus, "comma-separated sampling gaps (at least 3)");
    conv_cmd->add_option("--hold", conv_f.hold, "product (eta*tau fixed, default) or eta");
    bool as_json = false;
    auto* form_cmd = app.add_subcommand("formulas", "list the formula catalog");
    form_cmd->add_flag("--json", as_json, "JSON output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : exit_config;
    }

    try {
        if (*form_cmd) {
            if (as_json) std::cout << cli::formulas_json().dump(2) << '\n';
            else print_formulas();
            return 0;
        }
        if (*run_cmd) {
            const auto r = resolve(run_f);
            return emit_run(r, run_report(r.flow, r.config, r.metric), "run");
        }
        if (*base_cmd) {
            const auto r = resolve(base_f);
            return emit_run(r, naive_baseline(r.flow, r.config, r.metric), "baseline");
        }
        if (*conv_cmd) {
            const auto r = resolve(conv_f);
            if (r.scenario.taus.size() < 3) throw ConfigError("converge needs at least 3 values in taus");
            const auto sw = convergence_sweep(r.flow, r.config, r.scenario.taus, r.hold, r.metric);
            json j;
            j["command"] = "converge";
            j["config"] = cli::echo(r);
            j["sweep"] = cli::sweep_json(sw);
            write_json(r.scenario.output + "report.json", j);
            for (const auto& p : sw.points)
                std::printf("tau %-10.6g eta %-8.4g median residual %.3e\n", p.tau, p.eta, p.median_residual);
            std::printf("slope %.3f\n", sw.slope);
            return 0;
        }
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return exit_config;
    } catch (const StepError& e) {
        std::fprintf(stderr, "numerical abort: %s\n", e.what());
        return exit_abort;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}

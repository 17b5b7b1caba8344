#pragma once

// Experiment drivers and metrics: run reports with steady-state summaries, the
// naive static predictor, tau-convergence sweeps and derivative-norm traces.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dense.hpp"
#include "densela.hpp"
#include "errors.hpp"
#include "flows.hpp"
#include "formulas.hpp"
#include "metrics.hpp"
#include "znn.hpp"

namespace znneig {

enum class Metric { per_pair, full_matrix };

inline std::string_view to_string(Metric m) {
    return m == Metric::per_pair ? "per-pair" : "full-matrix";
}

inline Metric parse_metric(std::string_view s) {
    if (s == "per-pair") return Metric::per_pair;
    if (s == "full-matrix") return Metric::full_matrix;
    throw ConfigError("unknown metric '" + std::string(s) + "' (expected per-pair or full-matrix)");
}

/// Which instants count as steady state.
struct SteadyStatePolicy {
    /// Instants skipped after each startup or restart, beyond the startup itself.
    std::size_t transient_steps = 10;
    /// Eigenvector turn rate max_i ||x_i(t_k) - x_i(t_{k-1})|| / tau (1/s) above
    /// which an instant is a near-crossing glitch.
    double turn_rate_threshold = 10.0;
    /// Max-pair residual above this multiple of the run's median max-pair residual
    /// also marks a glitch.
    double residual_spike_factor = 1e3;
    /// Half-width of the exclusion window around each glitch instant (s).
    double glitch_pad = 0.1;
};

struct TimeWindow {
    double begin = 0.0;
    double end = 0.0;
};

struct SegmentSummary {
    double t_begin = 0.0;
    double t_end = 0.0;
    std::size_t steady_instants = 0;
    double median_residual = 0.0;
    double max_residual = 0.0;
};

struct ReportSummary {
    std::size_t instants = 0;
    std::size_t restart_count = 0;
    std::vector<double> restart_times;
    std::vector<double> restart_adot_norms;
    std::vector<SegmentSummary> segments;
    std::vector<TimeWindow> glitch_windows;
    std::size_t steady_instants = 0;
    /// Over steady instants, using the report's metric.
    double median_residual = 0.0;
    double max_residual = 0.0;
    double median_orth_deviation = 0.0;
    double max_orth_deviation = 0.0;
    double max_smooth_adot_norm = 0.0;
    std::size_t least_squares_solves = 0;
    /// Pairs whose ||x||_2 left [0.5, 2] at some predicted instant.
    std::size_t norm_excursions = 0;
    double seconds_per_step = 0.0;
    double idle_fraction = 0.0;
    bool completed = true;
    std::optional<std::string> abort_reason;
};

struct RunReport {
    std::string flow_label;
    SolverConfig config;
    Metric metric = Metric::per_pair;
    Trajectory trajectory;
    /// Per instant, aligned with trajectory.events.
    std::vector<double> full_residual;
    std::vector<double> orth;
    std::vector<bool> steady;
    std::vector<bool> glitch;
    ReportSummary summary;

    /// Residual of one instant under the report's metric (max over pairs for per-pair).
    double instant_residual(std::size_t e) const {
        if (metric == Metric::full_matrix) return full_residual[e];
        const auto& r = trajectory.events[e].residual;
        return *std::max_element(r.begin(), r.end());
    }

    /// Steady-state residual values under the report's metric: every pair's residual
    /// for per-pair, one value per instant for full-matrix.
    std::vector<double> steady_residuals(const std::vector<bool>& mask) const {
        std::vector<double> out;
        for (std::size_t e = 0; e < trajectory.events.size(); ++e) {
            if (!mask[e]) continue;
            if (metric == Metric::full_matrix) {
                out.push_back(full_residual[e]);
            } else {
                const auto& r = trajectory.events[e].residual;
                out.insert(out.end(), r.begin(), r.end());
            }
        }
        return out;
    }
    std::vector<double> steady_residuals() const { return steady_residuals(steady); }
};

inline double median(std::vector<double> v) {
    if (v.empty()) return std::nan("");
    const auto mid = v.begin() + static_cast<long>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    if (v.size() % 2 == 1) return *mid;
    const double hi = *mid;
    const double lo = *std::max_element(v.begin(), mid);
    return 0.5 * (lo + hi);
}

namespace detail {

inline double turn_rate(const StepEvent& cur, const StepEvent& prev, double tau) {
    double worst = 0.0;
    const std::size_t n = cur.z.size();
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            const double d = cur.z[i][r] - prev.z[i][r];
            s += d * d;
        }
        worst = std::max(worst, std::sqrt(s) / tau);
    }
    return worst;
}

} // namespace detail

/// Derives per-instant metrics, steady-state masks and the summary from a trajectory.
inline RunReport make_report(const MatrixFlow& flow, const SolverConfig& config, Trajectory traj,
                             Metric metric = Metric::per_pair,
                             const SteadyStatePolicy& policy = {}) {
    RunReport rep;
    rep.flow_label = flow.label();
    rep.config = config;
    rep.metric = metric;
    rep.trajectory = std::move(traj);
    const auto& ev = rep.trajectory.events;
    const std::size_t m = ev.size();
    const std::size_t s = config.startup_length();

    rep.full_residual.resize(m);
    rep.orth.resize(m);
    for (std::size_t e = 0; e < m; ++e) {
        rep.full_residual[e] = full_matrix_residual(flow.sample(ev[e].t), ev[e].z);
        rep.orth[e] = orth_deviation(ev[e].z);
    }

    // Glitch instants.
    std::vector<double> max_pair;
    for (std::size_t e = 0; e < m; ++e)
        if (ev[e].kind == StepKind::predicted)
            max_pair.push_back(*std::max_element(ev[e].residual.begin(), ev[e].residual.end()));
    const double typical = max_pair.empty() ? 0.0 : median(max_pair);
    std::vector<double> glitch_times;
    for (std::size_t e = 1; e < m; ++e) {
        if (ev[e].kind != StepKind::predicted) continue;
        const double worst = *std::max_element(ev[e].residual.begin(), ev[e].residual.end());
        const bool turning = detail::turn_rate(ev[e], ev[e - 1], config.tau) > policy.turn_rate_threshold;
        const bool spiking = typical > 0.0 && worst > policy.residual_spike_factor * typical;
        if (turning || spiking) glitch_times.push_back(ev[e].t);
    }
    for (double g : glitch_times) {
        const TimeWindow w{g - policy.glitch_pad, g + policy.glitch_pad};
        auto& ws = rep.summary.glitch_windows;
        if (!ws.empty() && w.begin <= ws.back().end) ws.back().end = w.end;
        else ws.push_back(w);
    }

    rep.glitch.assign(m, false);
    rep.steady.assign(m, false);
    std::size_t seg_start = 0;
    std::size_t wi = 0;
    const auto& windows = rep.summary.glitch_windows;
    for (std::size_t e = 0; e < m; ++e) {
        if (ev[e].kind == StepKind::restart) seg_start = ev[e].k;
        while (wi < windows.size() && windows[wi].end < ev[e].t) ++wi;
        rep.glitch[e] = wi < windows.size() && windows[wi].begin <= ev[e].t;
        rep.steady[e] = ev[e].kind == StepKind::predicted && !rep.glitch[e] &&
                        ev[e].k - seg_start >= s + policy.transient_steps;
    }

    auto& sum = rep.summary;
    sum.instants = m;
    sum.completed = rep.trajectory.completed();
    sum.abort_reason = rep.trajectory.abort_reason;
    std::vector<double> orth_steady;
    std::vector<bool> norm_flag(flow.dimension(), false);
    for (std::size_t e = 0; e < m; ++e) {
        if (ev[e].kind == StepKind::restart) {
            sum.restart_times.push_back(ev[e].t);
            sum.restart_adot_norms.push_back(ev[e].adot_norm.value_or(std::nan("")));
        }
        for (const auto& meth : ev[e].method)
            if (meth == SolveMethod::least_squares) ++sum.least_squares_solves;
        if (ev[e].kind == StepKind::predicted) {
            for (std::size_t i = 0; i < ev[e].z.size(); ++i) {
                const double nx = two_norm(std::span<const double>(ev[e].z[i]).first(ev[e].z.size()));
                if (nx < 0.5 || nx > 2.0) norm_flag[i] = true;
            }
        }
        if (rep.steady[e]) {
            orth_steady.push_back(rep.orth[e]);
            if (ev[e].adot_norm) sum.max_smooth_adot_norm = std::max(sum.max_smooth_adot_norm, *ev[e].adot_norm);
        }
    }
    sum.restart_count = sum.restart_times.size();
    sum.norm_excursions = static_cast<std::size_t>(std::count(norm_flag.begin(), norm_flag.end(), true));
    sum.steady_instants = orth_steady.size();
    const auto res = rep.steady_residuals();
    sum.median_residual = median(res);
    sum.max_residual = res.empty() ? std::nan("") : *std::max_element(res.begin(), res.end());
    sum.median_orth_deviation = median(orth_steady);
    sum.max_orth_deviation =
        orth_steady.empty() ? std::nan("") : *std::max_element(orth_steady.begin(), orth_steady.end());

    // Segments are delimited by restarts.
    std::size_t begin = 0;
    for (std::size_t e = 0; e <= m; ++e) {
        if (e < m && !(e > begin && ev[e].kind == StepKind::restart)) continue;
        if (e == begin) continue;
        std::vector<bool> mask(m, false);
        for (std::size_t j = begin; j < e; ++j) mask[j] = rep.steady[j];
        const auto seg = rep.steady_residuals(mask);
        SegmentSummary ss;
        ss.t_begin = ev[begin].t;
        ss.t_end = ev[e - 1].t;
        ss.steady_instants = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
        ss.median_residual = median(seg);
        ss.max_residual = seg.empty() ? std::nan("") : *std::max_element(seg.begin(), seg.end());
        sum.segments.push_back(ss);
        begin = e;
    }

    if (m > 0) {
        sum.seconds_per_step = rep.trajectory.compute_seconds / static_cast<double>(m);
        sum.idle_fraction = 1.0 - sum.seconds_per_step / config.tau;
    }
    return rep;
}

/// Runs the predictor and summarizes it.
inline RunReport run_report(const MatrixFlow& flow, const SolverConfig& config,
                            Metric metric = Metric::per_pair, const SteadyStatePolicy& policy = {}) {
    return make_report(flow, config, run(flow, config), metric, policy);
}

/// The naive static predictor: eigendata of A(t_k), matched to the previous instant's
/// pairs by eigenvector overlap, scored as the prediction for A(t_{k+1}). Instants and pair indices line up
/// with a predictor run over the same span.
inline Trajectory naive_baseline_trajectory(const MatrixFlow& flow, const SolverConfig& config) {
    config.validate();
    const std::size_t last = config.steps();
    const std::size_t n = flow.dimension();
    Trajectory traj;
    traj.events.reserve(last + 1);
    const auto clock_start = std::chrono::steady_clock::now();
    std::size_t k = 0;
    try {
        Matrix a = flow.sample(config.time(0));
        std::vector<Vector> prev = ascending_pairs(sym_eig(a));
        StepEvent first{0, config.time(0), StepKind::startup, prev, {}, std::vector<std::optional<SolveMethod>>(n), {}};
        for (const auto& z : prev) first.residual.push_back(residual(a, z));
        traj.events.push_back(std::move(first));
        for (k = 1; k <= last; ++k) {
            Matrix next = flow.sample(config.time(k));
            StepEvent ev{k, config.time(k), StepKind::predicted, prev, {}, std::vector<std::optional<SolveMethod>>(n), {}};
            for (const auto& z : prev) ev.residual.push_back(residual(next, z));
            traj.events.push_back(std::move(ev));
            ++traj.predicted_steps;
            prev = match_by_overlap(sym_eig(next), prev);
        }
    } catch (const Error& e) {
        traj.abort_reason = StepError(k, e.what()).what();
    }
    traj.compute_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count();
    return traj;
}

inline RunReport naive_baseline(const MatrixFlow& flow, const SolverConfig& config,
                                Metric metric = Metric::per_pair,
                                const SteadyStatePolicy& policy = {}) {
    return make_report(flow, config, naive_baseline_trajectory(flow, config), metric, policy);
}

/// Least-squares slope of log(y) against log(x).
inline double loglog_slope(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw ConfigError("loglog_slope: need matched points");
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw ConfigError("loglog_slope: nonpositive value");
        mx += std::log(x[i]);
        my += std::log(y[i]);
    }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(x.size());
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = std::log(x[i]) - mx;
        sxy += dx * (std::log(y[i]) - my);
        sxx += dx * dx;
    }
    if (sxx == 0.0) throw ConfigError("loglog_slope: degenerate abscissae");
    return sxy / sxx;
}

/// How eta follows tau across a sweep.
enum class SweepHold {
    /// eta * tau stays at the template's value, so eta grows as tau shrinks.
    product,
    /// eta stays at the template's value.
    eta,
};

inline std::string_view to_string(SweepHold h) { return h == SweepHold::product ? "product" : "eta"; }

inline SweepHold parse_sweep_hold(std::string_view s) {
    if (s == "product") return SweepHold::product;
    if (s == "eta") return SweepHold::eta;
    throw ConfigError("unknown sweep hold '" + std::string(s) + "' (expected product or eta)");
}

struct SweepPoint {
    double tau = 0.0;
    double eta = 0.0;
    double median_residual = 0.0;
    std::size_t steady_instants = 0;
    std::size_t restarts = 0;
    bool completed = true;
};

struct SweepResult {
    std::vector<SweepPoint> points;
    double slope = 0.0;
    SweepHold hold = SweepHold::product;
};

/// Steady-state median residual for each tau and the fitted log-log slope.
inline SweepResult convergence_sweep(const MatrixFlow& flow, const SolverConfig& templ,
                                     std::span<const double> taus,
                                     SweepHold hold = SweepHold::product,
                                     Metric metric = Metric::per_pair,
                                     const SteadyStatePolicy& policy = {}) {
    if (taus.size() < 3) throw ConfigError("convergence sweep needs at least 3 values of tau");
    templ.validate();
    const double span = templ.tf - templ.t0;
    for (double tau : taus) {
        if (!(tau > 0.0)) throw ConfigError("sweep tau must be positive");
        const double steps = span / tau;
        if (std::abs(steps - std::round(steps)) > 1e-9 * steps)
            throw ConfigError("sweep tau does not divide the span");
    }
    SweepResult out;
    out.hold = hold;
    std::vector<double> xs, ys;
    for (double tau : taus) {
        SolverConfig c = templ;
        c.tau = tau;
        if (hold == SweepHold::product) c.eta = templ.eta * templ.tau / tau;
        if (hold == SweepHold::product && templ.mu) c.mu = *templ.mu * templ.tau / tau;
        const RunReport rep = run_report(flow, c, metric, policy);
        SweepPoint p{tau, c.eta, rep.summary.median_residual, rep.summary.steady_instants,
                     rep.summary.restart_count, rep.summary.completed};
        if (!p.completed) throw StepError(0, "sweep run at tau = " + std::to_string(tau) + " aborted: " +
                                                 rep.summary.abort_reason.value_or(""));
        out.points.push_back(p);
        xs.push_back(tau);
        ys.push_back(p.median_residual);
    }
    out.slope = loglog_slope(xs, ys);
    return out;
}

struct DerivativeSample {
    double t = 0.0;
    double norm = 0.0;
};

/// ||Adot_k||_F from the configured backward formula at every instant with a full
/// sample history, straight from the flow (no restarts).
inline std::vector<DerivativeSample> derivative_trace(const MatrixFlow& flow,
                                                      const SolverConfig& config) {
    config.validate();
    const auto& f = config.formulas.derivative;
    std::deque<Matrix> hist;
    std::vector<DerivativeSample> out;
    for (std::size_t k = 0; k <= config.steps(); ++k) {
        hist.push_front(flow.sample(config.time(k)));
        if (hist.size() > f.taps()) hist.pop_back();
        if (hist.size() < f.taps()) continue;
        const std::vector<Matrix> h(hist.begin(), hist.end());
        out.push_back({config.time(k), fro_norm(derivative_estimate(f, h, config.tau))});
    }
    return out;
}

} // namespace znneig

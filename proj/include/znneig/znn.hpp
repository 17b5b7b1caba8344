#pragma once

// Discrete-time zeroing neural dynamics for the eigendata of a symmetric matrix
// flow. For each eigenpair z = [x; lambda] the error dynamics reduce to the
// bordered system P zdot = q, and a convergent look-ahead recursion turns the
// solution into the prediction z_{k+1}.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "dense.hpp"
#include "densela.hpp"
#include "errors.hpp"
#include "flows.hpp"
#include "formulas.hpp"
#include "metrics.hpp"

namespace znneig {

struct SolverConfig {
    double tau = 1.0 / 200.0;
    double eta = 4.5;
    /// Normalization decay constant; defaults to eta.
    std::optional<double> mu;
    FormulaPair formulas = catalog().preset("ifd5");
    double jump_threshold = 300.0;
    double t0 = 0.0;
    double tf = 20.0;

    double mu_value() const noexcept { return mu.value_or(eta); }
    std::size_t startup_length() const { return formulas.startup_length(); }

    /// Index of the last instant; t_k = t0 + k tau for k = 0..steps().
    std::size_t steps() const {
        return static_cast<std::size_t>(std::floor((tf - t0) / tau + 1e-9));
    }
    double time(std::size_t k) const { return t0 + static_cast<double>(k) * tau; }

    void validate() const {
        if (!(tau > 0.0)) throw ConfigError("tau must be positive");
        if (!(eta > 0.0)) throw ConfigError("eta must be positive");
        if (!(mu_value() > 0.0)) throw ConfigError("mu must be positive");
        if (!(jump_threshold >= 0.0)) throw ConfigError("jump threshold must be nonnegative");
        if (!(tf > t0)) throw ConfigError("tf must exceed t0");
        if (!std::isfinite(tf) || !std::isfinite(t0)) throw ConfigError("span must be finite");
    }
};

/// One eigenpair's recent history, newest first. Each entry is z = [x; lambda].
struct EigenPairState {
    std::size_t index = 0;
    std::deque<Vector> history;

    const Vector& current() const { return history.front(); }
    void push(Vector z, std::size_t capacity) {
        history.push_front(std::move(z));
        while (history.size() > capacity) history.pop_back();
    }
};

enum class StepKind { startup, predicted, restart };

inline std::string_view to_string(StepKind k) {
    switch (k) {
    case StepKind::startup: return "startup";
    case StepKind::predicted: return "predicted";
    case StepKind::restart: return "restart";
    }
    return "?";
}

/// Everything recorded at one time instant.
struct StepEvent {
    std::size_t k = 0;
    double t = 0.0;
    StepKind kind = StepKind::startup;
    /// Eigendata per pair at t_k.
    std::vector<Vector> z;
    /// Relative residual of each pair against the sample A(t_k).
    std::vector<double> residual;
    /// Solve used to produce each predicted pair; empty for static eigendata.
    std::vector<std::optional<SolveMethod>> method;
    /// Frobenius norm of the derivative estimate at t_k, once enough samples exist.
    /// For restart events this is the offending estimate.
    std::optional<double> adot_norm;
};

struct Trajectory {
    std::vector<StepEvent> events;
    /// Set when a numerical failure stopped the run early; events up to it are kept.
    std::optional<std::string> abort_reason;
    double compute_seconds = 0.0;
    std::size_t predicted_steps = 0;

    bool completed() const noexcept { return !abort_reason.has_value(); }
    std::size_t restart_count() const {
        return static_cast<std::size_t>(std::count_if(events.begin(), events.end(), [](const auto& e) {
            return e.kind == StepKind::restart;
        }));
    }
};

struct BorderedSystem {
    Matrix p;
    Vector q;
};

/// P = [A - lambda I, -x; -x^T, 0],
/// q = [(-eta (A - lambda I) - Adot) x; (mu / 2) (x^T x - 1)].
inline BorderedSystem assemble(const Matrix& a, const Matrix& adot, std::span<const double> z,
                               double eta, double mu) {
    const std::size_t n = a.rows();
    if (!a.square() || adot.rows() != n || adot.cols() != n || z.size() != n + 1)
        throw DimensionError("assemble: inconsistent dimensions");
    const double lambda = z[n];
    BorderedSystem sys{Matrix(n + 1, n + 1), Vector(n + 1, 0.0)};
    double xx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double shifted_x = 0.0;  // ((A - lambda I) x)_i
        double adot_x = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double s = a(i, j) - (i == j ? lambda : 0.0);
            sys.p(i, j) = s;
            shifted_x += s * z[j];
            adot_x += adot(i, j) * z[j];
        }
        sys.p(i, n) = -z[i];
        sys.p(n, i) = -z[i];
        sys.q[i] = -eta * shifted_x - adot_x;
        xx += z[i] * z[i];
    }
    sys.q[n] = 0.5 * mu * (xx - 1.0);
    return sys;
}

inline bool detect_jump(double adot_norm, double threshold) { return adot_norm > threshold; }
inline bool detect_jump(const Matrix& adot, double threshold) {
    return detect_jump(fro_norm(adot), threshold);
}

struct StepResult {
    Vector z_next;
    LinearSolveReport solve;
};

/// z_{k+1} = c tau (P \ q) + sum_j a_j z_{k-j} for one pair, given A_k and its
/// derivative estimate.
inline StepResult step(const EigenPairState& state, const Matrix& a, const Matrix& adot,
                       const SolverConfig& config) {
    const auto& rec = config.formulas.recursion;
    if (state.history.size() < rec.taps())
        throw ConfigError("step: eigenpair history shorter than recursion tap count");
    const BorderedSystem sys = assemble(a, adot, state.current(), config.eta, config.mu_value());
    LinearSolveReport solved = solve(sys.p, sys.q);
    const double c = to_double(rec.derivative_weight) * config.tau;
    Vector next(solved.solution.size());
    for (std::size_t i = 0; i < next.size(); ++i) next[i] = c * solved.solution[i];
    for (std::size_t j = 0; j < rec.taps(); ++j) {
        const double w = to_double(rec.state_weights[j]);
        const Vector& zj = state.history[j];
        for (std::size_t i = 0; i < next.size(); ++i) next[i] += w * zj[i];
    }
    return {std::move(next), std::move(solved)};
}

/// Same as above, estimating the derivative from a newest-first sample history.
inline StepResult step(const EigenPairState& state, std::span<const Matrix> samples,
                       const SolverConfig& config) {
    const Matrix adot = derivative_estimate(config.formulas.derivative, samples, config.tau);
    return step(state, samples.front(), adot, config);
}

/// Orders a static decomposition to continue the previous eigendata: greedy
/// assignment by |lambda_new - lambda_prev|, ties broken by larger |<x_prev, v_new>|,
/// then each vector's sign flipped to make the inner product with its predecessor
/// nonnegative. Returns one z = [v; lambda] per previous pair.
inline std::vector<Vector> match_pairs(const EigenDecomposition& fresh,
                                       std::span<const Vector> previous) {
    const std::size_t n = fresh.values.size();
    if (previous.size() != n) throw DimensionError("match_pairs: pair count mismatch");
    std::vector<std::tuple<double, double, std::size_t, std::size_t>> candidates;
    candidates.reserve(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double ip = 0.0;
            for (std::size_t r = 0; r < n; ++r) ip += previous[i][r] * fresh.vectors(r, j);
            candidates.emplace_back(std::abs(fresh.values[j] - previous[i][n]), -std::abs(ip), i, j);
        }
    }
    std::sort(candidates.begin(), candidates.end());
    std::vector<std::optional<std::size_t>> assigned(n);
    std::vector<bool> taken(n, false);
    for (const auto& [gap, neg_ip, i, j] : candidates) {
        if (assigned[i] || taken[j]) continue;
        assigned[i] = j;
        taken[j] = true;
    }
    std::vector<Vector> out(n, Vector(n + 1));
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = *assigned[i];
        double ip = 0.0;
        for (std::size_t r = 0; r < n; ++r) ip += previous[i][r] * fresh.vectors(r, j);
        const double sign = ip < 0.0 ? -1.0 : 1.0;
        for (std::size_t r = 0; r < n; ++r) out[i][r] = sign * fresh.vectors(r, j);
        out[i][n] = fresh.values[j];
    }
    return out;
}

/// Orders a static decomposition by eigenvector continuity: greedy assignment by
/// largest |<x_prev, v_new>|, ties broken by smaller |lambda_new - lambda_prev|, then
/// sign alignment as in match_pairs. Follows analytic branches through exact
/// eigenvalue crossings, where eigenvalue proximity alone would swap them.
inline std::vector<Vector> match_by_overlap(const EigenDecomposition& fresh,
                                            std::span<const Vector> previous) {
    const std::size_t n = fresh.values.size();
    if (previous.size() != n) throw DimensionError("match_by_overlap: pair count mismatch");
    std::vector<std::tuple<double, double, std::size_t, std::size_t>> candidates;
    candidates.reserve(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double ip = 0.0;
            for (std::size_t r = 0; r < n; ++r) ip += previous[i][r] * fresh.vectors(r, j);
            candidates.emplace_back(-std::abs(ip), std::abs(fresh.values[j] - previous[i][n]), i, j);
        }
    }
    std::sort(candidates.begin(), candidates.end());
    std::vector<std::optional<std::size_t>> assigned(n);
    std::vector<bool> taken(n, false);
    for (const auto& [neg_ip, gap, i, j] : candidates) {
        if (assigned[i] || taken[j]) continue;
        assigned[i] = j;
        taken[j] = true;
    }
    std::vector<Vector> out(n, Vector(n + 1));
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = *assigned[i];
        double ip = 0.0;
        for (std::size_t r = 0; r < n; ++r) ip += previous[i][r] * fresh.vectors(r, j);
        const double sign = ip < 0.0 ? -1.0 : 1.0;
        for (std::size_t r = 0; r < n; ++r) out[i][r] = sign * fresh.vectors(r, j);
        out[i][n] = fresh.values[j];
    }
    return out;
}

/// Static eigendata as z vectors, pairs in ascending eigenvalue order.
inline std::vector<Vector> ascending_pairs(const EigenDecomposition& eig) {
    const std::size_t n = eig.values.size();
    std::vector<Vector> out(n, Vector(n + 1));
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t r = 0; r < n; ++r) out[j][r] = eig.vectors(r, j);
        out[j][n] = eig.values[j];
    }
    return out;
}

/// Buffers seeded from static eigendecompositions at consecutive instants.
struct StartupResult {
    std::vector<EigenPairState> pairs;
    /// Samples newest first.
    std::deque<Matrix> samples;
    /// Static eigendata per instant, oldest first.
    std::vector<std::vector<Vector>> eigendata;
};

/// Static eigendata at `count` consecutive instants t_start, t_start + tau, ...
/// (count defaults to the configured startup length). Pairs are in ascending order
/// at the first instant and matched to their predecessors afterwards.
inline StartupResult startup(const MatrixFlow& flow, double t_start, const SolverConfig& config,
                             std::optional<std::size_t> count = std::nullopt) {
    const std::size_t s = config.startup_length();
    const std::size_t len = count.value_or(s);
    const std::size_t n = flow.dimension();
    StartupResult out;
    out.pairs.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.pairs[i].index = i;
    for (std::size_t j = 0; j < len; ++j) {
        Matrix a = flow.sample(t_start + static_cast<double>(j) * config.tau);
        const EigenDecomposition eig = sym_eig(a);
        auto zs = out.eigendata.empty() ? ascending_pairs(eig) : match_pairs(eig, out.eigendata.back());
        for (std::size_t i = 0; i < n; ++i) out.pairs[i].push(zs[i], s);
        out.samples.push_front(std::move(a));
        while (out.samples.size() > s) out.samples.pop_back();
        out.eigendata.push_back(std::move(zs));
    }
    return out;
}

namespace detail {

inline Matrix derivative_from(const std::deque<Matrix>& samples, const SolverConfig& config) {
    const auto& f = config.formulas.derivative;
    std::vector<Matrix> hist(samples.begin(), samples.begin() + static_cast<long>(f.taps()));
    return derivative_estimate(f, hist, config.tau);
}

} // namespace detail

/// Runs the predictor over [t0, tf].
///
/// The outer loop walks the instants; the inner loop advances every eigenpair. At
/// each new instant the derivative estimate is checked against the jump threshold;
/// when it fires, the in-flight prediction is discarded and the buffers are
/// re-seeded from static eigendata at that instant and the following ones. Numerical
/// failures stop the run and are reported through Trajectory::abort_reason.
inline Trajectory run(const MatrixFlow& flow, const SolverConfig& config) {
    config.validate();
    if (!flow.covers(config.t0) || !flow.covers(config.time(config.steps())))
        throw ConfigError("flow span does not cover [t0, tf]");

    const std::size_t n = flow.dimension();
    const std::size_t s = config.startup_length();
    const std::size_t last = config.steps();
    const std::size_t deriv_taps = config.formulas.derivative.taps();

    Trajectory traj;
    traj.events.reserve(last + 1);
    const auto clock_start = std::chrono::steady_clock::now();

    std::vector<EigenPairState> pairs;
    std::deque<Matrix> samples;
    std::size_t seg_start = 0;  // first instant of the current smooth segment

    // Seeds buffers at instant k0 (tagging the first instant with `first_kind`) and
    // returns the last startup instant.
    auto seed = [&](std::size_t k0, StepKind first_kind, std::optional<double> offending) {
        const std::size_t len = std::min(s, last - k0 + 1);
        StartupResult st = startup(flow, config.time(k0), config, len);
        pairs = std::move(st.pairs);
        samples = std::move(st.samples);
        seg_start = k0;
        std::deque<Matrix> replay;
        for (std::size_t j = 0; j < len; ++j) {
            const std::size_t k = k0 + j;
            StepEvent ev;
            ev.k = k;
            ev.t = config.time(k);
            ev.kind = j == 0 ? first_kind : StepKind::startup;
            ev.z = st.eigendata[j];
            replay.push_front(samples[len - 1 - j]);
            for (std::size_t i = 0; i < n; ++i) ev.residual.push_back(residual(replay.front(), ev.z[i]));
            ev.method.assign(n, std::nullopt);
            if (j == 0 && offending) ev.adot_norm = offending;
            else if (replay.size() >= deriv_taps) ev.adot_norm = fro_norm(detail::derivative_from(replay, config));
            traj.events.push_back(std::move(ev));
        }
        return k0 + len - 1;
    };

    std::size_t k = 0;
    // A jump inside a startup window shows up in the estimate at its last instant;
    // the buffers are then re-seeded from that instant.
    auto reseed_while_jumping = [&]() {
        while (k < last) {
            const auto& tail = traj.events.back();
            if (!tail.adot_norm || !detect_jump(*tail.adot_norm, config.jump_threshold)) return;
            const double offending = *tail.adot_norm;
            traj.events.pop_back();
            k = seed(k, StepKind::restart, offending);
        }
    };

    try {
        k = seed(0, StepKind::startup, std::nullopt);
        reseed_while_jumping();
        Matrix adot = k < last ? detail::derivative_from(samples, config) : Matrix();
        while (k < last) {
            std::vector<StepResult> predicted;
            predicted.reserve(n);
            for (const auto& pair : pairs) {
                StepResult r = step(pair, samples.front(), adot, config);
                for (double v : r.z_next)
                    if (!std::isfinite(v)) throw StepError(k + 1, "non-finite prediction");
                predicted.push_back(std::move(r));
            }
            ++traj.predicted_steps;
            ++k;

            Matrix a = flow.sample(config.time(k));
            samples.push_front(a);
            while (samples.size() > s) samples.pop_back();
            adot = detail::derivative_from(samples, config);
            const double adot_norm = fro_norm(adot);

            if (k - seg_start >= deriv_taps - 1 && detect_jump(adot_norm, config.jump_threshold)) {
                k = seed(k, StepKind::restart, adot_norm);
                reseed_while_jumping();
                if (k < last) adot = detail::derivative_from(samples, config);
                continue;
            }

            StepEvent ev;
            ev.k = k;
            ev.t = config.time(k);
            ev.kind = StepKind::predicted;
            ev.adot_norm = adot_norm;
            for (std::size_t i = 0; i < n; ++i) {
                ev.residual.push_back(residual(a, predicted[i].z_next));
                ev.method.emplace_back(predicted[i].solve.method);
                pairs[i].push(predicted[i].z_next, s);
                ev.z.push_back(std::move(predicted[i].z_next));
            }
            traj.events.push_back(std::move(ev));
        }
    } catch (const StepError& e) {
        traj.abort_reason = e.what();
    } catch (const Error& e) {
        traj.abort_reason = StepError(k, e.what()).what();
    }
    traj.compute_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count();
    return traj;
}

} // namespace znneig

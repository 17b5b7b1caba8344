#pragma once

// Time-varying symmetric matrix flows: sampling, the two 7x7 benchmark flows,
// orthogonal-similarity randomization, jump composition and file-backed flows.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dense.hpp"
#include "errors.hpp"

namespace znneig {

/// A sampler t -> symmetric n x n matrix over a declared closed span.
class MatrixFlow {
public:
    using Sampler = std::function<Matrix(double)>;

    MatrixFlow(std::size_t n, Sampler sampler, std::string label,
               double t_begin = 0.0, double t_end = std::numeric_limits<double>::infinity())
        : n_(n), sampler_(std::move(sampler)), label_(std::move(label)),
          t_begin_(t_begin), t_end_(t_end) {
        if (n_ == 0) throw DimensionError("flow dimension must be positive");
        if (!(t_end_ >= t_begin_)) throw SpanError("flow span is empty");
    }

    std::size_t dimension() const noexcept { return n_; }
    const std::string& label() const noexcept { return label_; }
    double span_begin() const noexcept { return t_begin_; }
    double span_end() const noexcept { return t_end_; }
    bool covers(double t) const noexcept { return t >= t_begin_ && t <= t_end_; }

    Matrix sample(double t) const {
        if (!covers(t)) {
            throw SpanError("t = " + std::to_string(t) + " outside span of flow '" + label_ + "'");
        }
        return sampler_(t);
    }
    Matrix operator()(double t) const { return sample(t); }

private:
    std::size_t n_;
    Sampler sampler_;
    std::string label_;
    double t_begin_;
    double t_end_;
};

inline Matrix sample(const MatrixFlow& flow, double t) { return flow.sample(t); }

/// Builds an exactly symmetric matrix from an upper-triangle generator.
template <typename Upper>
Matrix symmetric_from_upper(std::size_t n, Upper&& upper) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) m(i, j) = m(j, i) = upper(i, j);
    return m;
}

/// Switch times at which the active flow toggles between base and alternate.
/// The alternate flow owns [s_0, s_1), the base flow owns [s_1, s_2), and so on.
class JumpSchedule {
public:
    JumpSchedule() = default;
    explicit JumpSchedule(std::vector<double> switch_times) : times_(std::move(switch_times)) {
        for (std::size_t i = 1; i < times_.size(); ++i)
            if (!(times_[i] > times_[i - 1]))
                throw ConfigError("jump schedule times must be strictly increasing");
    }

    const std::vector<double>& times() const noexcept { return times_; }
    bool empty() const noexcept { return times_.empty(); }

    /// True when the alternate flow is active at t.
    bool alternate_active(double t) const noexcept {
        std::size_t passed = 0;
        for (double s : times_)
            if (t >= s) ++passed;
        return passed % 2 == 1;
    }

private:
    std::vector<double> times_;
};

struct OrthogonalRandomizer {
    Matrix u;
    std::uint64_t seed = 0;
};

/// Seeded random orthogonal matrix: modified Gram-Schmidt (applied twice) on a
/// matrix of uniform entries in [-1, 1), so that R has a positive diagonal.
/// Entries are drawn from raw mt19937_64 bits, making U identical across platforms.
inline OrthogonalRandomizer random_orthogonal(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Matrix q(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            q(i, j) = 2.0 * static_cast<double>(rng() >> 11) * 0x1.0p-53 - 1.0;

    for (std::size_t j = 0; j < n; ++j) {
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t k = 0; k < j; ++k) {
                double proj = 0.0;
                for (std::size_t i = 0; i < n; ++i) proj += q(i, k) * q(i, j);
                for (std::size_t i = 0; i < n; ++i) q(i, j) -= proj * q(i, k);
            }
        }
        double norm = 0.0;
        for (std::size_t i = 0; i < n; ++i) norm += q(i, j) * q(i, j);
        norm = std::sqrt(norm);
        if (norm == 0.0) throw ConvergenceError("random_orthogonal: rank-deficient draw");
        for (std::size_t i = 0; i < n; ++i) q(i, j) /= norm;
    }
    return {std::move(q), seed};
}

/// The flow t -> U^T A(t) U. Only the upper triangle is computed; it is mirrored.
inline MatrixFlow conjugate(const MatrixFlow& flow, const OrthogonalRandomizer& rot) {
    const std::size_t n = flow.dimension();
    if (rot.u.rows() != n || rot.u.cols() != n)
        throw DimensionError("conjugate: U dimension does not match flow");
    auto sampler = [flow, u = rot.u, n](double t) {
        const Matrix au = flow.sample(t) * u;
        return symmetric_from_upper(n, [&](std::size_t i, std::size_t j) {
            double s = 0.0;
            for (std::size_t k = 0; k < n; ++k) s += u(k, i) * au(k, j);
            return s;
        });
    };
    return MatrixFlow(n, std::move(sampler),
                      flow.label() + "^U(seed=" + std::to_string(rot.seed) + ")",
                      flow.span_begin(), flow.span_end());
}

/// Piecewise flow that switches between `base` and `alt` at the schedule times,
/// without smoothing.
inline MatrixFlow with_jumps(const MatrixFlow& base, const MatrixFlow& alt,
                             const JumpSchedule& schedule) {
    if (base.dimension() != alt.dimension())
        throw DimensionError("with_jumps: flow dimensions differ");
    const double lo = std::max(base.span_begin(), alt.span_begin());
    const double hi = std::min(base.span_end(), alt.span_end());
    for (double s : schedule.times())
        if (s < lo || s > hi) throw ConfigError("with_jumps: switch time outside flow span");
    if (schedule.empty()) return base;
    auto sampler = [base, alt, schedule](double t) {
        return schedule.alternate_active(t) ? alt.sample(t) : base.sample(t);
    };
    std::string label = base.label() + "|" + alt.label() + "@{";
    for (std::size_t i = 0; i < schedule.times().size(); ++i) {
        if (i) label += ",";
        std::ostringstream os;
        os << schedule.times()[i];
        label += os.str();
    }
    label += "}";
    return MatrixFlow(base.dimension(), std::move(sampler), std::move(label), lo, hi);
}

inline MatrixFlow constant_flow(Matrix m, std::string label = "constant") {
    if (!m.square()) throw DimensionError("constant_flow: matrix is not square");
    if (asymmetry(m) != 0.0) throw AsymmetryError("constant_flow: matrix is not symmetric");
    const std::size_t n = m.rows();
    return MatrixFlow(n, [m = std::move(m)](double) { return m; }, std::move(label),
                      -std::numeric_limits<double>::infinity(),
                      std::numeric_limits<double>::infinity());
}

/// diag(2 + t, 5): closed-form spectrum, used as an oracle flow.
inline MatrixFlow diag_linear_flow() {
    return MatrixFlow(2, [](double t) { return Matrix{{2.0 + t, 0.0}, {0.0, 5.0}}; },
                      "diag-linear", -std::numeric_limits<double>::infinity(),
                      std::numeric_limits<double>::infinity());
}

namespace detail {

inline double seed_entry(double t, std::size_t i, std::size_t j) {
    const double es = std::exp(std::sin(t));
    switch (i * 7 + j) {
    case 0 * 7 + 0: return std::sin(t) + 2.0;
    case 0 * 7 + 1: return es;
    case 0 * 7 + 3: return -es;
    case 0 * 7 + 4: return 0.5;
    case 0 * 7 + 5: return 1.0 + std::cos(t);
    case 1 * 7 + 1: return std::cos(t) - 2.0;
    case 1 * 7 + 3: return 1.0;
    case 1 * 7 + 4: return std::cos(2.0 * t);
    case 1 * 7 + 5: return 1.0;
    case 2 * 7 + 2: return -0.12 * t * t + 2.4 * t - 7.0;
    case 3 * 7 + 3: return 1.0 / (t + 1.0);
    case 3 * 7 + 4: return std::atan(t);
    case 3 * 7 + 5: return std::sin(2.0 * t);
    case 4 * 7 + 4: return 1.0;
    case 4 * 7 + 5: return std::exp(std::cos(t));
    case 5 * 7 + 5: return 1.0 / (t + 2.0);
    case 6 * 7 + 6: return -0.15 * t * t + 3.0 * t - 6.0;
    default: return 0.0;
    }
}

/// Entries of the jump variant that differ from the smooth seed flow.
inline std::optional<double> jump_entry(double t, std::size_t i, std::size_t j) {
    switch (i * 7 + j) {
    case 0 * 7 + 4: return 0.0;
    case 1 * 7 + 1: return 0.0;
    case 2 * 7 + 2: return 1.3 * t - 15.0;
    case 3 * 7 + 4: return 1.0;
    case 3 * 7 + 5: return 2.0 * std::cos(2.0 * t);
    case 4 * 7 + 4: return -3.0;
    case 5 * 7 + 5: return 6.0 / (t + 2.0);
    case 6 * 7 + 6: return 14.05 - t;
    default: return std::nullopt;
    }
}

} // namespace detail

struct BenchmarkFlows {
    MatrixFlow smooth;  ///< A_s(t)
    MatrixFlow jump;    ///< A_sj(t)
};

/// The two 7x7 benchmark seed flows, authored by upper triangle (see README for the
/// entry-by-entry transcription).
inline BenchmarkFlows builtin_flows() {
    MatrixFlow smooth(7, [](double t) {
        return symmetric_from_upper(7, [t](std::size_t i, std::size_t j) {
            return detail::seed_entry(t, i, j);
        });
    }, "A_s");
    MatrixFlow jump(7, [](double t) {
        return symmetric_from_upper(7, [t](std::size_t i, std::size_t j) {
            return detail::jump_entry(t, i, j).value_or(detail::seed_entry(t, i, j));
        });
    }, "A_sj");
    return {std::move(smooth), std::move(jump)};
}

/// The benchmark scenario: U^T A_s U with U^T A_sj U active between switch times.
/// Without a seed the seed flows are used unconjugated.
inline MatrixFlow benchmark_scenario(std::optional<std::uint64_t> seed, const JumpSchedule& jumps) {
    auto [smooth, jump] = builtin_flows();
    if (seed) {
        const auto rot = random_orthogonal(7, *seed);
        smooth = conjugate(smooth, rot);
        jump = conjugate(jump, rot);
    }
    return with_jumps(smooth, jump, jumps);
}

// --- File-backed flows -----------------------------------------------------

/// Equally spaced recorded samples of a flow.
struct SampledFlow {
    std::size_t n = 0;
    double tau = 0.0;
    double t0 = 0.0;
    std::vector<Matrix> samples;

    double time(std::size_t k) const { return t0 + static_cast<double>(k) * tau; }
};

inline SampledFlow record(const MatrixFlow& flow, double t0, double tau, std::size_t count) {
    if (!(tau > 0.0)) throw ConfigError("record: tau must be positive");
    SampledFlow out{flow.dimension(), tau, t0, {}};
    out.samples.reserve(count);
    for (std::size_t k = 0; k < count; ++k) out.samples.push_back(flow.sample(out.time(k)));
    return out;
}

inline void write_flow(std::ostream& os, const SampledFlow& data) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", data.tau);
    os << "n=" << data.n << " tau=" << buf;
    std::snprintf(buf, sizeof buf, "%.17g", data.t0);
    os << " t0=" << buf << "\n";
    for (std::size_t b = 0; b < data.samples.size(); ++b) {
        if (b) os << "\n";
        const Matrix& m = data.samples[b];
        for (std::size_t i = 0; i < m.rows(); ++i) {
            for (std::size_t j = 0; j < m.cols(); ++j) {
                std::snprintf(buf, sizeof buf, "%.17g", m(i, j));
                os << (j ? " " : "") << buf;
            }
            os << "\n";
        }
    }
}

inline void write_flow_file(const std::string& path, const SampledFlow& data) {
    std::ofstream os(path);
    if (!os) throw FormatError("cannot open '" + path + "' for writing");
    write_flow(os, data);
}

namespace detail {

inline double parse_number(const std::string& tok, const std::string& what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(tok, &used);
        if (used != tok.size()) throw FormatError("trailing characters in " + what);
        return v;
    } catch (const std::invalid_argument&) {
        throw FormatError("malformed " + what + ": '" + tok + "'");
    } catch (const std::out_of_range&) {
        throw FormatError("out-of-range " + what + ": '" + tok + "'");
    }
}

inline std::string header_value(std::istringstream& hs, const std::string& key) {
    std::string tok;
    if (!(hs >> tok) || tok.rfind(key + "=", 0) != 0)
        throw FormatError("flow header must read 'n=<dim> tau=<gap> t0=<start>'");
    return tok.substr(key.size() + 1);
}

} // namespace detail

/// Parses the flow text format. A block may optionally start with a line `t=<time>`;
/// when present it must agree with t0 + k*tau.
inline SampledFlow read_flow(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw FormatError("empty flow file");
    std::istringstream hs(line);
    SampledFlow out;
    const double n_value = detail::parse_number(detail::header_value(hs, "n"), "dimension");
    out.tau = detail::parse_number(detail::header_value(hs, "tau"), "tau");
    out.t0 = detail::parse_number(detail::header_value(hs, "t0"), "t0");
    if (std::string extra; hs >> extra) throw FormatError("unexpected header token '" + extra + "'");
    if (!(n_value >= 1.0) || n_value != std::floor(n_value))
        throw FormatError("dimension must be a positive integer");
    if (!(out.tau > 0.0)) throw FormatError("tau must be positive");
    out.n = static_cast<std::size_t>(n_value);

    std::vector<std::vector<double>> rows;
    std::optional<double> stamp;
    auto flush = [&]() {
        if (rows.empty()) {
            if (stamp) throw FormatError("time stamp without sample rows");
            return;
        }
        if (rows.size() != out.n)
            throw FormatError("sample " + std::to_string(out.samples.size()) + " has " +
                              std::to_string(rows.size()) + " rows, expected " +
                              std::to_string(out.n));
        const std::size_t k = out.samples.size();
        if (stamp) {
            const double expect = out.time(k);
            if (std::abs(*stamp - expect) > 1e-9 * std::max(out.tau, std::abs(expect)))
                throw FormatError("non-constant spacing at sample " + std::to_string(k));
        }
        double scale = 1.0;
        for (const auto& r : rows)
            for (double x : r) scale = std::max(scale, std::abs(x));
        for (std::size_t i = 0; i < out.n; ++i)
            for (std::size_t j = i + 1; j < out.n; ++j)
                if (std::abs(rows[i][j] - rows[j][i]) > 1e-12 * scale)
                    throw AsymmetryError("sample " + std::to_string(k) + " is not symmetric");
        out.samples.push_back(symmetric_from_upper(
            out.n, [&](std::size_t i, std::size_t j) { return rows[i][j]; }));
        rows.clear();
        stamp.reset();
    };

    while (std::getline(is, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            flush();
            continue;
        }
        std::istringstream ls(line);
        std::string tok;
        ls >> tok;
        if (tok.rfind("t=", 0) == 0) {
            if (!rows.empty()) throw FormatError("time stamp inside a sample block");
            stamp = detail::parse_number(tok.substr(2), "time stamp");
            continue;
        }
        std::vector<double> row{detail::parse_number(tok, "matrix entry")};
        while (ls >> tok) row.push_back(detail::parse_number(tok, "matrix entry"));
        if (row.size() != out.n)
            throw FormatError("row with " + std::to_string(row.size()) + " entries, expected " +
                              std::to_string(out.n));
        rows.push_back(std::move(row));
    }
    flush();
    if (out.samples.empty()) throw FormatError("flow file holds no samples");
    return out;
}

/// Flow valid exactly at the recorded instants; anything in between is an
/// InterpolationError.
inline MatrixFlow as_flow(SampledFlow data, std::string label = "file") {
    const std::size_t n = data.n;
    const double begin = data.t0;
    const double end = data.time(data.samples.size() - 1);
    auto shared = std::make_shared<const SampledFlow>(std::move(data));
    auto sampler = [shared](double t) {
        const double pos = (t - shared->t0) / shared->tau;
        const double k = std::round(pos);
        if (std::abs(pos - k) > 1e-9)
            throw InterpolationError("t = " + std::to_string(t) +
                                     " falls between recorded instants");
        return shared->samples.at(static_cast<std::size_t>(k));
    };
    return MatrixFlow(n, std::move(sampler), std::move(label), begin, end);
}

inline MatrixFlow flow_from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot open flow file '" + path + "'");
    return as_flow(read_flow(is), path);
}

} // namespace znneig

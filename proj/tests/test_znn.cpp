#include <algorithm>
#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include <znneig/harness.hpp>
#include <znneig/znn.hpp>

#include "support.hpp"

using namespace znneig;

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

// Q(theta(t)) diag(2 + sin t, 5 + cos(t) / 2) Q(theta(t))^T: closed-form spectrum,
// rotating eigenvectors.
MatrixFlow rotating_flow() {
    return MatrixFlow(2, [](double t) {
        const double th = 0.3 * t + 0.2 * std::sin(t), c = std::cos(th), s = std::sin(th);
        const double l1 = 2.0 + std::sin(t), l2 = 5.0 + 0.5 * std::cos(t);
        const double a = c * c * l1 + s * s * l2, b = c * s * (l1 - l2), d = s * s * l1 + c * c * l2;
        return Matrix{{a, b}, {b, d}};
    }, "rotating", -inf, inf);
}

MatrixFlow diag_converging_flow() {
    return MatrixFlow(2, [](double t) { return Matrix{{2.0 + t, 0.0}, {0.0, 5.0 - t}}; }, "diag-x", -inf, inf);
}

SolverConfig short_config(double tau, double tf, const char* preset = "ifd5") {
    SolverConfig c;
    c.tau = tau;
    c.tf = tf;
    c.formulas = catalog().preset(preset);
    return c;
}

} // namespace

TEST(Assemble, ExactEigenpairGivesZeroRhs) {
    const Matrix a{{2.0, 0.0}, {0.0, 5.0}};
    const Vector z{1.0, 0.0, 2.0};
    const auto sys = assemble(a, Matrix(2, 2), z, 1.0, 1.0);
    EXPECT_TRUE(sys.p == (Matrix{{0.0, 0.0, -1.0}, {0.0, 3.0, 0.0}, {-1.0, 0.0, 0.0}}));
    EXPECT_EQ(sys.q, (Vector{0.0, 0.0, 0.0}));
}

TEST(Assemble, PerturbedEigenvalue) {
    const Matrix a{{2.0, 0.0}, {0.0, 5.0}};
    const Vector z{1.0, 0.0, 2.1};
    const auto sys = assemble(a, Matrix(2, 2), z, 1.0, 1.0);
    EXPECT_NEAR(sys.p(0, 0), -0.1, 1e-15);
    EXPECT_NEAR(sys.p(1, 1), 2.9, 1e-15);
    EXPECT_NEAR(sys.q[0], 0.1, 1e-15);
    EXPECT_EQ(sys.q[1], 0.0);
    EXPECT_EQ(sys.q[2], 0.0);
}

TEST(Assemble, DerivativeAndNormalizationTerms) {
    const Matrix a{{1.0, 0.0}, {0.0, 1.0}};
    const Matrix adot{{0.5, 1.0}, {1.0, -2.0}};
    const Vector z{2.0, 0.0, 1.0};
    const auto sys = assemble(a, adot, z, 3.0, 4.0);
    // (A - I) x = 0, so q top = -Adot x; bottom = mu/2 (|x|^2 - 1) = 2 * 3.
    EXPECT_EQ(sys.q[0], -1.0);
    EXPECT_EQ(sys.q[1], -2.0);
    EXPECT_EQ(sys.q[2], 6.0);
}

TEST(Assemble, BorderedMatrixSymmetric) {
    const Matrix a = builtin_flows().smooth.sample(1.0);
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 10; ++trial) {
        const Vector z = znneig::testing::random_vector(8, rng);
        const auto sys = assemble(a, a, z, 4.5, 4.5);
        EXPECT_EQ(fro_norm(sys.p - sys.p.transpose()), 0.0);
    }
}

TEST(Assemble, DimensionErrors) {
    EXPECT_THROW(assemble(Matrix::identity(2), Matrix::identity(3), Vector{1, 0, 1}, 1, 1), DimensionError);
    EXPECT_THROW(assemble(Matrix::identity(2), Matrix::identity(2), Vector{1, 0}, 1, 1), DimensionError);
}

TEST(Step, FixedPointOnConstantFlow) {
    const Matrix a{{2.0, 0.0}, {0.0, 5.0}};
    for (const char* preset : {"ifd5", "ifd6"}) {
        const SolverConfig c = short_config(0.005, 1.0, preset);
        EigenPairState st;
        for (std::size_t j = 0; j < c.startup_length(); ++j) st.push({1.0, 0.0, 2.0}, c.startup_length());
        const auto r = step(st, a, Matrix(2, 2), c);
        EXPECT_EQ(r.z_next, (Vector{1.0, 0.0, 2.0})) << preset;
        EXPECT_EQ(r.solve.method, SolveMethod::direct);
    }
}

TEST(Step, ShortHistoryRejected) {
    const SolverConfig c;
    EigenPairState st;
    st.push({1.0, 0.0, 2.0}, 4);
    EXPECT_THROW(step(st, Matrix::identity(2), Matrix(2, 2), c), ConfigError);
}

TEST(Step, FromSampleHistory) {
    const SolverConfig c;
    const auto f = constant_flow(Matrix{{2.0, 0.0}, {0.0, 5.0}});
    std::vector<Matrix> samples(4, f.sample(0.0));
    EigenPairState st;
    for (int j = 0; j < 4; ++j) st.push({0.0, 1.0, 5.0}, 4);
    EXPECT_EQ(step(st, samples, c).z_next, (Vector{0.0, 1.0, 5.0}));
}

TEST(Startup, ConstantFlowBuffersIdentical) {
    const auto f = constant_flow(Matrix{{2.0, 1.0, 0.0}, {1.0, 3.0, 1.0}, {0.0, 1.0, 4.0}});
    const auto st = startup(f, 0.0, SolverConfig{});
    ASSERT_EQ(st.pairs.size(), 3u);
    for (const auto& p : st.pairs) {
        ASSERT_EQ(p.history.size(), 4u);
        for (const auto& z : p.history) EXPECT_EQ(z, p.history.front());
    }
}

TEST(Startup, DiagonalPairsDoNotSwap) {
    const SolverConfig c = short_config(0.01, 1.0);
    const auto st = startup(diag_converging_flow(), 0.0, c);
    for (std::size_t j = 0; j < st.eigendata.size(); ++j) {
        const double t = 0.01 * static_cast<double>(j);
        EXPECT_NEAR(st.eigendata[j][0][2], 2.0 + t, 1e-14);
        EXPECT_NEAR(st.eigendata[j][1][2], 5.0 - t, 1e-14);
    }
}

TEST(Startup, BenchmarkBuffersAreEigenpairs) {
    const auto f = benchmark_scenario(1, JumpSchedule{});
    const SolverConfig c;
    const auto st = startup(f, 0.0, c);
    ASSERT_EQ(st.eigendata.size(), 4u);
    for (std::size_t j = 0; j < 4; ++j) {
        const Matrix a = f.sample(c.time(j));
        for (const auto& z : st.eigendata[j]) EXPECT_LE(residual(a, z), 1e-10);
        EXPECT_LE(orth_deviation(st.eigendata[j]), 1e-10);
    }
}

TEST(MatchPairs, FollowsCrossingAndAlignsSign) {
    // Previous instant: pair 0 at lambda 1.01 along e1, pair 1 at 0.99 along e2.
    const std::vector<Vector> prev{{1.0, 0.0, 1.01}, {0.0, 1.0, 0.99}};
    // Fresh decomposition in ascending order with a flipped first vector.
    EigenDecomposition fresh{{0.98, 1.02}, Matrix{{0.0, 1.0}, {-1.0, 0.0}}};
    const auto z = match_pairs(fresh, prev);
    EXPECT_EQ(z[0], (Vector{1.0, 0.0, 1.02}));
    EXPECT_EQ(z[1], (Vector{0.0, 1.0, 0.98}));
}

TEST(MatchPairs, CountMismatch) {
    EigenDecomposition fresh{{1.0}, Matrix::identity(1)};
    EXPECT_THROW(match_pairs(fresh, std::vector<Vector>{}), DimensionError);
}

TEST(DetectJump, Threshold) {
    EXPECT_FALSE(detect_jump(300.0, 300.0));
    EXPECT_TRUE(detect_jump(300.5, 300.0));
    EXPECT_FALSE(detect_jump(Matrix(3, 3), 0.0));
}

TEST(DetectJump, ConstantFlowNeverFires) {
    SolverConfig c;
    c.tf = 1.0;
    const auto trace = derivative_trace(constant_flow(Matrix::identity(3)), c);
    for (const auto& d : trace) EXPECT_EQ(d.norm, 0.0);
}

TEST(Run, DiagonalFlowOracle) {
    const SolverConfig c = short_config(1e-3, 0.1);
    const auto tr = run(diag_linear_flow(), c);
    ASSERT_TRUE(tr.completed());
    ASSERT_EQ(tr.events.size(), 101u);
    const auto& last = tr.events.back();
    EXPECT_EQ(last.k, 100u);
    EXPECT_LE(std::abs(last.z[0][2] - (2.0 + last.t)), 1e-8);
    EXPECT_LE(std::abs(last.z[1][2] - 5.0), 1e-8);
}

TEST(Run, ConstantFlowStaysAtStartup) {
    const auto f = constant_flow(Matrix{{2.0, 1.0, 0.0}, {1.0, 3.0, 1.0}, {0.0, 1.0, 4.0}});
    const SolverConfig c = short_config(0.005, 5.0);
    const auto tr = run(f, c);
    ASSERT_TRUE(tr.completed());
    EXPECT_EQ(tr.restart_count(), 0u);
    const auto& first = tr.events.front().z;
    double drift = 0.0;
    for (const auto& ev : tr.events)
        for (std::size_t i = 0; i < 3; ++i) drift = std::max(drift, znneig::testing::max_abs_diff(ev.z[i], first[i]));
    EXPECT_LE(drift, 1e-12);
}

TEST(Run, BenchmarkRestartsAtJumps) {
    const auto f = benchmark_scenario(1, JumpSchedule({8.0, 14.5}));
    const auto tr = run(f, SolverConfig{});
    ASSERT_TRUE(tr.completed());
    std::vector<double> at;
    for (const auto& ev : tr.events)
        if (ev.kind == StepKind::restart) at.push_back(ev.t);
    ASSERT_EQ(at.size(), 2u);
    EXPECT_NEAR(at[0], 8.0, 1e-9);
    EXPECT_NEAR(at[1], 14.5, 1e-9);
}

TEST(Run, SmoothRunHasNoRestarts) {
    const auto tr = run(benchmark_scenario(1, JumpSchedule{}), SolverConfig{});
    EXPECT_TRUE(tr.completed());
    EXPECT_EQ(tr.restart_count(), 0u);
}

TEST(Run, EventsCoverEveryInstantOnce) {
    SolverConfig c;
    c.tf = 10.0;
    const auto tr = run(benchmark_scenario(1, JumpSchedule({8.0})), c);
    ASSERT_EQ(tr.events.size(), c.steps() + 1);
    for (std::size_t k = 0; k < tr.events.size(); ++k) EXPECT_EQ(tr.events[k].k, k);
}

TEST(Run, RestartEventsCarryOffendingDerivative) {
    const auto tr = run(benchmark_scenario(1, JumpSchedule({8.0, 14.5})), SolverConfig{});
    for (const auto& ev : tr.events) {
        if (ev.kind != StepKind::restart) continue;
        ASSERT_TRUE(ev.adot_norm.has_value());
        EXPECT_GT(*ev.adot_norm, 300.0);
    }
}

TEST(Run, JumpInsideStartupWindowReseeds) {
    SolverConfig c;
    c.tf = 1.0;
    // Switch lands at the third startup instant; the estimate first sees it at the
    // last one, which is where the buffers are re-seeded.
    const auto tr = run(benchmark_scenario(1, JumpSchedule({0.01})), c);
    ASSERT_TRUE(tr.completed());
    EXPECT_EQ(tr.restart_count(), 1u);
    ASSERT_EQ(tr.events.size(), c.steps() + 1);
    for (const auto& ev : tr.events)
        if (ev.kind == StepKind::restart) EXPECT_NEAR(ev.t, 0.015, 1e-12);
}

TEST(Run, Deterministic) {
    const auto f = benchmark_scenario(3, JumpSchedule({8.0}));
    SolverConfig c;
    c.tf = 9.0;
    const auto a = run(f, c);
    const auto b = run(f, c);
    ASSERT_EQ(a.events.size(), b.events.size());
    for (std::size_t e = 0; e < a.events.size(); ++e) {
        EXPECT_EQ(a.events[e].z, b.events[e].z);
        EXPECT_EQ(a.events[e].residual, b.events[e].residual);
    }
}

TEST(Run, NonFiniteDataAbortsWithPartialTrajectory) {
    const MatrixFlow f(2, [](double t) {
        if (t > 0.05) return Matrix{{std::nan(""), 0.0}, {0.0, 5.0}};
        return Matrix{{2.0 + t, 0.0}, {0.0, 5.0}};
    }, "poisoned", 0.0, 1.0);
    const auto tr = run(f, short_config(0.01, 1.0));
    EXPECT_FALSE(tr.completed());
    ASSERT_TRUE(tr.abort_reason.has_value());
    EXPECT_GE(tr.events.size(), 4u);
    for (const auto& ev : tr.events)
        for (const auto& z : ev.z)
            for (double v : z) EXPECT_TRUE(std::isfinite(v));
}

TEST(Run, ConfigValidation) {
    const auto f = diag_linear_flow();
    SolverConfig c;
    c.tau = 0.0;
    EXPECT_THROW(run(f, c), ConfigError);
    c = SolverConfig{};
    c.eta = -1.0;
    EXPECT_THROW(run(f, c), ConfigError);
    c = SolverConfig{};
    c.tf = c.t0;
    EXPECT_THROW(run(f, c), ConfigError);
    c = SolverConfig{};
    c.mu = 0.0;
    EXPECT_THROW(run(f, c), ConfigError);
    const auto bounded = as_flow(record(f, 0.0, 0.005, 10));
    EXPECT_THROW(run(bounded, SolverConfig{}), ConfigError);
}

TEST(Run, ShortSpanOnlyStartup) {
    const auto tr = run(diag_linear_flow(), short_config(0.01, 0.02));
    ASSERT_TRUE(tr.completed());
    EXPECT_EQ(tr.events.size(), 3u);
    EXPECT_EQ(tr.predicted_steps, 0u);
}

TEST(Normalization, PerturbedNormDecays) {
    const Matrix a{{2.0, 1.0, 0.0}, {1.0, 3.0, 1.0}, {0.0, 1.0, 4.0}};
    const auto eig = sym_eig(a);
    const SolverConfig c;
    EigenPairState st;
    Vector z(4);
    for (std::size_t r = 0; r < 3; ++r) z[r] = 1.2 * eig.vectors(r, 1);
    z[3] = eig.values[1];
    for (int j = 0; j < 4; ++j) st.push(z, 4);
    auto deviation = [](const Vector& v) { return std::abs(std::hypot(v[0], v[1], v[2]) - 1.0); };
    const double start = deviation(z);
    double prev_envelope = inf;
    for (int window = 0; window < 8; ++window) {
        double envelope = 0.0;
        for (int k = 0; k < 50; ++k) {
            const auto r = step(st, a, Matrix(3, 3), c);
            envelope = std::max(envelope, deviation(r.z_next));
            st.push(r.z_next, 4);
        }
        EXPECT_LT(envelope, prev_envelope) << "window " << window;
        prev_envelope = envelope;
    }
    EXPECT_LT(prev_envelope, 1e-2 * start);
}

TEST(Order, EigenvalueErrorSlopeMatchesDeclaredOrder) {
    const auto f = rotating_flow();
    const std::vector<double> taus{0.01, 0.005, 0.0025};
    for (const char* preset : {"ifd5", "ifd7"}) {
        std::vector<double> errs;
        for (double tau : taus) {
            SolverConfig c = short_config(tau, 10.0, preset);
            c.eta = 4.5 * 0.005 / tau;
            const auto tr = run(f, c);
            ASSERT_TRUE(tr.completed());
            std::vector<double> e;
            for (const auto& ev : tr.events)
                if (ev.kind == StepKind::predicted && ev.t > 2.0) e.push_back(std::abs(ev.z[0][2] - (2.0 + std::sin(ev.t))));
            errs.push_back(median(e));
        }
        const double slope = loglog_slope(taus, errs);
        const int order = catalog().preset(preset).recursion.declared_order;
        EXPECT_NEAR(slope, order, 0.5) << preset;
    }
}

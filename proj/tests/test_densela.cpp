#include <algorithm>
#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include <znneig/densela.hpp>
#include <znneig/flows.hpp>
#include <znneig/formulas.hpp>

#include "support.hpp"

using namespace znneig;
using znneig::testing::max_abs_diff;
using znneig::testing::random_matrix;
using znneig::testing::random_symmetric;
using znneig::testing::random_vector;

namespace {

double eig_residual(const Matrix& a, const EigenDecomposition& e) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const Vector v = e.vectors.col(i);
        Vector r = a * v;
        for (std::size_t k = 0; k < r.size(); ++k) r[k] -= e.values[i] * v[k];
        worst = std::max(worst, two_norm(r));
    }
    return worst;
}

double orth_error(const Matrix& v) {
    Matrix g = v.transpose() * v;
    g -= Matrix::identity(v.rows());
    return fro_norm(g);
}

// Roots of det(A - l I) for 2x2 symmetric A, ascending.
std::vector<double> quadratic_roots(const Matrix& a) {
    const double m = 0.5 * (a(0, 0) + a(1, 1));
    const double d = std::hypot(0.5 * (a(0, 0) - a(1, 1)), a(0, 1));
    return {m - d, m + d};
}

// Trigonometric solution of the symmetric 3x3 characteristic cubic, ascending.
std::vector<double> cubic_roots(const Matrix& a) {
    const double q = trace(a) / 3.0;
    const double p1 = a(0, 1) * a(0, 1) + a(0, 2) * a(0, 2) + a(1, 2) * a(1, 2);
    const double p2 = (a(0, 0) - q) * (a(0, 0) - q) + (a(1, 1) - q) * (a(1, 1) - q) +
                      (a(2, 2) - q) * (a(2, 2) - q) + 2.0 * p1;
    const double p = std::sqrt(p2 / 6.0);
    Matrix b = a;
    for (int i = 0; i < 3; ++i) b(i, i) -= q;
    b *= 1.0 / p;
    const double detb = b(0, 0) * (b(1, 1) * b(2, 2) - b(1, 2) * b(2, 1)) -
                        b(0, 1) * (b(1, 0) * b(2, 2) - b(1, 2) * b(2, 0)) +
                        b(0, 2) * (b(1, 0) * b(2, 1) - b(1, 1) * b(2, 0));
    const double r = std::clamp(detb / 2.0, -1.0, 1.0);
    const double phi = std::acos(r) / 3.0;
    const double l1 = q + 2.0 * p * std::cos(phi);
    const double l3 = q + 2.0 * p * std::cos(phi + 2.0 * std::numbers::pi / 3.0);
    std::vector<double> out{l1, 3.0 * q - l1 - l3, l3};
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace

TEST(Norms, FrobeniusOfIdentity) { EXPECT_DOUBLE_EQ(fro_norm(Matrix::identity(3)), std::sqrt(3.0)); }

TEST(Norms, TwoNormPythagorean) {
    const Vector v{3.0, 4.0};
    EXPECT_DOUBLE_EQ(two_norm(v), 5.0);
}

TEST(Norms, DerivativeOfConstantFlowHasZeroNorm) {
    const Matrix m = benchmark_scenario(std::nullopt, JumpSchedule{}).sample(0.3);
    const std::vector<Matrix> hist(4, m);
    EXPECT_EQ(fro_norm(derivative_estimate(catalog().backward_formula("BDF4pt"), hist, 0.005)), 0.0);
}

TEST(SymEig, IdentityHasUnitSpectrum) {
    const auto e = sym_eig(Matrix::identity(3));
    for (double l : e.values) EXPECT_DOUBLE_EQ(l, 1.0);
    EXPECT_LE(orth_error(e.vectors), 1e-15);
}

TEST(SymEig, DiagonalInputSortedAscending) {
    const Vector d{3.0, 1.0, 2.0};
    const auto e = sym_eig(Matrix::diagonal(d));
    EXPECT_EQ(e.values, (Vector{1.0, 2.0, 3.0}));
    EXPECT_LE(eig_residual(Matrix::diagonal(d), e), 1e-15);
}

TEST(SymEig, BenchmarkMatrixInvariants) {
    const Matrix a = builtin_flows().smooth.sample(0.0);
    const auto e = sym_eig(a);
    EXPECT_LE(eig_residual(a, e), 1e-10 * fro_norm(a));
    EXPECT_LE(orth_error(e.vectors), 1e-10);
    EXPECT_TRUE(std::is_sorted(e.values.begin(), e.values.end()));
}

TEST(SymEig, RoundTripOnRandomSymmetric) {
    std::mt19937_64 rng(11);
    for (std::size_t n = 1; n <= 20; ++n) {
        for (int trial = 0; trial < 3; ++trial) {
            const Matrix a = random_symmetric(n, rng, 5.0);
            const auto e = sym_eig(a);
            const Matrix vdvt = e.vectors * Matrix::diagonal(e.values) * e.vectors.transpose();
            EXPECT_LE(fro_norm(vdvt - a), 1e-9 * fro_norm(a)) << "n=" << n;
            EXPECT_LE(orth_error(e.vectors), 1e-10) << "n=" << n;
            EXPECT_LE(eig_residual(a, e), 1e-10 * fro_norm(a)) << "n=" << n;
        }
    }
}

TEST(SymEig, MatchesQuadraticRoots) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const Matrix a = random_symmetric(2, rng, 3.0);
        const auto want = quadratic_roots(a);
        const auto got = sym_eig(a).values;
        EXPECT_NEAR(got[0], want[0], 1e-10);
        EXPECT_NEAR(got[1], want[1], 1e-10);
    }
}

TEST(SymEig, MatchesCubicRoots) {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 200; ++trial) {
        const Matrix a = random_symmetric(3, rng, 3.0);
        const auto want = cubic_roots(a);
        const auto got = sym_eig(a).values;
        for (int i = 0; i < 3; ++i) EXPECT_NEAR(got[i], want[i], 1e-10) << "trial " << trial;
    }
}

TEST(SymEig, RepeatedEigenvaluesStayOrthogonal) {
    std::mt19937_64 rng(9);
    const Matrix q = sym_eig(random_symmetric(5, rng)).vectors;
    const Vector d{1.0, 1.0, 1.0, 4.0, 4.0};
    const Matrix a = q * Matrix::diagonal(d) * q.transpose();
    Matrix sym = a;
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < i; ++j) sym(i, j) = sym(j, i);
    const auto e = sym_eig(sym);
    EXPECT_LE(orth_error(e.vectors), 1e-12);
    EXPECT_LE(max_abs_diff(e.values, d), 1e-12);
}

TEST(SymEig, Deterministic) {
    std::mt19937_64 rng(3);
    const Matrix a = random_symmetric(9, rng);
    const auto e1 = sym_eig(a);
    const auto e2 = sym_eig(a);
    EXPECT_EQ(e1.values, e2.values);
    EXPECT_TRUE(e1.vectors == e2.vectors);
}

TEST(SymEig, RejectsAsymmetricInput) {
    EXPECT_THROW(sym_eig(Matrix{{1.0, 2.0}, {0.0, 1.0}}), AsymmetryError);
}

TEST(SymEig, RejectsNonSquareInput) { EXPECT_THROW(sym_eig(Matrix(2, 3)), DimensionError); }

TEST(SymEig, ZeroAndOneByOne) {
    EXPECT_EQ(sym_eig(Matrix(3, 3)).values, (Vector{0.0, 0.0, 0.0}));
    const auto e = sym_eig(Matrix{{-2.5}});
    EXPECT_EQ(e.values, Vector{-2.5});
    EXPECT_EQ(std::abs(e.vectors(0, 0)), 1.0);
}

TEST(Solve, IdentityReturnsRhs) {
    const Vector q{1.5, -2.0, 7.0};
    const auto r = solve(Matrix::identity(3), q);
    EXPECT_EQ(r.solution, q);
    EXPECT_EQ(r.method, SolveMethod::direct);
}

TEST(Solve, DiagonalSystem) {
    const auto r = solve(Matrix{{2.0, 0.0}, {0.0, 4.0}}, Vector{2.0, 8.0});
    EXPECT_EQ(r.solution, (Vector{1.0, 2.0}));
    EXPECT_EQ(r.method, SolveMethod::direct);
    EXPECT_DOUBLE_EQ(r.condition, 0.5);
}

TEST(Solve, RandomWellConditioned) {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        Matrix p = random_matrix(8, 8, rng);
        for (std::size_t i = 0; i < 8; ++i) p(i, i) += 4.0;
        const Vector q = random_vector(8, rng);
        const auto r = solve(p, q);
        EXPECT_EQ(r.method, SolveMethod::direct);
        Vector res = p * r.solution;
        for (std::size_t i = 0; i < 8; ++i) res[i] -= q[i];
        EXPECT_LE(two_norm(res), 1e-12 * fro_norm(p) * two_norm(r.solution));
    }
}

TEST(Solve, SingularFallsBackToLeastSquares) {
    const auto r = solve(Matrix{{1.0, 0.0}, {0.0, 0.0}}, Vector{3.0, 0.0});
    EXPECT_EQ(r.method, SolveMethod::least_squares);
    EXPECT_NEAR(r.solution[0], 3.0, 1e-14);
    EXPECT_NEAR(r.solution[1], 0.0, 1e-14);
}

TEST(Solve, ShapeErrors) {
    EXPECT_THROW(solve(Matrix(2, 3), Vector{1.0, 2.0}), DimensionError);
    EXPECT_THROW(solve(Matrix::identity(2), Vector{1.0}), DimensionError);
    EXPECT_THROW(solve_augmented(Matrix::identity(2), Vector{1.0}), DimensionError);
}

TEST(SolveAugmented, AgreesWithDirectOnNonsingular) {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 2 + static_cast<std::size_t>(trial % 7);
        Matrix p = random_matrix(n, n, rng);
        for (std::size_t i = 0; i < n; ++i) p(i, i) += 3.0;
        const Vector q = random_vector(n, rng);
        const auto d = solve(p, q);
        const auto ls = solve_augmented(p, q);
        EXPECT_EQ(ls.method, SolveMethod::least_squares);
        EXPECT_LE(max_abs_diff(d.solution, ls.solution), 1e-9 * two_norm(d.solution));
    }
}

TEST(SolveAugmented, ZeroSystemGivesZero) {
    const auto r = solve_augmented(Matrix(2, 2), Vector{0.0, 0.0});
    EXPECT_EQ(r.solution, (Vector{0.0, 0.0}));
}

TEST(SolveAugmented, RankDeficientMinimumNorm) {
    const Matrix p{{1.0, 0.0}, {0.0, 0.0}};
    const Vector q{3.0, 0.0};
    const auto r = solve_augmented(p, q);
    // Normal equations P^T P x = P^T q restricted to the row space of P.
    EXPECT_NEAR(r.solution[0], 3.0, 1e-14);
    EXPECT_NEAR(r.solution[1], 0.0, 1e-14);
}

TEST(SolveAugmented, InconsistentSystemLeastSquares) {
    // Rank one: both rows point along (1, 1); the least-squares fit averages the rhs and
    // the minimum-norm solution splits it evenly.
    const Matrix p{{1.0, 1.0}, {1.0, 1.0}};
    const auto r = solve_augmented(p, Vector{1.0, 3.0});
    EXPECT_NEAR(r.solution[0], 1.0, 1e-12);
    EXPECT_NEAR(r.solution[1], 1.0, 1e-12);
    EXPECT_LT(r.condition, 1e-12);
}

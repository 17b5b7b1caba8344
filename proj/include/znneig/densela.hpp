#pragma once

// Self-contained dense linear algebra: the static symmetric eigensolver used at
// startup and restart, the pivoted solve for P\q, and the zero-row augmented
// least-squares fallback for singular P.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <string_view>
#include <utility>
#include <vector>

#include "dense.hpp"
#include "errors.hpp"

namespace znneig {

/// Eigenvalues ascending; column i of `vectors` belongs to `values[i]`.
struct EigenDecomposition {
    Vector values;
    Matrix vectors;
};

enum class SolveMethod { direct, least_squares };

inline std::string_view to_string(SolveMethod m) {
    return m == SolveMethod::direct ? "direct" : "least-squares";
}

struct LinearSolveReport {
    Vector solution;
    SolveMethod method = SolveMethod::direct;
    /// min|pivot| / max|pivot| for the direct path, sigma_min / sigma_max otherwise.
    double condition = 0.0;
};

namespace detail {

inline constexpr int jacobi_sweep_cap = 100;

inline void require_symmetric(const Matrix& a) {
    if (!a.square()) throw DimensionError("sym_eig: matrix is not square");
    const double scale = fro_norm(a);
    if (asymmetry(a) > 1e-12 * scale) throw AsymmetryError("sym_eig: input is not symmetric");
}

} // namespace detail

/// Cyclic threshold Jacobi eigensolver for real symmetric matrices.
///
/// Only the upper triangle is read after the symmetry check. Rotations are applied
/// in a fixed order, so the output is bit-for-bit deterministic for a given input.
/// Throws ConvergenceError if the off-diagonal mass has not vanished after the sweep cap.
inline EigenDecomposition sym_eig(const Matrix& input) {
    detail::require_symmetric(input);
    const std::size_t n = input.rows();
    Matrix a = input;
    Matrix v = Matrix::identity(n);
    Vector d(n), b(n), z(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) d[i] = b[i] = a(i, i);

    auto rotate = [](Matrix& m, double s, double tau, std::size_t i, std::size_t j,
                     std::size_t k, std::size_t l) {
        const double g = m(i, j);
        const double h = m(k, l);
        m(i, j) = g - s * (h + g * tau);
        m(k, l) = h + s * (g - h * tau);
    };

    bool converged = n <= 1;
    for (int sweep = 1; sweep <= detail::jacobi_sweep_cap && !converged; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p + 1 < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += std::abs(a(p, q));
        if (off == 0.0) {
            converged = true;
            break;
        }
        const double thresh = sweep < 4 ? 0.2 * off / static_cast<double>(n * n) : 0.0;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double g = 100.0 * std::abs(a(p, q));
                if (sweep > 4 && std::abs(d[p]) + g == std::abs(d[p]) &&
                    std::abs(d[q]) + g == std::abs(d[q])) {
                    a(p, q) = 0.0;
                    continue;
                }
                if (std::abs(a(p, q)) <= thresh) continue;
                double h = d[q] - d[p];
                double t;
                if (std::abs(h) + g == std::abs(h)) {
                    t = a(p, q) / h;
                } else {
                    const double theta = 0.5 * h / a(p, q);
                    t = 1.0 / (std::abs(theta) + std::sqrt(1.0 + theta * theta));
                    if (theta < 0.0) t = -t;
                }
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                const double tau = s / (1.0 + c);
                h = t * a(p, q);
                z[p] -= h;
                z[q] += h;
                d[p] -= h;
                d[q] += h;
                a(p, q) = 0.0;
                for (std::size_t j = 0; j < p; ++j) rotate(a, s, tau, j, p, j, q);
                for (std::size_t j = p + 1; j < q; ++j) rotate(a, s, tau, p, j, j, q);
                for (std::size_t j = q + 1; j < n; ++j) rotate(a, s, tau, p, j, q, j);
                for (std::size_t j = 0; j < n; ++j) rotate(v, s, tau, j, p, j, q);
            }
        }
        for (std::size_t p = 0; p < n; ++p) {
            b[p] += z[p];
            d[p] = b[p];
            z[p] = 0.0;
        }
    }
    if (!converged) throw ConvergenceError("sym_eig: Jacobi sweeps did not converge");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t l, std::size_t r) { return d[l] < d[r]; });

    EigenDecomposition out{Vector(n), Matrix(n, n)};
    for (std::size_t k = 0; k < n; ++k) {
        out.values[k] = d[order[k]];
        for (std::size_t i = 0; i < n; ++i) out.vectors(i, k) = v(i, order[k]);
    }
    return out;
}

/// Minimum-norm least-squares solution of P x = q with one zero row appended to P
/// and one zero appended to q. Backed by a one-sided Jacobi SVD of the augmented
/// (m+1) x m system.
inline LinearSolveReport solve_augmented(const Matrix& p, std::span<const double> q) {
    if (!p.square()) throw DimensionError("solve_augmented: P is not square");
    if (q.size() != p.rows()) throw DimensionError("solve_augmented: rhs length mismatch");
    const std::size_t m = p.rows();
    const std::size_t rows = m + 1;

    Matrix u(rows, m, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) u(i, j) = p(i, j);
    Vector rhs(q.begin(), q.end());
    rhs.push_back(0.0);
    Matrix v = Matrix::identity(m);

    constexpr double eps = std::numeric_limits<double>::epsilon();
    for (int sweep = 0; sweep < 60; ++sweep) {
        bool rotated = false;
        for (std::size_t j = 0; j + 1 < m; ++j) {
            for (std::size_t k = j + 1; k < m; ++k) {
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (std::size_t i = 0; i < rows; ++i) {
                    alpha += u(i, j) * u(i, j);
                    beta += u(i, k) * u(i, k);
                    gamma += u(i, j) * u(i, k);
                }
                if (gamma == 0.0 || std::abs(gamma) <= eps * std::sqrt(alpha * beta)) continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < rows; ++i) {
                    const double uj = u(i, j), uk = u(i, k);
                    u(i, j) = c * uj - s * uk;
                    u(i, k) = s * uj + c * uk;
                }
                for (std::size_t i = 0; i < m; ++i) {
                    const double vj = v(i, j), vk = v(i, k);
                    v(i, j) = c * vj - s * vk;
                    v(i, k) = s * vj + c * vk;
                }
            }
        }
        if (!rotated) break;
    }

    Vector sigma(m);
    for (std::size_t j = 0; j < m; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < rows; ++i) s += u(i, j) * u(i, j);
        sigma[j] = std::sqrt(s);
    }
    const double smax = m == 0 ? 0.0 : *std::max_element(sigma.begin(), sigma.end());
    const double cutoff = static_cast<double>(rows) * eps * smax;

    LinearSolveReport report{Vector(m, 0.0), SolveMethod::least_squares, 0.0};
    double smin = smax;
    for (std::size_t j = 0; j < m; ++j) {
        if (sigma[j] <= cutoff || sigma[j] == 0.0) {
            smin = 0.0;
            continue;
        }
        smin = std::min(smin, sigma[j]);
        double proj = 0.0;
        for (std::size_t i = 0; i < rows; ++i) proj += u(i, j) * rhs[i];
        const double w = proj / (sigma[j] * sigma[j]);
        for (std::size_t i = 0; i < m; ++i) report.solution[i] += w * v(i, j);
    }
    report.condition = smax > 0.0 ? smin / smax : 0.0;
    return report;
}

/// Solves P x = q by LU with partial pivoting. When the smallest pivot magnitude
/// is at or below 1e-12 * ||P||_F the system is treated as singular and handed to
/// solve_augmented.
inline LinearSolveReport solve(const Matrix& p, std::span<const double> q) {
    if (!p.square()) throw DimensionError("solve: P is not square");
    if (q.size() != p.rows()) throw DimensionError("solve: rhs length mismatch");
    const std::size_t n = p.rows();
    const double singular_below = 1e-12 * fro_norm(p);

    Matrix lu = p;
    Vector x(q.begin(), q.end());
    double min_pivot = std::numeric_limits<double>::infinity();
    double max_pivot = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t piv = k;
        for (std::size_t i = k + 1; i < n; ++i)
            if (std::abs(lu(i, k)) > std::abs(lu(piv, k))) piv = i;
        const double mag = std::abs(lu(piv, k));
        if (!(mag > singular_below)) return solve_augmented(p, q);
        min_pivot = std::min(min_pivot, mag);
        max_pivot = std::max(max_pivot, mag);
        if (piv != k) {
            for (std::size_t j = 0; j < n; ++j) std::swap(lu(k, j), lu(piv, j));
            std::swap(x[k], x[piv]);
        }
        for (std::size_t i = k + 1; i < n; ++i) {
            const double f = lu(i, k) / lu(k, k);
            lu(i, k) = f;
            if (f == 0.0) continue;
            for (std::size_t j = k + 1; j < n; ++j) lu(i, j) -= f * lu(k, j);
            x[i] -= f * x[k];
        }
    }
    for (std::size_t k = n; k-- > 0;) {
        double s = x[k];
        for (std::size_t j = k + 1; j < n; ++j) s -= lu(k, j) * x[j];
        x[k] = s / lu(k, k);
    }
    return {std::move(x), SolveMethod::direct, n == 0 ? 1.0 : min_pivot / max_pivot};
}

} // namespace znneig

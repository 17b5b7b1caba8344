#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "dense.hpp"
#include "errors.hpp"

namespace znneig {

/// Per-pair relative residual ||A x - lambda x||_2 / ||A||_F for z = [x; lambda].
inline double residual(const Matrix& a, std::span<const double> z) {
    const std::size_t n = a.rows();
    if (!a.square() || z.size() != n + 1) throw DimensionError("residual: shape mismatch");
    const double lambda = z[n];
    const auto x = z.first(n);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double r = -lambda * x[i];
        for (std::size_t j = 0; j < n; ++j) r += a(i, j) * x[j];
        s += r * r;
    }
    const double scale = fro_norm(a);
    return scale > 0.0 ? std::sqrt(s) / scale : std::sqrt(s);
}

/// Eigenvector estimates as the columns of an n x n matrix.
inline Matrix eigenvector_matrix(std::span<const Vector> zs) {
    const std::size_t n = zs.size();
    Matrix v(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        if (zs[j].size() != n + 1) throw DimensionError("eigenvector_matrix: shape mismatch");
        for (std::size_t i = 0; i < n; ++i) v(i, j) = zs[j][i];
    }
    return v;
}

/// Full-matrix relative residual ||A V - V D||_F / (||A||_F ||V||_F).
inline double full_matrix_residual(const Matrix& a, std::span<const Vector> zs) {
    const Matrix v = eigenvector_matrix(zs);
    Matrix r = a * v;
    for (std::size_t j = 0; j < zs.size(); ++j) {
        const double lambda = zs[j][zs.size()];
        for (std::size_t i = 0; i < v.rows(); ++i) r(i, j) -= lambda * v(i, j);
    }
    const double scale = fro_norm(a) * fro_norm(v);
    return scale > 0.0 ? fro_norm(r) / scale : fro_norm(r);
}

/// ||V^T V - I||_F.
inline double orth_deviation(const Matrix& v) {
    Matrix g = v.transpose() * v;
    for (std::size_t i = 0; i < g.rows() && i < g.cols(); ++i) g(i, i) -= 1.0;
    return fro_norm(g);
}

inline double orth_deviation(std::span<const Vector> zs) {
    return orth_deviation(eigenvector_matrix(zs));
}

} // namespace znneig

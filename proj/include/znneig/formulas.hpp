#pragma once

// Finite-difference rules: backward estimators for the input derivative and
// convergent look-ahead recursions for the eigendata vector. Coefficients are
// exact rationals; all order and consistency checks run in rational arithmetic.

#include <algorithm>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Eigenvalues>
#include <boost/rational.hpp>

#include "dense.hpp"
#include "errors.hpp"

namespace znneig {

using Rational = boost::rational<std::int64_t>;

inline double to_double(const Rational& r) {
    return static_cast<double>(r.numerator()) / static_cast<double>(r.denominator());
}

inline std::string to_string(const Rational& r) {
    if (r.denominator() == 1) return std::to_string(r.numerator());
    return std::to_string(r.numerator()) + "/" + std::to_string(r.denominator());
}

/// dA/dt at t_k ~ (sum_j coefficients[j] * A_{k-j}) / (denominator * tau).
struct BackwardFormula {
    std::string name;
    std::vector<Rational> coefficients;
    std::int64_t denominator = 1;
    int declared_order = 0;

    std::size_t taps() const noexcept { return coefficients.size(); }
};

/// z_{k+1} = derivative_weight * tau * zdot_k + sum_j state_weights[j] * z_{k-j}.
struct LookaheadRecursion {
    std::string name;
    std::vector<Rational> state_weights;
    Rational derivative_weight{1};
    /// Declared order of the recursion (one above its implied derivative rule).
    int declared_order = 0;
    /// True when the derivative weight was derived by complete_recursion rather than printed.
    bool reconstructed = false;

    std::size_t taps() const noexcept { return state_weights.size(); }
};

namespace detail {

inline Rational ipow(Rational base, int e) {
    Rational r{1};
    for (int i = 0; i < e; ++i) r *= base;
    return r;
}

inline constexpr int max_checked_degree = 16;

/// Largest p such that `exact(m)` holds for every m = 0..p; -1 if it fails at m = 0.
inline int exactness_degree(const std::function<bool(int)>& exact) {
    int p = -1;
    while (p + 1 <= max_checked_degree && exact(p + 1)) ++p;
    return p;
}

} // namespace detail

/// Degree of polynomial exactness of a backward derivative rule.
/// With t_k = 0 the rule must reproduce d/dt t^m = m * t^(m-1) at t = 0, i.e.
/// sum_j c_j (-j)^m = d * [m == 1].
inline int truncation_order(const BackwardFormula& f) {
    return detail::exactness_degree([&](int m) {
        Rational s{0};
        for (std::size_t j = 0; j < f.taps(); ++j)
            s += f.coefficients[j] * detail::ipow(Rational(-static_cast<std::int64_t>(j)), m);
        return s == (m == 1 ? Rational(f.denominator) : Rational(0));
    });
}

/// Degree of polynomial exactness of the derivative rule implied by a recursion,
/// zdot_k ~ (z_{k+1} - sum_j a_j z_{k-j}) / (c tau).
inline int derivative_order(const LookaheadRecursion& r) {
    return detail::exactness_degree([&](int m) {
        Rational s = detail::ipow(Rational(1), m);
        for (std::size_t j = 0; j < r.taps(); ++j)
            s -= r.state_weights[j] * detail::ipow(Rational(-static_cast<std::int64_t>(j)), m);
        return s == (m == 1 ? r.derivative_weight : Rational(0));
    });
}

/// Truncation order of the recursion itself: multiplying the derivative rule by
/// tau raises its order by one.
inline int truncation_order(const LookaheadRecursion& r) { return derivative_order(r) + 1; }

/// Completes a recursion from its state weights. The derivative weight is forced by
/// first-order consistency: c = 1 + sum_j j * a_j. Requires sum_j a_j = 1 exactly.
inline LookaheadRecursion complete_recursion(std::string name, std::vector<Rational> weights) {
    if (weights.empty()) throw FormulaError("complete_recursion: no state weights");
    Rational sum{0}, moment{0};
    for (std::size_t j = 0; j < weights.size(); ++j) {
        sum += weights[j];
        moment += Rational(static_cast<std::int64_t>(j)) * weights[j];
    }
    if (sum != Rational(1))
        throw FormulaError("complete_recursion: state weights sum to " + to_string(sum) +
                           ", not 1");
    LookaheadRecursion r{std::move(name), std::move(weights), Rational(1) + moment, 0, true};
    r.declared_order = truncation_order(r);
    return r;
}

/// Characteristic polynomial rho^s - sum_j a_j rho^(s-1-j), highest degree first.
inline std::vector<Rational> characteristic_polynomial(const LookaheadRecursion& r) {
    std::vector<Rational> poly{Rational(1)};
    for (const auto& a : r.state_weights) poly.push_back(-a);
    return poly;
}

struct ZeroStability {
    bool stable = false;
    bool simple_unit_root = false;
    /// Moduli of all characteristic roots, largest first.
    std::vector<double> root_moduli;
};

namespace detail {

inline Rational eval_poly(std::span<const Rational> poly, const Rational& x) {
    Rational v{0};
    for (const auto& c : poly) v = v * x + c;
    return v;
}

inline std::vector<double> root_moduli(std::span<const Rational> poly) {
    const std::size_t deg = poly.size() - 1;
    std::vector<double> out;
    if (deg == 0) return out;
    Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(deg),
                                                      static_cast<Eigen::Index>(deg));
    const double lead = to_double(poly[0]);
    for (std::size_t j = 0; j < deg; ++j)
        companion(0, static_cast<Eigen::Index>(j)) = -to_double(poly[j + 1]) / lead;
    for (std::size_t i = 1; i < deg; ++i)
        companion(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i - 1)) = 1.0;
    Eigen::EigenSolver<Eigen::MatrixXd> es(companion, false);
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
        out.push_back(std::abs(es.eigenvalues()[i]));
    return out;
}

} // namespace detail

/// Zero stability of a recursion: exactly one characteristic root at 1, and that
/// root simple, with every other root strictly inside the unit circle.
///
/// When the weights sum to one, rho = 1 is an exact root; it is divided out in
/// rational arithmetic and its multiplicity decided exactly. The remaining roots
/// come from the eigenvalues of the deflated polynomial's companion matrix.
inline ZeroStability check_zero_stability(const LookaheadRecursion& r) {
    constexpr double tol = 1e-10;
    const auto poly = characteristic_polynomial(r);
    ZeroStability out;

    if (detail::eval_poly(poly, Rational(1)) != Rational(0)) {
        out.root_moduli = detail::root_moduli(poly);
        int near_unit = 0;
        bool inside = true;
        for (double m : out.root_moduli) {
            if (std::abs(m - 1.0) <= tol) ++near_unit;
            else if (m >= 1.0 - tol) inside = false;
        }
        out.simple_unit_root = near_unit == 1;
        out.stable = near_unit == 1 && inside;
    } else {
        // Synthetic division by (rho - 1).
        std::vector<Rational> quotient;
        Rational carry{0};
        for (std::size_t i = 0; i + 1 < poly.size(); ++i) {
            carry = carry + poly[i];
            quotient.push_back(carry);
        }
        out.simple_unit_root = detail::eval_poly(quotient, Rational(1)) != Rational(0);
        out.root_moduli = detail::root_moduli(quotient);
        bool inside = true;
        for (double m : out.root_moduli)
            if (m >= 1.0 - tol) inside = false;
        out.root_moduli.push_back(1.0);
        out.stable = out.simple_unit_root && inside;
    }
    std::sort(out.root_moduli.begin(), out.root_moduli.end(), std::greater<>());
    return out;
}

namespace detail {

inline bool annihilates_constants(const BackwardFormula& f) {
    Rational sum{0};
    for (const auto& c : f.coefficients) sum += c;
    return sum == Rational(0);
}

} // namespace detail

/// (sum_j c_j H_j) / (d tau) over a newest-first history.
inline Matrix derivative_estimate(const BackwardFormula& f, std::span<const Matrix> history,
                                  double tau) {
    if (!(tau > 0.0)) throw ConfigError("derivative_estimate: tau must be positive");
    if (history.size() < f.taps())
        throw ConfigError("derivative_estimate: history shorter than " + f.name + " tap count");
    // The coefficients sum to zero, so sum_j c_j H_j = sum_{j>0} c_j (H_j - H_0); the
    // differenced form is exactly zero on constant data.
    const bool differenced = detail::annihilates_constants(f);
    const Matrix& h0 = history[0];
    Matrix out(h0.rows(), h0.cols());
    for (std::size_t j = differenced ? 1 : 0; j < f.taps(); ++j) {
        const Matrix& h = history[j];
        if (h.rows() != out.rows() || h.cols() != out.cols())
            throw DimensionError("derivative_estimate: history shapes differ");
        const double c = to_double(f.coefficients[j]);
        auto dst = out.data();
        auto src = h.data();
        auto base = h0.data();
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += c * (differenced ? src[k] - base[k] : src[k]);
    }
    return out * (1.0 / (static_cast<double>(f.denominator) * tau));
}

inline Vector derivative_estimate(const BackwardFormula& f, std::span<const Vector> history,
                                  double tau) {
    if (!(tau > 0.0)) throw ConfigError("derivative_estimate: tau must be positive");
    if (history.size() < f.taps())
        throw ConfigError("derivative_estimate: history shorter than " + f.name + " tap count");
    const bool differenced = detail::annihilates_constants(f);
    const Vector& h0 = history[0];
    Vector out(h0.size(), 0.0);
    for (std::size_t j = differenced ? 1 : 0; j < f.taps(); ++j) {
        if (history[j].size() != out.size())
            throw DimensionError("derivative_estimate: history lengths differ");
        const double c = to_double(f.coefficients[j]);
        for (std::size_t k = 0; k < out.size(); ++k)
            out[k] += c * (differenced ? history[j][k] - h0[k] : history[j][k]);
    }
    const double scale = 1.0 / (static_cast<double>(f.denominator) * tau);
    for (double& x : out) x *= scale;
    return out;
}

/// A derivative formula paired with a recursion, as used by the solver.
struct FormulaPair {
    std::string name;
    LookaheadRecursion recursion;
    BackwardFormula derivative;

    /// Number of consecutive instants of static eigendata needed before recursing.
    std::size_t startup_length() const {
        return std::max(recursion.taps(), derivative.taps());
    }
};

struct Catalog {
    std::vector<BackwardFormula> backward;
    std::vector<LookaheadRecursion> recursions;
    std::vector<FormulaPair> presets;

    const BackwardFormula& backward_formula(std::string_view name) const {
        for (const auto& f : backward)
            if (f.name == name) return f;
        throw ConfigError("unknown backward formula '" + std::string(name) + "'");
    }
    const LookaheadRecursion& recursion(std::string_view name) const {
        for (const auto& r : recursions)
            if (r.name == name) return r;
        throw ConfigError("unknown recursion '" + std::string(name) + "'");
    }
    const FormulaPair& preset(std::string_view name) const {
        for (const auto& p : presets)
            if (p.name == name) return p;
        throw ConfigError("unknown preset '" + std::string(name) + "' (expected ifd5, ifd6 or ifd7)");
    }
};

namespace detail {

inline std::vector<Rational> over(std::int64_t den, std::initializer_list<std::int64_t> nums) {
    std::vector<Rational> out;
    for (auto n : nums) out.emplace_back(n, den);
    return out;
}

inline Catalog build_catalog() {
    Catalog c;
    c.backward.push_back({"BDF4pt", over(1, {11, -18, 9, -2}), 6, 3});
    c.backward.push_back({"BDF5pt", over(1, {25, -48, 36, -16, 3}), 12, 4});

    // 5-IFD: zdot_k = (8 z_{k+1} + z_k - 6 z_{k-1} - 5 z_{k-2} + 2 z_{k-3}) / (18 tau).
    c.recursions.push_back({"IFD5", over(8, {-1, 6, 5, -2}), Rational(9, 4), 4, false});

    // 6-IFD: zdot_k = (13/24 z_{k+1} - 1/4 z_k - 1/12 z_{k-1} - 1/6 z_{k-2}
    //                  - 1/8 z_{k-3} + 1/12 z_{k-4}) / tau, solved for z_{k+1}.
    c.recursions.push_back({"IFD6", over(13, {6, 2, 4, 3, -2}), Rational(24, 13), 4, false});

    // 7-IFD: the derivative weight is completed from consistency.
    c.recursions.push_back(complete_recursion("IFD7", over(237, {-80, 182, 206, -1, -110, 40})));

    c.presets.push_back({"ifd5", c.recursion("IFD5"), c.backward_formula("BDF4pt")});
    c.presets.push_back({"ifd6", c.recursion("IFD6"), c.backward_formula("BDF5pt")});
    c.presets.push_back({"ifd7", c.recursion("IFD7"), c.backward_formula("BDF5pt")});
    return c;
}

} // namespace detail

inline const Catalog& catalog() {
    static const Catalog c = detail::build_catalog();
    return c;
}

} // namespace znneig

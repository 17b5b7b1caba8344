#pragma once

#include <cstdio>
#include <fstream>
#include <ostream>
#include <string>

#include "errors.hpp"
#include "harness.hpp"

namespace znneig {

namespace detail {

inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace detail

/// One row per (instant, pair): t, pair, lambda, x_1..x_n, residual, solve_method, event.
/// Pairs are numbered from 1; static eigendata has solve_method "none".
inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj, std::size_t n) {
    os << "t,pair,lambda";
    for (std::size_t i = 1; i <= n; ++i) os << ",x_" << i;
    os << ",residual,solve_method,event\n";
    for (const auto& ev : traj.events) {
        for (std::size_t p = 0; p < ev.z.size(); ++p) {
            const auto& z = ev.z[p];
            os << detail::fmt17(ev.t) << ',' << (p + 1) << ',' << detail::fmt17(z[n]);
            for (std::size_t i = 0; i < n; ++i) os << ',' << detail::fmt17(z[i]);
            os << ',' << detail::fmt17(ev.residual[p]) << ',';
            const auto& m = p < ev.method.size() ? ev.method[p] : std::nullopt;
            os << (m ? to_string(*m) : std::string_view("none")) << ',' << to_string(ev.kind) << '\n';
        }
    }
}

inline void write_trajectory_csv(const std::string& path, const Trajectory& traj, std::size_t n) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open " + path + " for writing");
    write_trajectory_csv(os, traj, n);
    if (!os) throw Error("failed writing " + path);
}

} // namespace znneig

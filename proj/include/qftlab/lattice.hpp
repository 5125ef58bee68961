#pragma once

// Finite-difference solver for the sourced Klein-Gordon equation with a
// rotationally symmetric source, in the radial variable u = r Phi:
//
//   u_tt = u_rr - m^2 u - r g j(r, t),   u(0, t) = 0,   u(r_max, t) = 0.
//
// The source enters with the sign for which the solution equals the
// retarded field g Dt_R computed by source_dynamics. Explicit leapfrog in
// time, second-order centred differences in r.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>
#include <vector>

#include "qftlab/core.hpp"
#include "qftlab/source.hpp"
#include "qftlab/source_dynamics.hpp"

namespace qftlab {

/// Grid with the CFL factor taken from CFL_OVERRIDE when set.
inline GridSpec grid_from_env(double r_max, double t_max, double dr)
{
    double cfl = 0.9;
    if (const char* env = std::getenv("CFL_OVERRIDE")) {
        char* end = nullptr;
        const double v = std::strtod(env, &end);
        if (end == env || !std::isfinite(v) || v <= 0.0) throw InvalidArgument("CFL_OVERRIDE: not a positive number");
        cfl = v;
    }
    return GridSpec{r_max, t_max, dr, cfl * dr, cfl};
}

struct LatticeHistory {
    GridSpec grid;
    double mass = 0.0;
    double coupling = 0.0;
    Vec3 center{0.0, 0.0, 0.0};
    double dt = 0.0;                    ///< effective step, t_max / steps
    int steps = 0;
    int stride = 1;                     ///< time steps between stored samples
    std::vector<double> r;              ///< nodes 0, dr, ..., r_max
    std::vector<double> t;              ///< stored sample times
    std::vector<std::vector<double>> phi;  ///< phi[i][j] at (t[i], r[j])
    std::vector<double> energy_t;       ///< times of the energy series (every step)
    std::vector<double> energy;         ///< classical field energy

    double max_abs() const
    {
        double m = 0.0;
        for (const auto& row : phi)
            for (double v : row) m = std::max(m, std::abs(v));
        return m;
    }

    /// Index of a stored sample time; throws when t is not one of them.
    std::size_t time_index(double time) const
    {
        for (std::size_t i = 0; i < t.size(); ++i)
            if (std::abs(t[i] - time) <= 1e-9 * std::max(1.0, std::abs(time))) return i;
        throw InvalidArgument("lattice: t = " + std::to_string(time) + " is not a stored sample time");
    }

    /// Phi at a stored time, linear in r between nodes.
    double value(double time, double radius) const
    {
        const auto& row = phi[time_index(time)];
        if (radius < 0.0 || radius > r.back()) throw InvalidArgument("lattice: r outside grid");
        const double x = radius / grid.dr;
        const std::size_t j = std::min(static_cast<std::size_t>(x), r.size() - 2);
        const double w = x - static_cast<double>(j);
        return (1.0 - w) * row[j] + w * row[j + 1];
    }
};

struct SolveOptions {
    int stride = 0;           ///< 0: choose so that at most ~400 samples are kept
    bool check_boundary = true;
};

namespace detail {

inline double support_extent(const SourceModel& src)
{
    double rm = 0.0;
    for (const auto& c : src.components()) rm = std::max(rm, rho_max(c));
    return rm;
}

inline double support_start(const SourceModel& src)
{
    double lo = 1e300;
    for (const auto& c : src.components()) lo = std::min(lo, time_window(c).first);
    return lo;
}

} // namespace detail

/// Leapfrog solve of the radial Klein-Gordon equation driven by g j.
inline LatticeHistory solve_radial_kg(const SourceModel& src, const FieldParams& fp, const GridSpec& grid,
                                      SolveOptions opt = {})
{
    grid.validate();
    detail::require(src.rotationally_symmetric(), "solve_radial_kg: source must be rotationally symmetric");
    const double extent = detail::support_extent(src);
    const double t_lo = detail::support_start(src);
    if (opt.check_boundary && grid.r_max <= (grid.t_max - std::max(0.0, t_lo)) + extent + 2.0 * grid.dr)
        throw LatticeError("solve_radial_kg: r_max too small, signals would reach the outer boundary");

    LatticeHistory h;
    h.grid = grid;
    h.mass = fp.mass;
    h.coupling = fp.coupling;
    h.center = spatial_center(src.components().front());
    h.steps = static_cast<int>(std::ceil(grid.t_max / grid.dt_step - 1e-9));
    h.dt = grid.t_max / h.steps;
    h.stride = opt.stride > 0 ? opt.stride : std::max(1, h.steps / 400);
    const int nr = static_cast<int>(std::llround(grid.r_max / grid.dr)) + 1;
    h.r.resize(nr);
    for (int j = 0; j < nr; ++j) h.r[j] = j * grid.dr;

    const double dr = grid.dr;
    const double dt = h.dt;
    const double m2 = fp.mass * fp.mass;
    const double lam2 = (dt / dr) * (dt / dr);
    const Vec3 c = h.center;

    // r g j(r, t) at the nodes; zero outside the support
    std::vector<double> force(nr, 0.0);
    auto fill_force = [&](double t) {
        for (int j = 0; j < nr; ++j) {
            const double r = h.r[j];
            force[j] = r > extent ? 0.0 : r * fp.coupling * src.eval(Event{t, c + Vec3{r, 0.0, 0.0}});
        }
    };

    std::vector<double> um(nr, 0.0), u(nr, 0.0), up(nr, 0.0);
    auto to_phi = [&](const std::vector<double>& uu) {
        std::vector<double> p(nr);
        for (int j = 1; j < nr; ++j) p[j] = uu[j] / h.r[j];
        p[0] = nr > 2 ? (8.0 * uu[1] - uu[2]) / (6.0 * dr) : uu[1] / dr;
        return p;
    };
    // 2 pi int (u_t^2 + u_r^2 + m^2 u^2) dr at the level `mid`
    auto energy = [&](const std::vector<double>& ut, const std::vector<double>& mid) {
        double e = 0.0;
        for (int j = 0; j < nr; ++j) {
            const double w = (j == 0 || j == nr - 1) ? 0.5 : 1.0;
            e += w * (ut[j] * ut[j] + m2 * mid[j] * mid[j]);
        }
        for (int j = 0; j + 1 < nr; ++j) {
            const double ur = (mid[j + 1] - mid[j]) / dr;
            e += ur * ur;
        }
        return 2.0 * pi * e * dr;
    };
    std::vector<double> ut(nr, 0.0);

    h.t.push_back(0.0);
    h.phi.push_back(to_phi(u));
    // u(0) = u_t(0) = 0 and j(., 0) = 0 give u(dt) = 0 to second order
    std::fill(um.begin(), um.end(), 0.0);
    for (int n = 0; n < h.steps; ++n) {
        const double t = n * dt;
        if (n == 0) {
            fill_force(0.0);
            for (int j = 1; j + 1 < nr; ++j) up[j] = -0.5 * dt * dt * force[j];
        } else {
            fill_force(t);
            for (int j = 1; j + 1 < nr; ++j)
                up[j] = 2.0 * u[j] - um[j] + lam2 * (u[j + 1] - 2.0 * u[j] + u[j - 1]) - dt * dt * (m2 * u[j] + force[j]);
        }
        up[0] = 0.0;
        up[nr - 1] = 0.0;
        if (n >= 1) {
            for (int j = 0; j < nr; ++j) ut[j] = (up[j] - um[j]) / (2.0 * dt);
            h.energy_t.push_back(t);
            h.energy.push_back(energy(ut, u));
        }
        std::swap(um, u);
        std::swap(u, up);
        if ((n + 1) % h.stride == 0 || n + 1 == h.steps) {
            h.t.push_back((n + 1) * dt);
            h.phi.push_back(to_phi(u));
        }
    }
    if (h.steps >= 2) {
        // closing level: one-sided second-order u_t from u^N, u^{N-1}, u^{N-2}
        for (int j = 0; j < nr; ++j) ut[j] = (3.0 * u[j] - 4.0 * um[j] + up[j]) / (2.0 * dt);
        h.energy_t.push_back(grid.t_max);
        h.energy.push_back(energy(ut, u));
    }
    if (opt.check_boundary) {
        const double peak = h.max_abs();
        const auto& last = h.phi.back();
        for (int j = nr - 3; j < nr; ++j)
            if (peak > 0.0 && std::abs(last[j]) > 1e-8 * peak)
                throw LatticeError("solve_radial_kg: boundary contamination at r_max");
    }
    return h;
}

/// Classical field energy at time t, linear between steps of the energy series.
inline double lattice_energy(const LatticeHistory& h, double t)
{
    if (t <= 0.0) return 0.0;
    const auto& ts = h.energy_t;
    if (ts.empty() || t > ts.back() + 1e-9 * std::max(1.0, t))
        throw InvalidArgument("lattice_energy: t = " + std::to_string(t) + " outside the run");
    // u vanishes through the first step since j(., 0) = 0
    if (t < ts.front()) return 0.0;
    const auto it = std::lower_bound(ts.begin(), ts.end(), t);
    if (it == ts.end()) return h.energy.back();
    const std::size_t i = static_cast<std::size_t>(it - ts.begin());
    if (i == 0 || *it == t) return h.energy[i];
    const double w = (t - ts[i - 1]) / (ts[i] - ts[i - 1]);
    return (1.0 - w) * h.energy[i - 1] + w * h.energy[i];
}

/// Maximum relative energy change over [t_from, t_from + span].
inline double lattice_energy_drift(const LatticeHistory& h, double t_from, double span)
{
    double e0 = 0.0;
    bool found = false;
    double drift = 0.0;
    for (std::size_t i = 0; i < h.energy_t.size(); ++i) {
        const double t = h.energy_t[i];
        if (t < t_from - 1e-12) continue;
        if (t > t_from + span + 1e-12) break;
        if (!found) {
            e0 = h.energy[i];
            found = true;
            continue;
        }
        drift = std::max(drift, std::abs(h.energy[i] - e0));
    }
    if (!found) throw InvalidArgument("lattice_energy_drift: window outside the run");
    if (h.energy_t.back() < t_from + span - 2.0 * h.dt)
        throw InvalidArgument("lattice_energy_drift: run shorter than the requested window");
    return e0 > 0.0 ? drift / e0 : drift;
}

struct CausalViolation {
    double t;
    double r;
    double phi;
};

struct CausalReport {
    std::vector<CausalViolation> violations;
    std::size_t checked = 0;
    double max_abs = 0.0;       ///< over the whole history
    double max_outside = 0.0;   ///< over the checked (spacelike) nodes
};

/// Checks |Phi| <= tol max|Phi| at nodes spacelike to the whole support (margin 2 dr).
inline CausalReport causal_support_scan(const LatticeHistory& h, const SourceModel& src, double tol)
{
    detail::require(tol > 0.0, "causal_support_scan: tol must be positive");
    CausalReport rep;
    rep.max_abs = h.max_abs();
    const double t_lo = detail::support_start(src);
    const double extent = detail::support_extent(src);
    const double margin = 2.0 * h.grid.dr;
    for (std::size_t i = 0; i < h.t.size(); ++i) {
        const double t = h.t[i];
        for (std::size_t j = 0; j < h.r.size(); ++j) {
            const double r = h.r[j];
            if (!(t - t_lo < (r - extent) - margin)) continue;
            ++rep.checked;
            const double v = std::abs(h.phi[i][j]);
            rep.max_outside = std::max(rep.max_outside, v);
            if (v > tol * rep.max_abs) rep.violations.push_back({t, r, h.phi[i][j]});
        }
    }
    return rep;
}

/// Massless front: radius of the largest |u| = |r Phi| at a stored time.
inline double locate_front(const LatticeHistory& h, double t)
{
    const auto& row = h.phi[h.time_index(t)];
    std::size_t best = 0;
    double peak = -1.0;
    for (std::size_t j = 0; j < row.size(); ++j) {
        const double u = std::abs(row[j] * h.r[j]);
        if (u > peak) {
            peak = u;
            best = j;
        }
    }
    return h.r[best];
}

/// Observed order from three runs with dr, dr/2, dr/4 at the common nodes of a stored time.
inline double convergence_order(const LatticeHistory& coarse, const LatticeHistory& mid, const LatticeHistory& fine,
                                double t)
{
    const auto& a = coarse.phi[coarse.time_index(t)];
    const auto& b = mid.phi[mid.time_index(t)];
    const auto& c = fine.phi[fine.time_index(t)];
    double e1 = 0.0;
    double e2 = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        if (2 * j >= b.size() || 4 * j >= c.size()) break;
        e1 = std::max(e1, std::abs(a[j] - b[2 * j]));
        e2 = std::max(e2, std::abs(b[2 * j] - c[4 * j]));
    }
    if (!(e2 > 0.0)) throw InvalidArgument("convergence_order: runs identical at the finest level");
    return std::log2(e1 / e2);
}

/// Stored history as a RetardedField (derivatives by centred differences).
inline RetardedField to_retarded_field(const LatticeHistory& h)
{
    const std::size_t nt = h.t.size();
    const std::size_t nr = h.r.size();
    std::vector<double> phi, pt, pr;
    phi.reserve(nt * nr);
    for (std::size_t i = 0; i < nt; ++i)
        for (std::size_t j = 0; j < nr; ++j) {
            phi.push_back(h.phi[i][j]);
            const std::size_t i0 = i == 0 ? 0 : i - 1;
            const std::size_t i1 = i + 1 == nt ? i : i + 1;
            pt.push_back(i1 > i0 ? (h.phi[i1][j] - h.phi[i0][j]) / (h.t[i1] - h.t[i0]) : 0.0);
            const std::size_t j0 = j == 0 ? 0 : j - 1;
            const std::size_t j1 = j + 1 == nr ? j : j + 1;
            pr.push_back(j == 0 ? 0.0 : (h.phi[i][j1] - h.phi[i][j0]) / (h.r[j1] - h.r[j0]));
        }
    const double err = h.grid.dr * h.grid.dr;
    return RetardedField(Backend::lattice, h.t, h.r, std::move(phi), std::move(pt), std::move(pr), err);
}

/// Field energy of the source part from a lattice run, at t <= grid.t_max.
inline double source_energy(double t, const SourceModel& src, const FieldParams& fp, const GridSpec& grid)
{
    if (t <= detail::support_start(src)) return 0.0;
    if (t > grid.t_max) throw InvalidArgument("source_energy: t beyond the grid's t_max");
    return lattice_energy(solve_radial_kg(src, fp, grid), t);
}

} // namespace qftlab

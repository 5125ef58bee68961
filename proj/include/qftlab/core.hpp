#pragma once

// Shared domain types: spacetime events and separations, field parameters,
// quadrature and lattice configuration. Natural units, hbar = c = 1.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "qftlab/errors.hpp"

namespace qftlab {

using Vec3 = std::array<double, 3>;

inline double norm(const Vec3& v) { return std::hypot(v[0], v[1], v[2]); }

inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }

inline bool all_finite(const Vec3& v)
{
    return std::isfinite(v[0]) && std::isfinite(v[1]) && std::isfinite(v[2]);
}

/// A spacetime point (t, x).
struct Event {
    double t = 0.0;
    Vec3 x{0.0, 0.0, 0.0};

    /// Radial form (t, r): the point sits on the positive x axis.
    static Event radial(double t, double r)
    {
        detail::require(r >= 0.0, "Event::radial: r must be non-negative");
        return Event{t, {r, 0.0, 0.0}};
    }

    bool finite() const { return std::isfinite(t) && all_finite(x); }
};

enum class IntervalClass { timelike, spacelike, lightlike };

inline const char* to_string(IntervalClass c)
{
    switch (c) {
    case IntervalClass::timelike: return "timelike";
    case IntervalClass::spacelike: return "spacelike";
    case IntervalClass::lightlike: return "lightlike";
    }
    return "?";
}

/// Default lightcone tolerance on s2 for a given time separation.
inline double default_cone_tol(double dt) { return 1e-9 * std::max(1.0, dt * dt); }

/// Separation a - b with its invariant interval s2 = dt^2 - |dx|^2.
class FourSep {
public:
    FourSep() = default;

    FourSep(double dt, const Vec3& dx, double cone_tol = -1.0) : dt_(dt), dx_(dx)
    {
        if (!std::isfinite(dt) || !all_finite(dx))
            throw InvalidArgument("FourSep: non-finite component");
        cone_tol_ = cone_tol < 0.0 ? default_cone_tol(dt) : cone_tol;
        const double r = norm(dx_);
        // (dt - r)(dt + r) keeps s2 exact to rounding near the cone
        s2_ = (std::abs(dt_) - r) * (std::abs(dt_) + r);
        if (std::abs(s2_) <= cone_tol_) cls_ = IntervalClass::lightlike;
        else cls_ = s2_ > 0.0 ? IntervalClass::timelike : IntervalClass::spacelike;
    }

    /// Separation with the spatial part along x.
    static FourSep radial(double dt, double r, double cone_tol = -1.0)
    {
        detail::require(r >= 0.0, "FourSep::radial: r must be non-negative");
        return FourSep(dt, Vec3{r, 0.0, 0.0}, cone_tol);
    }

    double dt() const { return dt_; }
    const Vec3& dx() const { return dx_; }
    double r() const { return norm(dx_); }
    double s2() const { return s2_; }
    double cone_tol() const { return cone_tol_; }
    IntervalClass cls() const { return cls_; }

    FourSep operator-() const { return FourSep(-dt_, Vec3{-dx_[0], -dx_[1], -dx_[2]}, cone_tol_); }

private:
    double dt_ = 0.0;
    Vec3 dx_{0.0, 0.0, 0.0};
    double s2_ = 0.0;
    double cone_tol_ = 0.0;
    IntervalClass cls_ = IntervalClass::lightlike;
};

/// Separation a - b, classified with tolerance cone_tol on s2 (negative: default).
inline FourSep interval_classify(const Event& a, const Event& b, double cone_tol = -1.0)
{
    if (!a.finite() || !b.finite()) throw InvalidArgument("interval_classify: non-finite event");
    return FourSep(a.t - b.t, a.x - b.x, cone_tol);
}

/// Mass and source coupling of the scalar field.
struct FieldParams {
    double mass = 1.0;
    double coupling = 1.0;

    FieldParams() = default;
    FieldParams(double m, double g) : mass(m), coupling(g)
    {
        detail::require(std::isfinite(m) && m >= 0.0, "FieldParams: mass must be finite and >= 0");
        detail::require(std::isfinite(g), "FieldParams: coupling must be finite");
    }

    double omega(double k) const { return std::sqrt(k * k + mass * mass); }
};

/// Numerical settings for the regularized mode integrals.
///
/// epsilon_list holds the Abel regulators e^{-eps k} as dimensionless
/// fractions of the separation's distance to the nearest lightcone
/// singularity; the regulated integrals are extrapolated to eps -> 0.
struct QuadratureConfig {
    double k_max = 0.0;  ///< finite-interval cutoff; 0 selects it per evaluation
    int n_k = 512;       ///< minimum Gauss-Legendre nodes on [0, k_max]
    std::vector<double> epsilon_list{4e-4, 2e-4, 1e-4};
    int extrapolation_order = 2;
    double abs_tol = 1e-12;
    double rel_tol = 1e-6;

    void validate() const
    {
        detail::require(std::isfinite(k_max) && k_max >= 0.0, "QuadratureConfig: k_max must be >= 0");
        detail::require(n_k >= 2, "QuadratureConfig: n_k must be >= 2");
        detail::require(epsilon_list.size() >= 2, "QuadratureConfig: need at least two regulators");
        for (std::size_t i = 0; i < epsilon_list.size(); ++i) {
            detail::require(epsilon_list[i] > 0.0, "QuadratureConfig: regulators must be positive");
            if (i > 0)
                detail::require(epsilon_list[i] < epsilon_list[i - 1],
                                "QuadratureConfig: regulators must be strictly decreasing");
        }
        detail::require(extrapolation_order >= 1 &&
                            extrapolation_order < static_cast<int>(epsilon_list.size()),
                        "QuadratureConfig: extrapolation_order must be in [1, #regulators)");
        detail::require(abs_tol > 0.0 && rel_tol > 0.0, "QuadratureConfig: tolerances must be positive");
    }
};

/// Radial lattice for the finite-difference oracle.
struct GridSpec {
    double r_max = 20.0;
    double t_max = 10.0;
    double dr = 0.01;
    double dt_step = 0.009;
    double cfl = 0.9;

    static GridSpec with_cfl(double r_max, double t_max, double dr, double cfl = 0.9)
    {
        return GridSpec{r_max, t_max, dr, cfl * dr, cfl};
    }

    void validate() const
    {
        detail::require(r_max > 0.0 && t_max > 0.0 && dr > 0.0 && dt_step > 0.0,
                        "GridSpec: sizes and steps must be positive");
        detail::require(dr < r_max, "GridSpec: dr must be smaller than r_max");
        if (!(cfl > 0.0 && cfl <= 1.0)) throw LatticeError("GridSpec: CFL factor must lie in (0, 1]");
        if (dt_step > cfl * dr * (1.0 + 1e-12))
            throw LatticeError("GridSpec: CFL violated (dt_step > cfl * dr)");
    }
};

constexpr double pi = std::numbers::pi;

} // namespace qftlab

#pragma once

// Newton-Wigner localization: the kernel relating covariant and NW position
// states, NW wavefunctions, overlaps of NW states, and the energy density on
// the covariantly "localized" state Phi(y)|0>.
//
//   K_NW(r)   = 1/(2 pi^2 r) int dk k sqrt(2 omega) sin(kr)
//   psi_NW    = 1/(2 pi^2 r) int dk k / sqrt(2 omega) sin(kr) e^{-i omega t}
//   <X|Y>     = (2 pi)^{-3} int d^3k e^{ik.(x-y)} e^{-i omega t} = 2i dW/dt

#include <cmath>
#include <complex>

#include "qftlab/core.hpp"
#include "qftlab/propagators.hpp"
#include "qftlab/quadrature.hpp"

namespace qftlab {

struct NWKernelValue {
    double value = 0.0;
    std::vector<double> eps;
    std::vector<cplx> per_eps;
    double residual = 0.0;
};

/// Normalized Gaussian test function (2 pi s^2)^{-3/2} exp(-|x-c|^2 / 2 s^2).
struct SmearingFunction {
    double sigma = 1.0;
    Vec3 center{0.0, 0.0, 0.0};

    SmearingFunction() = default;
    SmearingFunction(double s, Vec3 c = {0.0, 0.0, 0.0}) : sigma(s), center(c)
    {
        detail::require(std::isfinite(s) && s > 0.0, "SmearingFunction: width must be positive");
        detail::require(all_finite(c), "SmearingFunction: non-finite centre");
    }

    double operator()(const Vec3& x) const
    {
        const double d = norm(x - center);
        return std::pow(2.0 * pi * sigma * sigma, -1.5) * std::exp(-0.5 * d * d / (sigma * sigma));
    }
};

namespace detail {

inline void check_residual(double residual, double magnitude, const QuadratureConfig& q, const char* what)
{
    if (!(residual <= q.rel_tol * magnitude + q.abs_tol) || !std::isfinite(magnitude))
        throw ConvergenceError(std::string(what) + ": regulator extrapolation residual " +
                               std::to_string(residual) + " above tolerance");
}

} // namespace detail

/// Regularized NW kernel K_NW(r).
inline NWKernelValue nw_kernel(double r, const FieldParams& fp, const QuadratureConfig& q)
{
    detail::require(r > 0.0 && std::isfinite(r), "nw_kernel: r must be positive");
    auto spectral = [](cplx k, cplx om) { return k * std::sqrt(2.0 * om); };
    const auto e = quad::mode_integral(spectral, quad::SpatialFactor::sinc, r, 0.0, fp.mass, q);
    const double f = 1.0 / (2.0 * pi * pi);
    NWKernelValue v;
    v.value = f * e.value.real();
    v.eps = e.eps;
    for (const auto& x : e.per_eps) v.per_eps.push_back(f * x);
    v.residual = f * e.residual;
    detail::check_residual(v.residual, std::abs(v.value), q, "nw_kernel");
    return v;
}

/// NW wavefunction of a particle localized at y, evaluated at x; sep = x - y.
inline WightmanValue nw_wavefunction(const FourSep& sep, const FieldParams& fp, const QuadratureConfig& q)
{
    detail::require(sep.r() > 0.0 || sep.dt() != 0.0, "nw_wavefunction: coincident points");
    auto spectral = [](cplx k, cplx om) { return k / std::sqrt(2.0 * om); };
    const auto e = quad::mode_integral(spectral, quad::SpatialFactor::sinc, sep.r(), sep.dt(), fp.mass, q);
    auto w = detail::normalized(e, 1.0 / (2.0 * pi * pi));
    detail::check_residual(w.residual, std::abs(w.value), q, "nw_wavefunction");
    return w;
}

namespace detail {

// (1/2 pi^2) int_0^kmax dk k^2 [sqrt(2w)^2 / 2w] e^{-s k^2/2} sinc(kd) e^{-i w t}
inline cplx smeared_overlap(const SmearingFunction& f, const SmearingFunction& g, double t, const FieldParams& fp,
                            const QuadratureConfig& q)
{
    const double s = f.sigma * f.sigma + g.sigma * g.sigma;
    const double sig = std::sqrt(s);
    const double d = norm(f.center - g.center);
    const double kmax = q.k_max > 0.0 ? q.k_max : 10.0 / sig;
    if (sig * kmax < 8.0)
        throw InvalidArgument("nw overlap: smearing width below the resolvable scale 8 / k_max");
    double width = 0.25 / sig;
    if (d > 0.0) width = std::min(width, pi / d);
    if (t != 0.0) width = std::min(width, pi / std::abs(t));
    const int panels = std::max(q.n_k / 16, static_cast<int>(std::ceil(kmax / width)));
    const double m = fp.mass;
    auto integrand = [&](double k) {
        const double om = std::sqrt(k * k + m * m);
        const double nw_norm = 2.0 * om / (2.0 * om);
        const double kd = k * d;
        const double sinc = kd < 1e-8 ? 1.0 - kd * kd / 6.0 : std::sin(kd) / kd;
        return k * k * nw_norm * std::exp(-0.5 * s * k * k) * sinc * std::exp(cplx{0.0, -om * t});
    };
    return quad::integrate<16>(integrand, 0.0, kmax, panels) / (2.0 * pi * pi);
}

} // namespace detail

/// Equal-time overlap of NW states smeared with f and g: int f(x) g(y) <X|Y> d^3x d^3y.
inline double nw_equal_time_overlap_smeared(const SmearingFunction& f, const SmearingFunction& g,
                                            const FieldParams& fp, const QuadratureConfig& q)
{
    return detail::smeared_overlap(f, g, 0.0, fp, q).real();
}

/// Smeared overlap of NW states at time separation dt.
inline cplx nw_unequal_time_overlap_smeared(const SmearingFunction& f, const SmearingFunction& g, double dt,
                                            const FieldParams& fp, const QuadratureConfig& q)
{
    detail::require(std::isfinite(dt), "nw_unequal_time_overlap_smeared: non-finite dt");
    return detail::smeared_overlap(f, g, dt, fp, q);
}

struct OverlapValue {
    cplx value{};
    double error = 0.0;   ///< |order-2 minus order-1 Richardson estimate|
    double step = 0.0;    ///< initial difference step
};

/// <X_NW, t | Y_NW, 0> = 2i dW/dt by Richardson-extrapolated central differences of W.
inline OverlapValue nw_unequal_time_overlap(const FourSep& sep, const FieldParams& fp, const QuadratureConfig& q,
                                            double h = 0.0)
{
    detail::require(sep.dt() > 0.0, "nw_unequal_time_overlap: requires dt > 0");
    detail::reject_cone(sep, "nw_unequal_time_overlap");
    const double r = sep.r();
    const double t = sep.dt();
    if (h <= 0.0) h = 1e-3 / std::max(fp.mass, 1.0);
    h = std::min({h, std::abs(t - r) / 8.0, t / 4.0});

    auto W = [&](double tt) { return wightman(FourSep::radial(tt, r), fp, q).value; };
    auto central = [&](double step) { return (W(t + step) - W(t - step)) / (2.0 * step); };
    const cplx d1 = central(h);
    const cplx d2 = central(0.5 * h);
    const cplx d4 = central(0.25 * h);
    const cplx r1 = (4.0 * d2 - d1) / 3.0;
    const cplx r2 = (4.0 * d4 - d2) / 3.0;
    const cplx best = (16.0 * r2 - r1) / 15.0;

    OverlapValue o;
    o.value = 2.0 * quad::I * best;
    o.error = 2.0 * std::abs(best - r2);
    o.step = h;
    if (!(o.error <= q.rel_tol * std::abs(o.value) + q.abs_tol))
        throw ConvergenceError("nw_unequal_time_overlap: finite-difference noise dominates (error " +
                               std::to_string(o.error) + ")");
    return o;
}

/// Vacuum second moments at a sharp momentum cutoff.
struct VacuumMoments {
    double cutoff = 0.0;
    double field = 0.0;  ///< <Phi^2>
    double dt = 0.0;     ///< <Phi_t^2>
    double grad = 0.0;   ///< <(d_i Phi)^2> for one Cartesian component
};

/// C = (1/4 pi^2) int_0^L k^2 / omega * {1, omega^2, k^2/3} dk, in closed form.
inline VacuumMoments vacuum_moments(double m, double cutoff)
{
    detail::require(std::isfinite(cutoff) && cutoff > m && cutoff > 0.0, "vacuum_moments: cutoff must exceed m");
    detail::require(m >= 0.0, "vacuum_moments: m must be >= 0");
    const double L = cutoff;
    const double W = std::sqrt(L * L + m * m);
    const double m2 = m * m;
    const double lg = m > 0.0 ? std::log((L + W) / m) : 0.0;
    // int k^2/w = (L W - m^2 ln((L+W)/m)) / 2
    const double i0 = 0.5 * (L * W - m2 * lg);
    // int k^2 w = L W^3 / 4 - m^2 L W / 8 - m^4 ln(...) / 8
    const double i1 = 0.25 * L * W * W * W - 0.125 * m2 * L * W - 0.125 * m2 * m2 * lg;
    // int k^4/w = L^3 W / 4 - 3 m^2 L W / 8 + 3 m^4 ln(...) / 8
    const double i2 = 0.25 * L * L * L * W - 0.375 * m2 * L * W + 0.375 * m2 * m2 * lg;
    const double f = 1.0 / (4.0 * pi * pi);
    return VacuumMoments{cutoff, f * i0, f * i1, f * i2 / 3.0};
}

/// Energy density at x on the state Phi(y)|0>.
struct LocalizedEnergy {
    double raw = 0.0;
    double vacuum_part = 0.0;   ///< <Phi(y)^2> <H(x)>, both at cutoff L
    double subtracted = 0.0;    ///< m^2 |W|^2 + |dW/dt|^2 + |grad W|^2
};

inline LocalizedEnergy energy_density_on_localized_state(const Event& x, const Event& y, const FieldParams& fp,
                                                         double cutoff, const QuadratureConfig& q)
{
    const FourSep sep = interval_classify(x, y);
    const double r = sep.r();
    const double scale = r > 0.0 ? r : std::abs(sep.dt());
    detail::require(scale > 0.0, "energy_density_on_localized_state: x and y coincide");
    detail::require(cutoff >= 10.0 * std::max(fp.mass, 1.0 / scale),
                    "energy_density_on_localized_state: cutoff below 10 max(m, 1/|x-y|)");
    const cplx w = wightman(sep, fp, q).value;
    const cplx wt = wightman_dt(sep, fp, q).value;
    const cplx wr = r > 0.0 ? wightman_dr(sep, fp, q).value : cplx{};
    const double m2 = fp.mass * fp.mass;

    LocalizedEnergy e;
    e.subtracted = m2 * std::norm(w) + std::norm(wt) + std::norm(wr);
    const auto c = vacuum_moments(fp.mass, cutoff);
    e.vacuum_part = c.field * 0.5 * (c.dt + m2 * c.field + 3.0 * c.grad);
    e.raw = e.subtracted + e.vacuum_part;
    return e;
}

} // namespace qftlab

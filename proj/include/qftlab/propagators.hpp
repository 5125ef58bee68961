#pragma once

// Free-field two-point distributions of the scalar field.
//
// With the mode measure d^3k / (2 omega) and [a, a+] = 2 omega delta^3,
//
//   W(t, r) = <0|Phi(x)Phi(0)|0> = i Delta_+
//           = 1/(4 pi^2 r) int_0^inf dk (k/omega) sin(kr) e^{-i omega t}
//   Delta   = 2 Im W   (from [Phi(x), Phi(y)] = i Delta(x - y))
//   Delta_ret = Theta(t) Delta,   Delta_F = time-ordered W.
//
// Delta is carried as a lightcone coefficient of delta(s^2) plus a regular
// interior value; the coefficient is never sampled pointwise.

#include <cmath>
#include <complex>
#include <span>
#include <vector>

#include "qftlab/core.hpp"
#include "qftlab/quadrature.hpp"
#include "qftlab/special_functions.hpp"

namespace qftlab {

using cplx = std::complex<double>;

/// Coefficient of epsilon(t) delta(s^2) in Delta, fixed by the massless mode sum.
inline constexpr double kConeCoefficient = -1.0 / (2.0 * pi);

struct WightmanValue {
    cplx value{};                 ///< W = i Delta_+
    std::vector<double> eps;      ///< absolute regulators
    std::vector<cplx> per_eps;    ///< regulated values (already normalized)
    double residual = 0.0;        ///< extrapolation residual (normalized)
};

struct DistributionValue {
    double cone_coeff = 0.0;  ///< coefficient of delta(s^2); nonzero only off the spacelike region
    double interior = 0.0;    ///< regular part away from the cone
    IntervalClass cls = IntervalClass::spacelike;
    double residual = 0.0;
};

namespace detail {

inline void reject_cone(const FourSep& sep, const char* what)
{
    if (sep.cls() == IntervalClass::lightlike)
        throw DistributionalPoint(std::string(what) + ": separation is on the lightcone");
}

inline WightmanValue normalized(const quad::Extrapolated& e, double factor)
{
    WightmanValue w;
    w.value = factor * e.value;
    w.eps = e.eps;
    w.per_eps.reserve(e.per_eps.size());
    for (const auto& v : e.per_eps) w.per_eps.push_back(factor * v);
    w.residual = std::abs(factor) * e.residual;
    return w;
}

inline void check(const WightmanValue& w, const QuadratureConfig& q, const char* what)
{
    if (!(w.residual <= q.rel_tol * std::abs(w.value) + q.abs_tol) || !std::isfinite(std::abs(w.value)))
        throw ConvergenceError(std::string(what) + ": regulator extrapolation residual " +
                               std::to_string(w.residual) + " above tolerance");
}

// Off the cone at spacelike separation every even power of eps in Im W_eps is a
// derivative of Delta and drops out, so the imaginary part is refit on odd powers.
inline void refit_spacelike_imag(quad::Extrapolated& e, const FourSep& sep, const QuadratureConfig& q)
{
    if (sep.cls() != IntervalClass::spacelike) return;
    const std::size_t n = e.eps.size();
    const std::size_t use = std::min<std::size_t>(n, static_cast<std::size_t>(q.extrapolation_order) + 1);
    if (use < 3) return;
    std::vector<double> x(e.eps.end() - use, e.eps.end()), im, re;
    for (std::size_t i = n - use; i < n; ++i) {
        im.push_back(e.per_eps[i].imag());
        re.push_back(e.per_eps[i].real());
    }
    const double top = quad::odd_series_at_zero(x, im);
    const double low = quad::odd_series_at_zero(std::span(x).subspan(1), std::span<const double>(im).subspan(1));
    const double re_low = quad::neville_at_zero<double>(std::span(x).subspan(1), std::span<const double>(re).subspan(1));
    e.value = {e.value.real(), top};
    e.residual = std::hypot(e.value.real() - re_low, top - low);
}

inline cplx k_over_omega(cplx k, cplx om) { return om == cplx{} ? cplx{1.0, 0.0} : k / om; }

} // namespace detail

/// Wightman function W(sep) = <0|Phi(x)Phi(y)|0> for sep = x - y.
inline WightmanValue wightman(const FourSep& sep, const FieldParams& fp, const QuadratureConfig& q)
{
    detail::reject_cone(sep, "wightman");
    auto e = quad::mode_integral(detail::k_over_omega, quad::SpatialFactor::sinc, sep.r(), sep.dt(), fp.mass, q);
    detail::refit_spacelike_imag(e, sep, q);
    auto w = detail::normalized(e, 1.0 / (4.0 * pi * pi));
    detail::check(w, q, "wightman");
    return w;
}

/// Time derivative of W with respect to the first argument (omega inserted in the integrand).
inline WightmanValue wightman_dt(const FourSep& sep, const FieldParams& fp, const QuadratureConfig& q)
{
    detail::reject_cone(sep, "wightman_dt");
    // Re W is even in t and Im W vanishes off the cone, so the equal-time slope is zero
    if (sep.dt() == 0.0) return WightmanValue{};
    auto spectral = [](cplx k, cplx) { return -quad::I * k; };
    auto e = quad::mode_integral(spectral, quad::SpatialFactor::sinc, sep.r(), sep.dt(), fp.mass, q);
    detail::refit_spacelike_imag(e, sep, q);
    auto w = detail::normalized(e, 1.0 / (4.0 * pi * pi));
    detail::check(w, q, "wightman_dt");
    return w;
}

/// Radial derivative d/dr of W (k inserted through the derivative of the spherical factor).
inline WightmanValue wightman_dr(const FourSep& sep, const FieldParams& fp, const QuadratureConfig& q)
{
    detail::reject_cone(sep, "wightman_dr");
    auto e = quad::mode_integral(detail::k_over_omega, quad::SpatialFactor::sinc_derivative, sep.r(), sep.dt(),
                                 fp.mass, q);
    detail::refit_spacelike_imag(e, sep, q);
    auto w = detail::normalized(e, 1.0 / (4.0 * pi * pi));
    detail::check(w, q, "wightman_dr");
    return w;
}

/// Equal-time W in closed form: m K1(m r) / (4 pi^2 r), or 1/(4 pi^2 r^2) for m = 0.
inline double equal_time_closed_form(double r, double m)
{
    detail::require(r > 0.0 && std::isfinite(r), "equal_time_closed_form: r must be positive");
    detail::require(m >= 0.0, "equal_time_closed_form: m must be >= 0");
    if (m == 0.0) return 1.0 / (4.0 * pi * pi * r * r);
    return m * special::bessel_k1(m * r) / (4.0 * pi * pi * r);
}

/// Commutator function Delta(sep) = 2 Im W, split into cone coefficient and interior.
inline DistributionValue pauli_jordan(const FourSep& sep, const FieldParams& fp, const QuadratureConfig& q)
{
    const auto w = wightman(sep, fp, q);
    DistributionValue d;
    d.cls = sep.cls();
    d.interior = 2.0 * w.value.imag();
    d.residual = 2.0 * w.residual;
    if (sep.cls() != IntervalClass::spacelike) d.cone_coeff = (sep.dt() > 0.0 ? 1.0 : -1.0) * kConeCoefficient;
    return d;
}

/// Interior (regular) part of Delta in Bessel form: eps(t) m J1(m tau) / (4 pi tau), tau = sqrt(s^2).
inline double pauli_jordan_interior_closed_form(double dt, double r, double m)
{
    const double s2 = (std::abs(dt) - r) * (std::abs(dt) + r);
    if (s2 <= 0.0 || m == 0.0) return 0.0;
    const double tau = std::sqrt(s2);
    const double sgn = dt > 0.0 ? 1.0 : -1.0;
    return sgn * m * m * special::bessel_j1_over_z(m * tau) / (4.0 * pi);
}

/// Retarded function Theta(dt) Delta.
inline DistributionValue retarded(const FourSep& sep, const FieldParams& fp, const QuadratureConfig& q)
{
    if (sep.dt() <= 0.0 || sep.cls() == IntervalClass::spacelike) {
        DistributionValue zero;
        zero.cls = sep.cls();
        return zero;
    }
    return pauli_jordan(sep, fp, q);
}

/// Feynman function Theta(dt) W(sep) + Theta(-dt) W(-sep).
inline cplx feynman(const FourSep& sep, const FieldParams& fp, const QuadratureConfig& q)
{
    if (sep.dt() >= 0.0) return wightman(sep, fp, q).value;
    return wightman(-sep, fp, q).value;
}

// ---------------------------------------------------------------------------
// Tail fits

enum class TailModel { exp, power };

inline const char* to_string(TailModel m) { return m == TailModel::exp ? "exp" : "power"; }

struct TailFit {
    TailModel model = TailModel::power;
    double exponent = 0.0;          ///< rate b in e^{b r} (exp) or power p in r^p (power)
    double prefactor_power = 0.0;   ///< algebraic prefactor r^c of the exp model
    double r2 = 0.0;
};

namespace detail {

// Least squares of y on the given basis columns; returns coefficients and residual sum of squares.
template <std::size_t P>
std::pair<std::array<double, P>, double> least_squares(const std::vector<std::array<double, P>>& X,
                                                       const std::vector<double>& y)
{
    std::array<std::array<double, P>, P> A{};
    std::array<double, P> b{};
    for (std::size_t n = 0; n < y.size(); ++n)
        for (std::size_t i = 0; i < P; ++i) {
            b[i] += X[n][i] * y[n];
            for (std::size_t j = 0; j < P; ++j) A[i][j] += X[n][i] * X[n][j];
        }
    // Gaussian elimination with partial pivoting
    for (std::size_t c = 0; c < P; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < P; ++r)
            if (std::abs(A[r][c]) > std::abs(A[piv][c])) piv = r;
        std::swap(A[c], A[piv]);
        std::swap(b[c], b[piv]);
        if (A[c][c] == 0.0) throw InvalidArgument("fit_tail: degenerate samples");
        for (std::size_t r = c + 1; r < P; ++r) {
            const double f = A[r][c] / A[c][c];
            for (std::size_t j = c; j < P; ++j) A[r][j] -= f * A[c][j];
            b[r] -= f * b[c];
        }
    }
    std::array<double, P> coef{};
    for (std::size_t c = P; c-- > 0;) {
        double s = b[c];
        for (std::size_t j = c + 1; j < P; ++j) s -= A[c][j] * coef[j];
        coef[c] = s / A[c][c];
    }
    double ss = 0.0;
    for (std::size_t n = 0; n < y.size(); ++n) {
        double f = 0.0;
        for (std::size_t i = 0; i < P; ++i) f += coef[i] * X[n][i];
        ss += (y[n] - f) * (y[n] - f);
    }
    return {coef, ss};
}

} // namespace detail

/// Fit the large-r behaviour of |value|.
///
/// exp model:   log|v| = a + b r + c log r   (b is the decay rate, c the algebraic prefactor)
/// power model: log|v| = a + p log r
/// The power model is kept unless the exponential rate is resolved across the
/// window (|b| (r_max - r_min) > 0.1) and the exp model fits better.
inline TailFit fit_tail(std::span<const double> r, std::span<const double> value)
{
    detail::require(r.size() == value.size(), "fit_tail: size mismatch");
    detail::require(r.size() >= 8, "fit_tail: need at least 8 samples");
    std::vector<double> y;
    std::vector<std::array<double, 3>> Xe;
    std::vector<std::array<double, 2>> Xp;
    for (std::size_t i = 0; i < r.size(); ++i) {
        detail::require(r[i] > 0.0 && (i == 0 || r[i] > r[i - 1]), "fit_tail: r must be positive and increasing");
        detail::require(value[i] != 0.0 && std::isfinite(value[i]), "fit_tail: values must be nonzero and finite");
        y.push_back(std::log(std::abs(value[i])));
        Xe.push_back({1.0, r[i], std::log(r[i])});
        Xp.push_back({1.0, std::log(r[i])});
    }
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(y.size());
    double ss_tot = 0.0;
    for (double v : y) ss_tot += (v - mean) * (v - mean);
    if (!(ss_tot > 1e-20 * (1.0 + mean * mean) * static_cast<double>(y.size())))
        throw InvalidArgument("fit_tail: degenerate samples (no variation)");

    const auto [ce, sse] = detail::least_squares<3>(Xe, y);
    const auto [cp, ssp] = detail::least_squares<2>(Xp, y);
    const double span = r.back() - r.front();

    TailFit fit;
    if (std::abs(ce[1]) * span > 0.1 && sse < ssp) {
        fit.model = TailModel::exp;
        fit.exponent = ce[1];
        fit.prefactor_power = ce[2];
        fit.r2 = 1.0 - sse / ss_tot;
    } else {
        fit.model = TailModel::power;
        fit.exponent = cp[1];
        fit.r2 = 1.0 - ssp / ss_tot;
    }
    return fit;
}

} // namespace qftlab

#pragma once

// Bessel functions needed by the closed-form propagators.
//
// K1 is evaluated in three regimes:
//   x <= 2        ascending series (log term plus digamma-weighted sum)
//   2 < x < 25    Steed's continued fraction for K0 and K1 (Temme's CF2)
//   x >= 25       Hankel asymptotic expansion
// The regime boundaries are checked for continuity in the unit tests.

#include <cmath>
#include <math.h>
#include <limits>

#include "qftlab/core.hpp"

namespace qftlab::special {

inline constexpr double kK1SeriesMax = 2.0;
inline constexpr double kK1AsymptoticMin = 25.0;

namespace detail {

inline double bessel_k1_series(double x)
{
    constexpr double euler_gamma = 0.57721566490153286061;
    const double y = 0.25 * x * x;
    // I1(x) = (x/2) sum y^k / (k!(k+1)!)
    // sum2 = sum (psi(k+1) + psi(k+2)) y^k / (k!(k+1)!)
    double term = 1.0;
    double i1_sum = 0.0;
    double psi_sum = 0.0;
    double psi_k1 = -euler_gamma;       // psi(k+1)
    double psi_k2 = 1.0 - euler_gamma;  // psi(k+2)
    for (int k = 0; k < 60; ++k) {
        i1_sum += term;
        psi_sum += (psi_k1 + psi_k2) * term;
        term *= y / ((k + 1.0) * (k + 2.0));
        psi_k1 += 1.0 / (k + 1.0);
        psi_k2 += 1.0 / (k + 2.0);
        if (term < 1e-18 * i1_sum) break;
    }
    const double i1 = 0.5 * x * i1_sum;
    return 1.0 / x + std::log(0.5 * x) * i1 - 0.25 * x * psi_sum;
}

inline double bessel_k1_continued_fraction(double x)
{
    // Steed's method for CF2 at order mu = 0; yields K0 and then K1.
    constexpr int max_iter = 10000;
    constexpr double eps = 1e-16;
    const double a1 = 0.25;
    double b = 2.0 * (1.0 + x);
    double d = 1.0 / b;
    double h = d;
    double delh = d;
    double q1 = 0.0;
    double q2 = 1.0;
    double q = a1;
    double c = a1;
    double a = -a1;
    double s = 1.0 + q * delh;
    for (int i = 1; i < max_iter; ++i) {
        a -= 2 * i;
        c = -a * c / (i + 1.0);
        const double qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh = (b * d - 1.0) * delh;
        h += delh;
        const double dels = q * delh;
        s += dels;
        if (std::abs(dels / s) < eps) break;
    }
    h *= a1;
    const double k0 = std::sqrt(pi / (2.0 * x)) * std::exp(-x) / s;
    return k0 * (x + 0.5 - h) / x;
}

inline double bessel_k1_asymptotic(double x)
{
    // K_nu(x) ~ sqrt(pi/2x) e^{-x} sum_k a_k(nu) / x^k, mu = 4 nu^2 = 4
    constexpr double mu = 4.0;
    double term = 1.0;
    double sum = 1.0;
    for (int k = 1; k < 40; ++k) {
        const double next = term * (mu - (2.0 * k - 1.0) * (2.0 * k - 1.0)) / (k * 8.0 * x);
        if (std::abs(next) > std::abs(term)) break;  // asymptotic series turned
        term = next;
        sum += term;
        if (std::abs(term) < 1e-17 * std::abs(sum)) break;
    }
    return std::sqrt(pi / (2.0 * x)) * std::exp(-x) * sum;
}

} // namespace detail

/// Modified Bessel function of the second kind, order one, for x > 0.
inline double bessel_k1(double x)
{
    qftlab::detail::require(x > 0.0 && !std::isnan(x), "bessel_k1: argument must be positive");
    if (x <= kK1SeriesMax) return detail::bessel_k1_series(x);
    if (x < kK1AsymptoticMin) return detail::bessel_k1_continued_fraction(x);
    if (x > 745.0) return 0.0;
    return detail::bessel_k1_asymptotic(x);
}

/// Bessel function of the first kind, order one.
inline double bessel_j1(double x) { return ::j1(x); }

/// J1(z)/z, analytic in z^2 and equal to 1/2 at z = 0.
inline double bessel_j1_over_z(double z)
{
    if (std::abs(z) < 1e-4) {
        const double z2 = z * z;
        return 0.5 - z2 / 16.0 + z2 * z2 / 384.0;
    }
    return bessel_j1(z) / z;
}

/// J2(z)/z, equal to z/8 near 0.
inline double bessel_j2_over_z(double z)
{
    if (std::abs(z) < 1e-4) {
        const double z2 = z * z;
        return z / 8.0 - z * z2 / 96.0;
    }
    return ::jn(2, z) / z;
}

} // namespace qftlab::special

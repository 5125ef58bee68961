#pragma once

// Quadrature building blocks: composite Gauss-Legendre rules, polynomial
// extrapolation to zero, and the Abel-regularized radial mode integral
//
//   I = int_0^inf dk  s(k) S(k r) e^{-i omega(k) t}   (times e^{-eps k}, eps -> 0)
//
// where s is analytic off the imaginary axis and S is a spherical Bessel-type
// factor. The integral is split at a cutoff K: [0, K] is integrated on the
// real axis; on [K, inf) each plane-wave branch e^{+-ikr} is integrated along
// a vertical ray K + i y on which it decays exponentially, which is the exact
// continuation of the regulated integral. The regulated values are then
// extrapolated in eps.

#include <array>
#include <boost/math/quadrature/gauss.hpp>
#include <cmath>
#include <complex>
#include <span>
#include <utility>
#include <vector>

#include "qftlab/core.hpp"

namespace qftlab::quad {

using cplx = std::complex<double>;
inline constexpr cplx I{0.0, 1.0};

/// Gauss-Legendre rule on [-1, 1].
template <unsigned N>
struct GaussRule {
    std::array<double, N> x{};
    std::array<double, N> w{};

    GaussRule()
    {
        using G = boost::math::quadrature::gauss<double, N>;
        const auto& a = G::abscissa();
        const auto& wt = G::weights();
        std::size_t j = 0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (a[i] == 0.0) {
                x[j] = 0.0;
                w[j++] = wt[i];
                continue;
            }
            x[j] = -a[i];
            w[j++] = wt[i];
            x[j] = a[i];
            w[j++] = wt[i];
        }
    }
};

template <unsigned N>
const GaussRule<N>& gauss_rule()
{
    static const GaussRule<N> rule;
    return rule;
}

/// Composite N-point Gauss-Legendre over [a, b] split into `panels` equal pieces.
template <unsigned N = 16, class F>
auto integrate(F&& f, double a, double b, int panels = 1) -> decltype(f(a))
{
    using R = decltype(f(a));
    R sum{};
    if (!(b > a)) return sum;
    const auto& rule = gauss_rule<N>();
    const double h = (b - a) / panels;
    for (int p = 0; p < panels; ++p) {
        const double lo = a + p * h;
        const double mid = lo + 0.5 * h;
        R part{};
        for (unsigned i = 0; i < N; ++i) part += rule.w[i] * f(mid + 0.5 * h * rule.x[i]);
        sum += 0.5 * h * part;
    }
    return sum;
}

/// Composite rule over consecutive breakpoints, each gap split into panels of width <= max_width.
template <unsigned N = 16, class F>
auto integrate_breakpoints(F&& f, std::span<const double> breaks, double max_width) -> decltype(f(0.0))
{
    using R = decltype(f(0.0));
    R sum{};
    for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
        const double a = breaks[i];
        const double b = breaks[i + 1];
        if (!(b > a)) continue;
        const int panels = std::max(1, static_cast<int>(std::ceil((b - a) / max_width)));
        sum += integrate<N>(f, a, b, panels);
    }
    return sum;
}

/// Value at x = 0 of the polynomial through (x_i, y_i) (Neville's scheme).
template <class T>
T neville_at_zero(std::span<const double> x, std::span<const T> y)
{
    std::vector<T> p(y.begin(), y.end());
    const std::size_t n = p.size();
    for (std::size_t m = 1; m < n; ++m)
        for (std::size_t i = 0; i + m < n; ++i)
            p[i] = (x[i] * p[i + 1] - x[i + m] * p[i]) / (x[i] - x[i + m]);
    return p.front();
}

/// Value at zero of the interpolant a0 + a1 x + a3 x^3 + a5 x^5 + ... through (x, y).
inline double odd_series_at_zero(std::span<const double> x, std::span<const double> y)
{
    const std::size_t n = x.size();
    double scale = 0.0;
    for (double v : x) scale = std::max(scale, std::abs(v));
    std::vector<std::vector<double>> a(n, std::vector<double>(n + 1));
    for (std::size_t i = 0; i < n; ++i) {
        const double u = x[i] / scale;
        a[i][0] = 1.0;
        for (std::size_t j = 1; j < n; ++j) a[i][j] = std::pow(u, static_cast<double>(2 * j - 1));
        a[i][n] = y[i];
    }
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < n; ++r)
            if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
        std::swap(a[c], a[piv]);
        for (std::size_t r = 0; r < n; ++r) {
            if (r == c) continue;
            const double f = a[r][c] / a[c][c];
            for (std::size_t k = c; k <= n; ++k) a[r][k] -= f * a[c][k];
        }
    }
    return a[0][n] / a[0][0];
}

/// Regulated integral values and their extrapolation to zero regulator.
struct Extrapolated {
    cplx value{};
    double residual = 0.0;       ///< |order-n minus order-(n-1) extrapolant|
    std::vector<double> eps;     ///< absolute regulators used
    std::vector<cplx> per_eps;   ///< regulated values, same order as eps
};

inline Extrapolated extrapolate_to_zero(std::vector<double> eps, std::vector<cplx> vals, int order)
{
    Extrapolated out;
    const std::size_t n = eps.size();
    const std::size_t use = std::min<std::size_t>(n, static_cast<std::size_t>(order) + 1);
    std::span<const double> xs(eps.data() + (n - use), use);
    std::span<const cplx> ys(vals.data() + (n - use), use);
    out.value = neville_at_zero<cplx>(xs, ys);
    const cplx lower = neville_at_zero<cplx>(xs.subspan(1), ys.subspan(1));
    out.residual = std::abs(out.value - lower);
    out.eps = std::move(eps);
    out.per_eps = std::move(vals);
    return out;
}

/// Spatial factor S in the radial mode integrand.
enum class SpatialFactor {
    sinc,             ///< sin(k r) / r, equal to k at r = 0
    sinc_derivative,  ///< d/dr [sin(k r) / r]
};

struct ModeIntegralInfo {
    double cutoff = 0.0;    ///< K where the contour leaves the real axis
    double scale = 0.0;     ///< distance to the nearest lightcone singularity
    int nodes = 0;          ///< real-axis nodes
};

namespace detail {

// Panels on [0, K]: finer near the mass scale, otherwise a half oscillation each.
inline std::vector<std::pair<double, double>> axis_panels(double K, double rate, double mass, int min_nodes)
{
    const double osc_width = rate > 0.0 ? pi / rate : K;
    double width = std::min(osc_width, K / std::max(1, min_nodes / 16));
    std::vector<std::pair<double, double>> panels;
    double a = 0.0;
    if (mass > 0.0 && 4.0 * mass < K) {
        const double fine = std::min(width, 0.5 * mass);
        const double end = 4.0 * mass;
        const int n = std::max(1, static_cast<int>(std::ceil(end / fine)));
        for (int i = 0; i < n; ++i) panels.emplace_back(end * i / n, end * (i + 1) / n);
        a = end;
    }
    const int n = std::max(1, static_cast<int>(std::ceil((K - a) / width)));
    for (int i = 0; i < n; ++i) panels.emplace_back(a + (K - a) * i / n, a + (K - a) * (i + 1) / n);
    return panels;
}

} // namespace detail

/// Abel-regularized radial mode integral
///   int_0^inf dk spectral(k, omega) S(k r) e^{-i omega t},
/// extrapolated to zero regulator. `spectral` must accept complex k and omega.
template <class Spectral>
Extrapolated mode_integral(Spectral&& spectral, SpatialFactor sf, double r, double t, double mass,
                           const QuadratureConfig& q, ModeIntegralInfo* info = nullptr)
{
    q.validate();
    qftlab::detail::require(r >= 0.0 && std::isfinite(r) && std::isfinite(t),
                            "mode_integral: r must be finite and >= 0, t finite");
    const double at = std::abs(t);

    // Branch phases: s = +1, -1 for e^{+-ikr}; s = 0 for the r -> 0 limit.
    struct Branch {
        int s;
        double c;  // large-k phase coefficient: phase ~ c k
    };
    std::vector<Branch> branches;
    double scale = 0.0;

    double K = q.k_max > 0.0 ? q.k_max : 40.0 * std::max(mass, 1.0 / std::max(r + at, 1e-300));
    K = std::max(K, 4.0 * mass);
    bool origin = r == 0.0;
    if (!origin && at > 0.0 && (K + 300.0 / at) * r < 1e-7) origin = true;

    if (origin) {
        if (sf == SpatialFactor::sinc_derivative) {
            Extrapolated zero;
            zero.eps.assign(q.epsilon_list.begin(), q.epsilon_list.end());
            zero.per_eps.assign(zero.eps.size(), cplx{});
            return zero;
        }
        if (at == 0.0) throw DistributionalPoint("mode_integral: coincident points");
        branches.push_back({0, -t});
        scale = at;
    } else {
        const double gap = std::abs(r - at);
        if (gap <= 1e-13 * (r + at))
            throw DistributionalPoint("mode_integral: separation lies on the lightcone");
        branches.push_back({+1, r - t});
        branches.push_back({-1, -r - t});
        scale = at == 0.0 ? r : std::min(r + at, gap);
    }
    double c_min = 1e300;
    for (const auto& b : branches) c_min = std::min(c_min, std::abs(b.c));
    // keep the rotated rays decaying at >= |c|/2 (needs m^2 |t| / (2 K^2) <= |c| / 2)
    if (mass > 0.0 && at > 0.0) K = std::max(K, 1.5 * mass * std::sqrt(at / c_min));

    const std::size_t ne = q.epsilon_list.size();
    std::vector<double> eps(ne);
    for (std::size_t j = 0; j < ne; ++j) eps[j] = q.epsilon_list[j] * scale;

    auto omega_of = [mass](cplx k) { return std::sqrt(k * k + mass * mass); };

    auto spatial_real = [&](double k) -> double {
        if (origin) return k;
        const double kr = k * r;
        if (sf == SpatialFactor::sinc) return std::sin(kr) / r;
        return (k * std::cos(kr) - std::sin(kr) / r) / r;
    };
    auto branch_amp = [&](cplx k, int s) -> cplx {
        if (s == 0) return k;
        if (sf == SpatialFactor::sinc) return static_cast<double>(s) / (2.0 * I * r);
        return k / (2.0 * r) - static_cast<double>(s) / (2.0 * I * r * r);
    };

    std::vector<cplx> vals(ne, cplx{});

    // Real axis [0, K]; the first panel uses k = a u^2 to absorb sqrt(k) endpoint behaviour.
    const auto panels = detail::axis_panels(K, r + at, mass, q.n_k);
    const auto& rule = gauss_rule<16>();
    int nodes = 0;
    for (std::size_t p = 0; p < panels.size(); ++p) {
        const auto [a, b] = panels[p];
        const double h = b - a;
        for (unsigned i = 0; i < 16; ++i) {
            double k;
            double w;
            if (p == 0) {
                const double u = 0.5 * (rule.x[i] + 1.0);
                k = a + h * u * u;
                w = 0.5 * rule.w[i] * 2.0 * h * u;
            } else {
                k = a + 0.5 * h * (rule.x[i] + 1.0);
                w = 0.5 * h * rule.w[i];
            }
            const double om = std::sqrt(k * k + mass * mass);
            const cplx base = spectral(cplx{k, 0.0}, cplx{om, 0.0}) * spatial_real(k) *
                              std::exp(cplx{0.0, -om * t});
            for (std::size_t j = 0; j < ne; ++j) vals[j] += w * std::exp(-eps[j] * k) * base;
            ++nodes;
        }
    }

    // Rotated rays from K.
    for (const auto& br : branches) {
        const double sigma = br.c > 0.0 ? 1.0 : -1.0;
        const double rate = 0.5 * std::abs(br.c);
        const double Y = 70.0 / rate;
        const int npan = 35;
        const double h = Y / npan;
        for (int p = 0; p < npan; ++p) {
            for (unsigned i = 0; i < 16; ++i) {
                const double y = p * h + 0.5 * h * (rule.x[i] + 1.0);
                const double w = 0.5 * h * rule.w[i];
                const cplx k{K, sigma * y};
                const cplx om = omega_of(k);
                const cplx phase = I * (static_cast<double>(br.s) * r * k - om * t);
                const cplx base = branch_amp(k, br.s) * spectral(k, om) * (I * sigma) * w;
                for (std::size_t j = 0; j < ne; ++j) vals[j] += base * std::exp(phase - eps[j] * k);
            }
        }
    }

    if (info) *info = ModeIntegralInfo{K, scale, nodes};
    return extrapolate_to_zero(std::move(eps), std::move(vals), q.extrapolation_order);
}

/// Throws ConvergenceError when the extrapolation residual exceeds the configured tolerance.
inline void check_converged(const Extrapolated& e, const QuadratureConfig& q, double magnitude,
                            const char* what)
{
    if (!(e.residual <= q.rel_tol * magnitude + q.abs_tol) || !std::isfinite(std::abs(e.value)))
        throw ConvergenceError(std::string(what) + ": regulator extrapolation did not converge (residual " +
                               std::to_string(e.residual) + ")");
}

} // namespace qftlab::quad

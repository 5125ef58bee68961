#pragma once

// The field driven by a classical source j, solved to all orders in g.
//
// The evolved state is a coherent state with amplitude
//   f(k, t) = g int_0^t dt' int d^3x' j(x', t') e^{i omega t' - i k.x'},
// multiplied by the vacuum persistence amplitude e^{alpha - xi}. Every
// expectation value follows from the vacuum one by shifting Phi, Phi_t and
// grad Phi by the retarded field g Dt_R(x) = g int j Delta_ret and its
// derivatives.
//
// Each extended component is radial about its centre c_a, so its spatial
// Fourier transform J_a(k, t) is real and depends on |k| only; angular
// integrals reduce to sinc(k |c_a - c_b|) couplings.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <mutex>
#include <vector>

#include "qftlab/core.hpp"
#include "qftlab/localization.hpp"
#include "qftlab/propagators.hpp"
#include "qftlab/quadrature.hpp"
#include "qftlab/source.hpp"
#include "qftlab/special_functions.hpp"

namespace qftlab {

namespace detail {

inline double sinc(double x) { return std::abs(x) < 1e-8 ? 1.0 - x * x / 6.0 : std::sin(x) / x; }

inline std::pair<double, double> length_and_time_scales(const SourceComponent& c)
{
    return std::visit(
        overloaded{[](const PointSpacetime&) { return std::pair{0.0, 0.0}; },
                   [](const GaussianPulse& g) { return std::pair{g.sigma_x(), g.sigma_t()}; },
                   [](const Tabulated& t) {
                       double dr = 1e300;
                       for (std::size_t i = 1; i < t.r_nodes().size(); ++i)
                           dr = std::min(dr, t.r_nodes()[i] - t.r_nodes()[i - 1]);
                       double dt = 1e300;
                       for (std::size_t i = 1; i < t.t_nodes().size(); ++i)
                           dt = std::min(dt, t.t_nodes()[i] - t.t_nodes()[i - 1]);
                       return std::pair{dr, dt};
                   }},
        c);
}

/// J_a(k, t) of one extended component at fixed k.
class ComponentSpectrum {
public:
    ComponentSpectrum(const SourceComponent& c, double k)
    {
        if (const auto* g = std::get_if<GaussianPulse>(&c)) {
            gauss_ = g;
            spatial_ = g->spatial_ft(k);
        } else if (const auto* t = std::get_if<Tabulated>(&c)) {
            tab_ = t;
            rows_.resize(t->t_nodes().size());
            for (std::size_t i = 0; i < rows_.size(); ++i) rows_[i] = t->row_ft(i, k);
        } else {
            throw InvalidArgument("point components have no smooth spectrum");
        }
    }

    double operator()(double t) const
    {
        if (gauss_) return spatial_ * gauss_->time_profile(t);
        const auto& tn = tab_->t_nodes();
        if (t < tn.front() || t > tn.back()) return 0.0;
        auto it = std::upper_bound(tn.begin(), tn.end(), t);
        std::size_t i = it == tn.begin() ? 0 : static_cast<std::size_t>(it - tn.begin()) - 1;
        i = std::min(i, tn.size() - 2);
        const double w = (t - tn[i]) / (tn[i + 1] - tn[i]);
        return (1.0 - w) * rows_[i] + w * rows_[i + 1];
    }

    bool piecewise_linear() const { return tab_ != nullptr; }

    /// int^{t_end} J e^{i omega t} dt, exact for the linearly interpolated rows.
    cplx linear_transform(double t_end, double omega) const
    {
        const auto& tn = tab_->t_nodes();
        cplx sum{};
        for (std::size_t i = 0; i + 1 < tn.size() && tn[i] < t_end; ++i) {
            const double a = tn[i];
            const double b = std::min(tn[i + 1], t_end);
            const double fa = rows_[i];
            const double fb = (*this)(b);
            if (fa == 0.0 && fb == 0.0) continue;
            const double h = b - a;
            const double x = omega * h;
            cplx i0, i1;  // int_0^h e^{i omega u} du, int_0^h u e^{i omega u} du
            if (std::abs(x) < 0.5) {
                cplx term = 1.0;
                for (int n = 0; n < 14; ++n) {
                    i0 += term / double(n + 1);
                    i1 += term / double(n + 2);
                    term *= quad::I * x / double(n + 1);
                }
                i0 *= h;
                i1 *= h * h;
            } else {
                const cplx e = std::polar(1.0, x);
                i0 = (e - 1.0) / (quad::I * omega);
                i1 = h * e / (quad::I * omega) + (e - 1.0) / (omega * omega);
            }
            sum += std::polar(1.0, omega * a) * (fa * i0 + (fb - fa) / h * i1);
        }
        return sum;
    }

private:
    const GaussianPulse* gauss_ = nullptr;
    const Tabulated* tab_ = nullptr;
    double spatial_ = 0.0;
    std::vector<double> rows_;
};

struct Panel {
    double a;
    double b;
};

inline std::vector<Panel> split_panels(std::vector<double> breaks, double max_width)
{
    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
    std::vector<Panel> out;
    for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
        const double a = breaks[i];
        const double b = breaks[i + 1];
        if (!(b > a)) continue;
        const int n = std::max(1, static_cast<int>(std::ceil((b - a) / max_width)));
        for (int p = 0; p < n; ++p) out.push_back({a + (b - a) * p / n, a + (b - a) * (p + 1) / n});
    }
    return out;
}

/// Breakpoints in time for the extended components, clipped to [., t_end].
inline std::vector<double> time_breaks(const SourceModel& src, double t_end)
{
    std::vector<double> b;
    for (const auto& c : src.components()) {
        if (std::holds_alternative<PointSpacetime>(c)) continue;
        const auto [lo, hi] = time_window(c);
        if (!(lo < t_end)) continue;
        b.push_back(lo);
        b.push_back(std::min(hi, t_end));
        if (const auto* t = std::get_if<Tabulated>(&c))
            for (double x : t->t_nodes())
                if (x > lo && x < t_end) b.push_back(x);
    }
    return b;
}

struct KGrid {
    std::vector<double> k;
    std::vector<double> w;
};

inline KGrid k_grid(double kmax, double width, double mass)
{
    std::vector<double> breaks{0.0, kmax};
    if (mass > 0.0 && 4.0 * mass < kmax) {
        const int n = std::max(1, static_cast<int>(std::ceil(4.0 * mass / std::min(width, 0.5 * mass))));
        for (int i = 1; i <= n; ++i) breaks.push_back(4.0 * mass * i / n);
    }
    const auto panels = split_panels(breaks, width);
    const auto& rule = quad::gauss_rule<16>();
    KGrid g;
    for (const auto& p : panels)
        for (unsigned i = 0; i < 16; ++i) {
            g.k.push_back(p.a + 0.5 * (p.b - p.a) * (rule.x[i] + 1.0));
            g.w.push_back(0.5 * (p.b - p.a) * rule.w[i]);
        }
    return g;
}

/// Momentum and time resolution shared by the coherent-state integrals.
struct SpectralSetup {
    double kmax = 0.0;
    double k_width = 0.0;
    double time_scale = 1e300;  // smallest temporal feature of the extended components
    double extent = 0.0;        // largest rho_max
    double spread = 0.0;        // largest distance between centres
    double t_first = 1e300;
    double t_last = -1e300;
};

// Smallest k past which the full-window spectral weight k |J|^2 stays below
// 1e-13 of its peak, probed up to kcap.
inline double tabulated_cutoff(const SourceComponent& c, double kcap)
{
    const auto& tab = std::get<Tabulated>(c);
    const double step = std::min(0.25, 1.0 / std::max(rho_max(c), 1e-3));
    std::vector<std::pair<double, double>> probe;
    double peak = 0.0;
    for (double k = step; k <= kcap; k += step) {
        const ComponentSpectrum spec(c, k);
        const double w = k * std::norm(spec.linear_transform(tab.t_hi(), k));
        probe.emplace_back(k, w);
        peak = std::max(peak, w);
    }
    double cut = step;
    for (const auto& [k, w] : probe)
        if (w > 1e-13 * peak) cut = k;
    return std::min(kcap, cut + 4.0 * step);
}

inline SpectralSetup spectral_setup(const SourceModel& src, const QuadratureConfig& q)
{
    SpectralSetup s;
    double kmax = 0.0;
    for (const auto& c : src.components()) {
        const auto [lo, hi] = time_window(c);
        s.t_first = std::min(s.t_first, lo);
        s.t_last = std::max(s.t_last, hi);
        if (std::holds_alternative<PointSpacetime>(c)) continue;
        const auto [hx, ht] = length_and_time_scales(c);
        s.extent = std::max(s.extent, rho_max(c));
        if (std::holds_alternative<GaussianPulse>(c)) {
            kmax = std::max(kmax, 10.0 / hx);
            s.time_scale = std::min(s.time_scale, ht);
        } else {
            kmax = std::max(kmax, tabulated_cutoff(c, 60.0 / hx));
        }
    }
    const auto& comps = src.components();
    for (std::size_t a = 0; a < comps.size(); ++a)
        for (std::size_t b = a + 1; b < comps.size(); ++b)
            s.spread = std::max(s.spread, norm(spatial_center(comps[a]) - spatial_center(comps[b])));
    s.kmax = q.k_max > 0.0 ? q.k_max : std::max(kmax, 1.0);
    const double span = std::max(0.0, s.t_last - s.t_first);
    s.k_width = std::min(1.0 / std::max(s.extent, 1e-3), pi / (s.spread + span + s.extent + 1e-9));
    return s;
}

inline void require_extended(const SourceModel& src, const char* what)
{
    if (src.has_point_component())
        throw InvalidArgument(std::string(what) +
                              ": point sources have a divergent self-interaction; use an extended source");
}

// int_{lo}^{t_end} J(k, t') e^{i omega t'} dt' for every extended component, on shared panels.
inline std::vector<cplx> time_transforms(const std::vector<ComponentSpectrum>& spec,
                                         const std::vector<Panel>& panels, double t_end, double omega)
{
    const auto& rule = quad::gauss_rule<16>();
    std::vector<cplx> out(spec.size(), cplx{});
    std::vector<std::size_t> sampled;
    for (std::size_t a = 0; a < spec.size(); ++a)
        if (spec[a].piecewise_linear())
            out[a] = spec[a].linear_transform(t_end, omega);
        else
            sampled.push_back(a);
    if (sampled.empty()) return out;
    for (const auto& p : panels) {
        const double h = p.b - p.a;
        for (unsigned i = 0; i < 16; ++i) {
            const double t = p.a + 0.5 * h * (rule.x[i] + 1.0);
            const cplx e = 0.5 * h * rule.w[i] * std::polar(1.0, omega * t);
            for (auto a : sampled) out[a] += spec[a](t) * e;
        }
    }
    return out;
}

inline std::vector<Panel> time_panels(const SourceModel& src, const SpectralSetup& s, double t_end, double omega)
{
    const double width = std::min(s.time_scale, 2.0 * pi / std::max(omega, 1e-12));
    return split_panels(time_breaks(src, t_end), width);
}

} // namespace detail

// ---------------------------------------------------------------------------
// Coherent amplitude

/// Coherent amplitude on a radial momentum grid. F[a][i] is the per-component
/// factor g int dt' J_a(k_i, t') e^{i omega t'}; the full amplitude is
/// f(k) = sum_a F_a(|k|) e^{-i k.c_a}.
struct CoherentAmplitude {
    double t = 0.0;
    double coupling = 0.0;
    double mass = 0.0;
    std::vector<double> k;
    std::vector<double> weight;
    std::vector<Vec3> centers;
    std::vector<std::vector<cplx>> F;
    double norm2 = 0.0;  ///< int d^3k / ((2 pi)^3 2 omega) |f|^2 = <N>

    cplx at_node(std::size_t i, const Vec3& khat) const
    {
        cplx sum{};
        for (std::size_t a = 0; a < F.size(); ++a) {
            const double phase = -k[i] * (khat[0] * centers[a][0] + khat[1] * centers[a][1] + khat[2] * centers[a][2]);
            sum += F[a][i] * std::polar(1.0, phase);
        }
        return sum;
    }
};

namespace detail {

inline void check_time(double t, const char* what)
{
    require(std::isfinite(t) && t >= 0.0, std::string(what) + ": t must be finite and >= 0");
}

// F_a(k, t) on the given nodes; point components are analytic.
inline std::vector<std::vector<cplx>> amplitude_factors(const SourceModel& src, const FieldParams& fp, double t,
                                                        const SpectralSetup& s, const std::vector<double>& ks)
{
    const auto& comps = src.components();
    std::vector<std::vector<cplx>> F(comps.size(), std::vector<cplx>(ks.size(), cplx{}));
    std::vector<std::size_t> ext;
    for (std::size_t a = 0; a < comps.size(); ++a) {
        if (const auto* p = std::get_if<PointSpacetime>(&comps[a])) {
            if (t > p->y.t)
                for (std::size_t i = 0; i < ks.size(); ++i)
                    F[a][i] = fp.coupling * p->strength * std::polar(1.0, fp.omega(ks[i]) * p->y.t);
        } else {
            ext.push_back(a);
        }
    }
    if (ext.empty() || fp.coupling == 0.0) return F;
    for (std::size_t i = 0; i < ks.size(); ++i) {
        const double om = fp.omega(ks[i]);
        std::vector<ComponentSpectrum> spec;
        for (auto a : ext) spec.emplace_back(comps[a], ks[i]);
        const auto tt = time_transforms(spec, time_panels(src, s, t, om), t, om);
        for (std::size_t j = 0; j < ext.size(); ++j) F[ext[j]][i] = fp.coupling * tt[j];
    }
    return F;
}

} // namespace detail

/// Coherent amplitude of the state at time t.
inline CoherentAmplitude mode_amplitude(const SourceModel& src, const FieldParams& fp, double t,
                                        const QuadratureConfig& q)
{
    detail::check_time(t, "mode_amplitude");
    q.validate();
    for (const auto& c : src.components())
        if (const auto* tab = std::get_if<Tabulated>(&c))
            if (t > tab->t_hi()) throw InvalidArgument("mode_amplitude: t beyond tabulated source range");
    const auto s = detail::spectral_setup(src, q);
    const auto grid = detail::k_grid(s.kmax, s.k_width, fp.mass);

    CoherentAmplitude amp;
    amp.t = t;
    amp.coupling = fp.coupling;
    amp.mass = fp.mass;
    amp.k = grid.k;
    amp.weight = grid.w;
    for (const auto& c : src.components()) amp.centers.push_back(spatial_center(c));
    amp.F = detail::amplitude_factors(src, fp, t, s, grid.k);

    if (fp.coupling == 0.0) return amp;
    const std::size_t n = amp.F.size();
    bool active_point = false;
    for (std::size_t a = 0; a < n; ++a)
        if (std::holds_alternative<PointSpacetime>(src.components()[a]) && t > time_window(src.components()[a]).first)
            active_point = true;
    if (active_point) {
        amp.norm2 = std::numeric_limits<double>::infinity();
        return amp;
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < amp.k.size(); ++i) {
        const double k = amp.k[i];
        double s2 = 0.0;
        for (std::size_t a = 0; a < n; ++a)
            for (std::size_t b = 0; b < n; ++b) {
                const double d = norm(amp.centers[a] - amp.centers[b]);
                s2 += (amp.F[a][i] * std::conj(amp.F[b][i])).real() * detail::sinc(k * d);
            }
        sum += amp.weight[i] * k * k / fp.omega(k) * s2;
    }
    amp.norm2 = sum / (4.0 * pi * pi);
    return amp;
}

/// f(k) at an arbitrary momentum, evaluated directly.
inline cplx coherent_amplitude_at(const Vec3& kvec, const SourceModel& src, const FieldParams& fp, double t,
                                  const QuadratureConfig& q)
{
    detail::check_time(t, "coherent_amplitude_at");
    const auto s = detail::spectral_setup(src, q);
    const double k = norm(kvec);
    const auto F = detail::amplitude_factors(src, fp, t, s, {k});
    cplx sum{};
    for (std::size_t a = 0; a < F.size(); ++a) {
        const Vec3 c = spatial_center(src.components()[a]);
        sum += F[a][0] * std::polar(1.0, -(kvec[0] * c[0] + kvec[1] * c[1] + kvec[2] * c[2]));
    }
    return sum;
}

// ---------------------------------------------------------------------------
// Vacuum-persistence phases

/// Time-ordered double integrals
///   I-+ = int_{t1 > t2} dt1 dt2 int d^3x1 d^3x2 j(x1) j(x2) W(+-(x1 - x2)),
/// each evaluated as a separate complex integral.
struct OrderedIntegrals {
    cplx minus{};
    cplx plus{};
};

namespace detail {

inline OrderedIntegrals ordered_integrals(const SourceModel& src, const FieldParams& fp, double t,
                                          const QuadratureConfig& q)
{
    require_extended(src, "xi/alpha");
    q.validate();
    OrderedIntegrals out;
    const auto s = spectral_setup(src, q);
    if (!(t > s.t_first)) return out;
    const auto grid = k_grid(s.kmax, s.k_width, fp.mass);
    const auto& comps = src.components();
    const std::size_t n = comps.size();
    const auto& rule = quad::gauss_rule<16>();

    std::vector<std::vector<double>> dist(n, std::vector<double>(n));
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b) dist[a][b] = norm(spatial_center(comps[a]) - spatial_center(comps[b]));

    for (std::size_t ik = 0; ik < grid.k.size(); ++ik) {
        const double k = grid.k[ik];
        const double om = fp.omega(k);
        std::vector<ComponentSpectrum> spec;
        for (const auto& c : comps) spec.emplace_back(c, k);
        const auto panels = time_panels(src, s, t, om);

        std::vector<cplx> cum_p(n), cum_m(n);  // int_{start}^{a_p} J_b e^{+-i omega t2}
        std::vector<std::vector<cplx>> Tm(n, std::vector<cplx>(n)), Tp(n, std::vector<cplx>(n));
        std::vector<double> Ja(n);
        std::vector<cplx> inner_p(n), inner_m(n);
        std::vector<cplx> panel_p(n), panel_m(n);
        for (const auto& p : panels) {
            const double h = p.b - p.a;
            std::fill(panel_p.begin(), panel_p.end(), cplx{});
            std::fill(panel_m.begin(), panel_m.end(), cplx{});
            for (unsigned i = 0; i < 16; ++i) {
                const double t1 = p.a + 0.5 * h * (rule.x[i] + 1.0);
                const double w1 = 0.5 * h * rule.w[i];
                const double hs = t1 - p.a;
                for (std::size_t b = 0; b < n; ++b) {
                    inner_p[b] = cum_p[b];
                    inner_m[b] = cum_m[b];
                }
                for (unsigned j = 0; j < 16; ++j) {
                    const double t2 = p.a + 0.5 * hs * (rule.x[j] + 1.0);
                    const double w2 = 0.5 * hs * rule.w[j];
                    const cplx ep = w2 * std::polar(1.0, om * t2);
                    const cplx em = w2 * std::polar(1.0, -om * t2);
                    for (std::size_t b = 0; b < n; ++b) {
                        const double jb = spec[b](t2);
                        inner_p[b] += jb * ep;
                        inner_m[b] += jb * em;
                    }
                }
                const cplx e1m = w1 * std::polar(1.0, -om * t1);
                const cplx e1p = w1 * std::polar(1.0, om * t1);
                for (std::size_t a = 0; a < n; ++a) Ja[a] = spec[a](t1);
                for (std::size_t a = 0; a < n; ++a)
                    for (std::size_t b = 0; b < n; ++b) {
                        Tm[a][b] += Ja[a] * e1m * inner_p[b];
                        Tp[a][b] += Ja[a] * e1p * inner_m[b];
                    }
                for (std::size_t b = 0; b < n; ++b) {
                    panel_p[b] += Ja[b] * e1p;
                    panel_m[b] += Ja[b] * e1m;
                }
            }
            for (std::size_t b = 0; b < n; ++b) {
                cum_p[b] += panel_p[b];
                cum_m[b] += panel_m[b];
            }
        }
        cplx sm{}, sp{};
        for (std::size_t a = 0; a < n; ++a)
            for (std::size_t b = 0; b < n; ++b) {
                const double sc = sinc(k * dist[a][b]);
                sm += sc * Tm[a][b];
                sp += sc * Tp[a][b];
            }
        const double f = grid.w[ik] * k * k / om / (4.0 * pi * pi);
        out.minus += f * sm;
        out.plus += f * sp;
    }
    return out;
}

} // namespace detail

/// xi(t) = (i g^2 / 2) int_{t1 > t2} j Delta j; purely imaginary.
inline cplx xi(const SourceModel& src, const FieldParams& fp, double t, const QuadratureConfig& q)
{
    detail::check_time(t, "xi");
    const auto I = detail::ordered_integrals(src, fp, t, q);
    const double g2 = fp.coupling * fp.coupling;
    return 0.5 * g2 * (I.minus - I.plus);
}

/// alpha(t) = -(g^2 / 2) int_{t1 > t2} j (W + W') j = -<N>/2.
inline cplx alpha(const SourceModel& src, const FieldParams& fp, double t, const QuadratureConfig& q)
{
    detail::check_time(t, "alpha");
    const auto I = detail::ordered_integrals(src, fp, t, q);
    const double g2 = fp.coupling * fp.coupling;
    return -0.5 * g2 * (I.minus + I.plus);
}

/// |<0|t>|^2 = e^{2 Re alpha}.
inline double vacuum_persistence(const SourceModel& src, const FieldParams& fp, double t, const QuadratureConfig& q)
{
    return std::exp(2.0 * alpha(src, fp, t, q).real());
}

// ---------------------------------------------------------------------------
// Single-particle amplitude

/// psi(x) = g int j(x') Delta_+(x - x') at fixed time t, for |x - c_a| <= reach.
///
/// 2 Re psi equals the retarded field g Dt_R: the causal part of psi. The
/// imaginary part carries the spacelike tail.
class SingleParticleField {
public:
    SingleParticleField(const SourceModel& src, const FieldParams& fp, const QuadratureConfig& q, double t,
                        double reach)
        : src_(src), fp_(fp), q_(q), t_(t), reach_(reach)
    {
        detail::check_time(t, "single_particle_amplitude");
        detail::require(reach >= 0.0 && std::isfinite(reach), "single_particle_amplitude: invalid reach");
        const auto s = detail::spectral_setup(src, q);
        const double rate = reach + std::max(0.0, t - s.t_first) + s.extent + 1.0;
        const auto grid = detail::k_grid(s.kmax, std::min(s.k_width, pi / rate), fp.mass);
        k_ = grid.k;
        w_ = grid.w;
        F_ = detail::amplitude_factors(src, fp, t, s, k_);
        for (const auto& c : src.components()) centers_.push_back(spatial_center(c));
    }

    cplx operator()(const Vec3& x) const
    {
        detail::require(all_finite(x), "single_particle_amplitude: non-finite point");
        const auto& comps = src_.components();
        cplx psi{};
        for (std::size_t a = 0; a < comps.size(); ++a) {
            const double R = norm(x - centers_[a]);
            if (const auto* p = std::get_if<PointSpacetime>(&comps[a])) {
                if (!(t_ > p->y.t)) continue;
                const auto w = wightman(FourSep(t_ - p->y.t, x - p->y.x), fp_, q_).value;
                psi += -quad::I * fp_.coupling * p->strength * w;
                continue;
            }
            if (R > reach_ * (1.0 + 1e-12))
                throw InvalidArgument("single_particle_amplitude: point beyond the configured reach");
            cplx sum{};
            for (std::size_t i = 0; i < k_.size(); ++i) {
                const double k = k_[i];
                const double om = fp_.omega(k);
                const double sp = R < 1e-12 ? k : std::sin(k * R) / R;
                sum += w_[i] * (k / om) * sp * std::polar(1.0, -om * t_) * F_[a][i];
            }
            psi += -quad::I * sum / (4.0 * pi * pi);
        }
        return psi;
    }

    double time() const { return t_; }

private:
    const SourceModel& src_;
    FieldParams fp_;
    QuadratureConfig q_;
    double t_;
    double reach_;
    std::vector<double> k_;
    std::vector<double> w_;
    std::vector<std::vector<cplx>> F_;
    std::vector<Vec3> centers_;
};

inline double max_center_distance(const SourceModel& src, const Vec3& x)
{
    double r = 0.0;
    for (const auto& c : src.components()) r = std::max(r, norm(x - spatial_center(c)));
    return r;
}

inline cplx single_particle_amplitude(const Event& x, const SourceModel& src, const FieldParams& fp,
                                      const QuadratureConfig& q)
{
    detail::require(x.finite(), "single_particle_amplitude: non-finite event");
    return SingleParticleField(src, fp, q, x.t, max_center_distance(src, x.x))(x.x);
}

// ---------------------------------------------------------------------------
// Retarded field

struct RetardedValue {
    double value = 0.0;
    double error = 0.0;  ///< difference against a coarser quadrature
};

/// Retarded field and its first derivatives at one event.
struct FieldJet {
    double phi = 0.0;
    double dt = 0.0;
    Vec3 grad{0.0, 0.0, 0.0};
    double error = 0.0;
};

namespace detail {

inline double shell_over_r(const SourceComponent& c, double R, double s, double tp)
{
    return std::visit(overloaded{[](const PointSpacetime&) { return 0.0; },
                                 [&](const auto& e) { return e.shell_moment_over_r(R, s, tp); }},
                      c);
}

inline void push_in(std::vector<double>& v, double x, double lo, double hi)
{
    if (x > lo && x < hi) v.push_back(x);
}

// g Dt_R of one extended radial component at distance R from its centre.
// cone:     -(g/2) int ds  P(R, s, t - s) / R
// interior: +(g/2) int dtau int_0^tau ds s m^2 [J1(m q)/(m q)] P(R, s, t - tau) / R,  q^2 = tau^2 - s^2
inline double retarded_component(const SourceComponent& c, double R, double t, double m, double g, double coarsen)
{
    const auto [lo, hi] = time_window(c);
    const double rm = rho_max(c);
    const auto [hx, ht] = length_and_time_scales(c);
    const double width = coarsen * std::min(hx, ht);
    const auto& rule = quad::gauss_rule<16>();

    std::vector<double> sb;  // spatial breakpoints in s
    sb.push_back(R);
    sb.push_back(rm - R);
    if (const auto* tab = std::get_if<Tabulated>(&c))
        for (double r : tab->r_nodes()) {
            sb.push_back(std::abs(R - r));
            sb.push_back(R + r);
        }

    double cone = 0.0;
    {
        const double s_lo = std::max({0.0, R - rm, t - hi});
        const double s_hi = std::min(R + rm, t - lo);
        if (s_hi > s_lo) {
            std::vector<double> br{s_lo, s_hi};
            for (double x : sb) push_in(br, x, s_lo, s_hi);
            if (const auto* tab = std::get_if<Tabulated>(&c))
                for (double tn : tab->t_nodes()) push_in(br, t - tn, s_lo, s_hi);
            for (const auto& p : split_panels(br, width)) {
                const double h = p.b - p.a;
                for (unsigned i = 0; i < 16; ++i) {
                    const double s = p.a + 0.5 * h * (rule.x[i] + 1.0);
                    cone += 0.5 * h * rule.w[i] * shell_over_r(c, R, s, t - s);
                }
            }
        }
    }

    double interior = 0.0;
    if (m > 0.0) {
        const double tau_lo = std::max({0.0, t - hi, R - rm});
        const double tau_hi = t - lo;
        if (tau_hi > tau_lo) {
            std::vector<double> br{tau_lo, tau_hi};
            push_in(br, R + rm, tau_lo, tau_hi);
            for (double x : sb) push_in(br, x, tau_lo, tau_hi);
            if (const auto* tab = std::get_if<Tabulated>(&c))
                for (double tn : tab->t_nodes()) push_in(br, t - tn, tau_lo, tau_hi);
            for (const auto& p : split_panels(br, width)) {
                const double h = p.b - p.a;
                for (unsigned i = 0; i < 16; ++i) {
                    const double tau = p.a + 0.5 * h * (rule.x[i] + 1.0);
                    const double s_lo = std::max(0.0, R - rm);
                    const double s_hi = std::min(tau, R + rm);
                    if (!(s_hi > s_lo)) continue;
                    std::vector<double> bs{s_lo, s_hi};
                    for (double x : sb) push_in(bs, x, s_lo, s_hi);
                    double inner = 0.0;
                    for (const auto& ps : split_panels(bs, width)) {
                        const double hs = ps.b - ps.a;
                        for (unsigned j = 0; j < 16; ++j) {
                            const double s = ps.a + 0.5 * hs * (rule.x[j] + 1.0);
                            const double qq = std::sqrt(std::max(0.0, (tau - s) * (tau + s)));
                            inner += 0.5 * hs * rule.w[j] * s * special::bessel_j1_over_z(m * qq) *
                                     shell_over_r(c, R, s, t - tau);
                        }
                    }
                    interior += 0.5 * h * rule.w[i] * inner;
                }
            }
            interior *= m * m;
        }
    }
    return 0.5 * g * (interior - cone);
}

// Point component: g s Delta_ret(x - y), regular part only.
inline FieldJet point_jet(const PointSpacetime& p, const Event& x, const FieldParams& fp)
{
    FieldJet j;
    const FourSep sep(x.t - p.y.t, x.x - p.y.x);
    if (sep.dt() <= 0.0 || sep.cls() == IntervalClass::spacelike) return j;
    if (sep.cls() == IntervalClass::lightlike)
        throw DistributionalPoint("retarded_field: point-source field is singular on its lightcone");
    const double m = fp.mass;
    if (m == 0.0) return j;
    const double tau = std::sqrt(sep.s2());
    const double A = fp.coupling * p.strength / (4.0 * pi);
    j.phi = A * m * m * special::bessel_j1_over_z(m * tau);
    const double dphi = -A * m * m * m * special::bessel_j2_over_z(m * tau);  // d phi / d tau
    j.dt = dphi * sep.dt() / tau;
    for (int i = 0; i < 3; ++i) j.grad[i] = -dphi * sep.dx()[i] / tau;
    return j;
}

template <class F>
double richardson_derivative(F&& f, double x, double h)
{
    auto D = [&](double s) { return (f(x + s) - f(x - s)) / (2.0 * s); };
    const double d1 = D(h);
    const double d2 = D(0.5 * h);
    const double d3 = D(0.25 * h);
    const double r1 = (4.0 * d2 - d1) / 3.0;
    const double r2 = (4.0 * d3 - d2) / 3.0;
    return (16.0 * r2 - r1) / 15.0;
}

inline bool influences(const SourceComponent& c, const Event& x)
{
    const auto [lo, hi] = time_window(c);
    (void)hi;
    return x.t - lo > std::max(0.0, norm(x.x - spatial_center(c)) - rho_max(c));
}

} // namespace detail

/// g Dt_R(x) = g int j(x') Delta_ret(x - x') d^4x'.
inline RetardedValue retarded_field(const Event& x, const SourceModel& src, const FieldParams& fp,
                                    const QuadratureConfig& q)
{
    detail::require(x.finite(), "retarded_field: non-finite event");
    detail::check_time(x.t, "retarded_field");
    (void)q;
    RetardedValue v;
    for (const auto& c : src.components()) {
        if (const auto* p = std::get_if<PointSpacetime>(&c)) {
            v.value += detail::point_jet(*p, x, fp).phi;
            continue;
        }
        if (!detail::influences(c, x)) continue;
        const double R = norm(x.x - spatial_center(c));
        const double fine = detail::retarded_component(c, R, x.t, fp.mass, fp.coupling, 1.0);
        const double coarse = detail::retarded_component(c, R, x.t, fp.mass, fp.coupling, 2.0);
        v.value += fine;
        v.error += std::abs(fine - coarse);
    }
    return v;
}

/// Retarded field with its time derivative and spatial gradient.
inline FieldJet retarded_jet(const Event& x, const SourceModel& src, const FieldParams& fp,
                             const QuadratureConfig& q)
{
    detail::require(x.finite(), "retarded_field: non-finite event");
    detail::check_time(x.t, "retarded_field");
    (void)q;
    FieldJet jet;
    for (const auto& c : src.components()) {
        if (const auto* p = std::get_if<PointSpacetime>(&c)) {
            const auto pj = detail::point_jet(*p, x, fp);
            jet.phi += pj.phi;
            jet.dt += pj.dt;
            for (int i = 0; i < 3; ++i) jet.grad[i] += pj.grad[i];
            continue;
        }
        if (!detail::influences(c, x)) continue;
        const Vec3 d = x.x - spatial_center(c);
        const double R = norm(d);
        const auto [hx, ht] = detail::length_and_time_scales(c);
        const double h = 0.05 * std::min(hx, ht);
        auto phi_rt = [&](double r, double t) {
            return detail::retarded_component(c, std::abs(r), t, fp.mass, fp.coupling, 1.0);
        };
        const double value = phi_rt(R, x.t);
        jet.phi += value;
        jet.error += std::abs(value - detail::retarded_component(c, R, x.t, fp.mass, fp.coupling, 2.0));
        jet.dt += detail::richardson_derivative([&](double t) { return phi_rt(R, t); }, x.t, h);
        if (R > 0.0) {
            const double dR = detail::richardson_derivative([&](double r) { return phi_rt(r, x.t); }, R, h);
            for (int i = 0; i < 3; ++i) jet.grad[i] += dR * d[i] / R;
        }
    }
    return jet;
}

inline double retarded_field_dt(const Event& x, const SourceModel& src, const FieldParams& fp,
                                const QuadratureConfig& q)
{
    return retarded_jet(x, src, fp, q).dt;
}

inline Vec3 retarded_field_grad(const Event& x, const SourceModel& src, const FieldParams& fp,
                                const QuadratureConfig& q)
{
    return retarded_jet(x, src, fp, q).grad;
}

enum class Backend { quadrature, lattice };

inline const char* to_string(Backend b) { return b == Backend::quadrature ? "quadrature" : "lattice"; }

/// Sampled g Dt_R on a radial (t, r) grid about the source centre, with
/// first derivatives; read by bilinear interpolation.
class RetardedField {
public:
    RetardedField(Backend backend, std::vector<double> t, std::vector<double> r, std::vector<double> phi,
                  std::vector<double> phi_t, std::vector<double> phi_r, double error_estimate)
        : backend_(backend), t_(std::move(t)), r_(std::move(r)), phi_(std::move(phi)), phi_t_(std::move(phi_t)),
          phi_r_(std::move(phi_r)), error_(error_estimate)
    {
        detail::require(t_.size() >= 1 && r_.size() >= 2, "RetardedField: grid too small");
        const std::size_t n = t_.size() * r_.size();
        detail::require(phi_.size() == n && phi_t_.size() == n && phi_r_.size() == n,
                        "RetardedField: sample count mismatch");
    }

    /// Quadrature samples for a rotationally symmetric source.
    static RetardedField from_quadrature(const SourceModel& src, const FieldParams& fp, const QuadratureConfig& q,
                                         std::vector<double> ts, std::vector<double> rs)
    {
        detail::require(src.rotationally_symmetric(), "RetardedField: source must be rotationally symmetric");
        const Vec3 c = spatial_center(src.components().front());
        std::vector<double> phi, pt, pr;
        double err = 0.0;
        for (double t : ts)
            for (double r : rs) {
                const auto jet = retarded_jet(Event{t, c + Vec3{r, 0.0, 0.0}}, src, fp, q);
                phi.push_back(jet.phi);
                pt.push_back(jet.dt);
                pr.push_back(jet.grad[0]);
                err = std::max(err, jet.error);
            }
        return RetardedField(Backend::quadrature, std::move(ts), std::move(rs), std::move(phi), std::move(pt),
                             std::move(pr), err);
    }

    Backend backend() const { return backend_; }
    double error_estimate() const { return error_; }
    const std::vector<double>& times() const { return t_; }
    const std::vector<double>& radii() const { return r_; }
    double sample(std::size_t it, std::size_t ir) const { return phi_[it * r_.size() + ir]; }

    double value(double t, double r) const { return interp(phi_, t, r); }
    double dt(double t, double r) const { return interp(phi_t_, t, r); }
    double dr(double t, double r) const { return interp(phi_r_, t, r); }

private:
    static std::pair<std::size_t, double> locate(const std::vector<double>& g, double x, const char* what)
    {
        if (g.size() == 1) {
            if (std::abs(x - g[0]) > 1e-12 * std::max(1.0, std::abs(x)))
                throw InvalidArgument(std::string("RetardedField: ") + what + " outside grid");
            return {0, 0.0};
        }
        if (x < g.front() - 1e-12 || x > g.back() + 1e-12)
            throw InvalidArgument(std::string("RetardedField: ") + what + " outside grid");
        auto it = std::upper_bound(g.begin(), g.end(), x);
        std::size_t i = it == g.begin() ? 0 : static_cast<std::size_t>(it - g.begin()) - 1;
        i = std::min(i, g.size() - 2);
        return {i, std::clamp((x - g[i]) / (g[i + 1] - g[i]), 0.0, 1.0)};
    }

    double interp(const std::vector<double>& v, double t, double r) const
    {
        const auto [it, wt] = locate(t_, t, "t");
        const auto [ir, wr] = locate(r_, r, "r");
        const std::size_t nr = r_.size();
        auto at = [&](std::size_t a, std::size_t b) { return v[a * nr + b]; };
        const double lo = (1.0 - wr) * at(it, ir) + wr * at(it, ir + 1);
        if (t_.size() == 1) return lo;
        const double hi = (1.0 - wr) * at(it + 1, ir) + wr * at(it + 1, ir + 1);
        return (1.0 - wt) * lo + wt * hi;
    }

    Backend backend_;
    std::vector<double> t_;
    std::vector<double> r_;
    std::vector<double> phi_;
    std::vector<double> phi_t_;
    std::vector<double> phi_r_;
    double error_;
};

// ---------------------------------------------------------------------------
// Shift rule

enum class ObservableKind { field, dt, grad };

inline const char* to_string(ObservableKind k)
{
    switch (k) {
    case ObservableKind::field: return "field";
    case ObservableKind::dt: return "dt";
    case ObservableKind::grad: return "grad";
    }
    return "?";
}

inline double double_factorial(int n)
{
    double r = 1.0;
    for (int i = n; i > 1; i -= 2) r *= i;
    return r;
}

inline double binomial(int n, int k)
{
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

/// Second moment of one kind; grad is a single Cartesian component.
inline double vacuum_second_moment(ObservableKind kind, const FieldParams& fp, double cutoff)
{
    const auto c = vacuum_moments(fp.mass, cutoff);
    switch (kind) {
    case ObservableKind::field: return c.field;
    case ObservableKind::dt: return c.dt;
    case ObservableKind::grad: return c.grad;
    }
    return 0.0;
}

/// <0|X^n|0> at cutoff L: zero for odd n, (n-1)!! C^{n/2} for even n.
inline double wick_vacuum_moment(ObservableKind kind, int n, const FieldParams& fp, double cutoff)
{
    detail::require(n >= 0, "wick_vacuum_moment: n must be >= 0");
    detail::require(std::isfinite(cutoff) && cutoff > fp.mass, "wick_vacuum_moment: cutoff must exceed m");
    if (n % 2 == 1) return 0.0;
    return double_factorial(n - 1) * std::pow(vacuum_second_moment(kind, fp, cutoff), n / 2);
}

/// <(X + a)^n> over the vacuum, expanded binomially.
inline double shifted_power(ObservableKind kind, int n, double shift, const FieldParams& fp, double cutoff)
{
    double sum = 0.0;
    for (int nu = 0; nu <= n; ++nu)
        sum += binomial(n, nu) * std::pow(shift, nu) * wick_vacuum_moment(kind, n - nu, fp, cutoff);
    return sum;
}

inline double jet_shift(ObservableKind kind, const FieldJet& jet, int axis)
{
    switch (kind) {
    case ObservableKind::field: return jet.phi;
    case ObservableKind::dt: return jet.dt;
    case ObservableKind::grad:
        detail::require(axis >= 0 && axis < 3, "grad axis must be 0, 1 or 2");
        return jet.grad[axis];
    }
    return 0.0;
}

/// <X^n(x)> on the driven state, X in {Phi, Phi_t, d_axis Phi}.
inline double expectation_power(ObservableKind kind, int n, const FieldJet& jet, const FieldParams& fp,
                                double cutoff, int axis = 0)
{
    detail::require(n >= 0, "expectation_power: n must be >= 0");
    return shifted_power(kind, n, jet_shift(kind, jet, axis), fp, cutoff);
}

inline double expectation_power(ObservableKind kind, int n, const Event& x, const SourceModel& src,
                                const FieldParams& fp, double cutoff, const QuadratureConfig& q, int axis = 0)
{
    return expectation_power(kind, n, retarded_jet(x, src, fp, q), fp, cutoff, axis);
}

struct ObservableTerm {
    int j = 0;     ///< power of Phi
    int k = 0;     ///< power of Phi_t
    int l = 0;     ///< power of d_axis Phi
    int axis = 0;
    double c = 1.0;
};

/// O = sum c_jkl Phi^j Phi_t^k (d_axis Phi)^l.
struct ObservableSpec {
    std::vector<ObservableTerm> terms;
    int max_degree = 6;

    int degree() const
    {
        int d = 0;
        for (const auto& t : terms) d = std::max(d, t.j + t.k + t.l);
        return d;
    }

    static ObservableSpec energy_density(double m)
    {
        ObservableSpec o;
        o.terms.push_back({0, 2, 0, 0, 0.5});
        o.terms.push_back({2, 0, 0, 0, 0.5 * m * m});
        for (int a = 0; a < 3; ++a) o.terms.push_back({0, 0, 2, a, 0.5});
        return o;
    }
};

struct ObservableValue {
    double total = 0.0;
    double vacuum = 0.0;
    double source_part = 0.0;
};

/// Factorized evaluation: each term is the product of shifted single-kind vacuum expectations.
inline ObservableValue expectation_observable(const ObservableSpec& obs, const FieldJet& jet, const FieldParams& fp,
                                              double cutoff)
{
    detail::require(obs.degree() <= obs.max_degree, "expectation_observable: degree exceeds the configured maximum");
    ObservableValue v;
    for (const auto& t : obs.terms) {
        detail::require(t.j >= 0 && t.k >= 0 && t.l >= 0 && std::isfinite(t.c),
                        "expectation_observable: invalid term");
        auto term = [&](const FieldJet& s) {
            return t.c * shifted_power(ObservableKind::field, t.j, s.phi, fp, cutoff) *
                   shifted_power(ObservableKind::dt, t.k, s.dt, fp, cutoff) *
                   shifted_power(ObservableKind::grad, t.l, jet_shift(ObservableKind::grad, s, t.axis), fp, cutoff);
        };
        v.total += term(jet);
        v.vacuum += term(FieldJet{});
    }
    v.source_part = v.total - v.vacuum;
    return v;
}

inline ObservableValue expectation_observable(const ObservableSpec& obs, const Event& x, const SourceModel& src,
                                              const FieldParams& fp, double cutoff, const QuadratureConfig& q)
{
    return expectation_observable(obs, retarded_jet(x, src, fp, q), fp, cutoff);
}

/// <Phi Phi_t> at one point, which the factorized form drops: i L^3 / (12 pi^2).
inline cplx factorization_cross_moment(double cutoff)
{
    return cplx{0.0, cutoff * cutoff * cutoff / (12.0 * pi * pi)};
}

struct EnergyDensity {
    double vacuum = 0.0;
    double source_part = 0.0;
};

inline EnergyDensity energy_density_expectation(const FieldJet& jet, const FieldParams& fp, double cutoff)
{
    const auto c = vacuum_moments(fp.mass, cutoff);
    const double m2 = fp.mass * fp.mass;
    EnergyDensity e;
    e.vacuum = 0.5 * (c.dt + m2 * c.field + 3.0 * c.grad);
    const double g2 = jet.grad[0] * jet.grad[0] + jet.grad[1] * jet.grad[1] + jet.grad[2] * jet.grad[2];
    e.source_part = 0.5 * (jet.dt * jet.dt + m2 * jet.phi * jet.phi + g2);
    return e;
}

inline EnergyDensity energy_density_expectation(const Event& x, const SourceModel& src, const FieldParams& fp,
                                                double cutoff, const QuadratureConfig& q)
{
    return energy_density_expectation(retarded_jet(x, src, fp, q), fp, cutoff);
}

struct TwoPoint {
    cplx vacuum{};
    double source_part = 0.0;
};

/// <Phi(x) Phi(x')> on the driven state: vacuum W plus the product of retarded fields.
inline TwoPoint two_point_correlation(const Event& x, const Event& xp, const SourceModel& src, const FieldParams& fp,
                                      const QuadratureConfig& q)
{
    TwoPoint tp;
    tp.vacuum = wightman(interval_classify(x, xp), fp, q).value;
    tp.source_part = retarded_field(x, src, fp, q).value * retarded_field(xp, src, fp, q).value;
    return tp;
}

/// Field energy carried by the source part at time t, integrated over all space.
inline double source_energy(double t, const SourceModel& src, const FieldParams& fp, const QuadratureConfig& q,
                            int nodes_per_scale = 1)
{
    detail::check_time(t, "source_energy");
    detail::require(src.rotationally_symmetric(), "source_energy: source must be rotationally symmetric");
    double rm = 0.0;
    double scale = 1e300;
    double t_lo = 1e300;
    for (const auto& c : src.components()) {
        rm = std::max(rm, rho_max(c));
        scale = std::min(scale, detail::length_and_time_scales(c).first);
        t_lo = std::min(t_lo, time_window(c).first);
    }
    if (!(t > t_lo)) return 0.0;
    const Vec3 c0 = spatial_center(src.components().front());
    const double reach = t - t_lo + rm;
    const auto panels = detail::split_panels({0.0, reach}, scale / std::max(1, nodes_per_scale));
    const auto& rule = quad::gauss_rule<8>();
    double e = 0.0;
    for (const auto& p : panels) {
        const double h = p.b - p.a;
        for (unsigned i = 0; i < 8; ++i) {
            const double r = p.a + 0.5 * h * (rule.x[i] + 1.0);
            const auto jet = retarded_jet(Event{t, c0 + Vec3{r, 0.0, 0.0}}, src, fp, q);
            const auto ed = energy_density_expectation(jet, fp, 10.0 * std::max(1.0, fp.mass) + 1.0);
            e += 0.5 * h * rule.w[i] * 4.0 * pi * r * r * ed.source_part;
        }
    }
    return e;
}

} // namespace qftlab

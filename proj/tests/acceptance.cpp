// One PASS/FAIL line per acceptance criterion; exit status is the number of failures.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "qftlab/qftlab.hpp"

using namespace qftlab;

namespace {

const QuadratureConfig q;

struct Outcome {
    bool ok = true;
    std::string detail;
};

std::string fmt(const char* f, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

SourceModel pulse(double tc = 2.0, Vec3 c = {0, 0, 0}, double sx = 0.4, double st = 0.3, double A = 1.0)
{
    return SourceModel::gaussian(Event{tc, c}, sx, st, A);
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(a), std::abs(b)); }

TailFit fit_window(double lo, double hi, int n, const std::function<double(double)>& f)
{
    std::vector<double> r, v;
    for (int i = 0; i < n; ++i) {
        const double x = lo + (hi - lo) * i / (n - 1);
        r.push_back(x);
        v.push_back(f(x));
    }
    return fit_tail(r, v);
}

// ---------------------------------------------------------------------------

Outcome microcausality()
{
    Outcome o;
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> ut(-5.0, 5.0), ugap(0.05, 6.0);
    std::size_t points = 0;
    for (double m : {0.0, 0.5, 1.0, 2.0}) {
        const FieldParams fp(m, 1.0);
        double peak = 0.0;
        for (int i = 0; i < 200; ++i) {
            const double t = ut(rng);
            const double r = std::abs(t) * std::uniform_real_distribution<double>(0.0, 0.95)(rng);
            if (std::abs(t) < 0.05) continue;
            peak = std::max(peak, std::abs(pauli_jordan(FourSep::radial(t, r), fp, q).interior));
        }
        const double bound = std::max(q.abs_tol, 1e-6 * peak);
        double worst = 0.0;
        for (int i = 0; i < 1000; ++i) {
            const double t = ut(rng);
            const double r = std::abs(t) + ugap(rng);
            const auto d = pauli_jordan(FourSep::radial(t, r), fp, q);
            worst = std::max(worst, std::abs(d.interior) + std::abs(d.cone_coeff));
            ++points;
        }
        o.ok = o.ok && worst <= bound;
        o.detail += fmt("m=%g max %.2e bound %.2e; ", m, worst, bound);
    }
    o.detail += fmt("%zu spacelike points", points);
    return o;
}

Outcome closed_form()
{
    Outcome o;
    double worst = 0.0;
    int n = 0;
    for (double m : {0.0, 0.5, 1.0, 2.0}) {
        const FieldParams fp(m, 1.0);
        for (int i = 0; i < 40; ++i) {
            const double mr = 0.1 * std::pow(100.0, i / 39.0);
            const double r = m > 0.0 ? mr / m : mr;
            const double want = equal_time_closed_form(r, m);
            worst = std::max(worst, std::abs(wightman(FourSep::radial(0.0, r), fp, q).value.real() / want - 1.0));
            ++n;
        }
    }
    o.ok = worst <= 1e-6;
    o.detail = fmt("max rel dev %.2e over %d points (limit 1e-6)", worst, n);
    return o;
}

Outcome tails()
{
    Outcome o;
    for (double m : {0.5, 1.0, 2.0}) {
        const FieldParams fp(m, 1.0);
        const auto f = fit_window(8.0 / m, 16.0 / m, 17,
                                  [&](double r) { return wightman(FourSep::radial(0.0, r), fp, q).value.real(); });
        const bool ok = f.model == TailModel::exp && std::abs(f.exponent + m) <= 0.02 * m;
        o.ok = o.ok && ok;
        o.detail += fmt("W m=%g %s %.4f; ", m, to_string(f.model), f.exponent);
    }
    {
        const FieldParams fp(0.0, 1.0);
        const auto f =
            fit_window(8.0, 16.0, 17, [&](double r) { return wightman(FourSep::radial(0.0, r), fp, q).value.real(); });
        const bool ok = f.model == TailModel::power && std::abs(f.exponent + 2.0) <= 0.04;
        o.ok = o.ok && ok;
        o.detail += fmt("W m=0 %s %.4f; ", to_string(f.model), f.exponent);
    }
    for (double m : {0.5, 1.0, 2.0}) {
        const FieldParams fp(m, 1.0);
        const auto f = fit_window(6.0 / m, 12.0 / m, 13, [&](double r) { return nw_kernel(r, fp, q).value; });
        const bool ok = f.model == TailModel::exp && std::abs(f.exponent + m) <= 0.05 * m;
        o.ok = o.ok && ok;
        o.detail += fmt("K m=%g %s %.4f; ", m, to_string(f.model), f.exponent);
    }
    {
        const FieldParams fp(0.0, 1.0);
        const auto f = fit_window(6.0, 12.0, 13, [&](double r) { return nw_kernel(r, fp, q).value; });
        const bool ok = f.model == TailModel::power && std::abs(f.exponent + 3.5) <= 0.1;
        o.ok = o.ok && ok;
        o.detail += fmt("K m=0 %s %.4f", to_string(f.model), f.exponent);
    }
    return o;
}

Outcome nw_normalization()
{
    Outcome o;
    double worst = 0.0;
    int n = 0;
    for (double m : {0.0, 1.0}) {
        const FieldParams fp(m, 1.0);
        for (int i = 0; i < 8; ++i) {
            const double sf = 0.25 * std::pow(8.0, i / 7.0);
            const double sg = 0.25 * std::pow(8.0, (7 - i) / 7.0);
            const Vec3 c{0.3 * i, -0.2, 0.1 * i};
            // int f g for normalized Gaussians: (2 pi s)^{-3/2} exp(-d^2 / 2 s), s = sf^2 + sg^2
            for (const auto& [a, b] : {std::pair{SmearingFunction(sf), SmearingFunction(sf)},
                                       {SmearingFunction(sf), SmearingFunction(sg, c)}}) {
                const double s = a.sigma * a.sigma + b.sigma * b.sigma;
                const Vec3 d = b.center - a.center;
                const double want = std::pow(2.0 * pi * s, -1.5) * std::exp(-0.5 * (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) / s);
                worst = std::max(worst, rel(nw_equal_time_overlap_smeared(a, b, fp, q), want));
                ++n;
            }
        }
    }
    const FieldParams m1(1.0, 1.0);
    int nonzero = 0, tried = 0;
    double smallest = 1e300;
    for (int i = 0; i < 24; ++i) {
        const double t = 0.2 + 0.15 * i;
        const double r = t + 0.3 + 0.1 * (i % 5);
        const auto v = nw_unequal_time_overlap(FourSep::radial(t, r), m1, q);
        ++tried;
        if (std::abs(v.value) > std::max(10.0 * v.error, q.abs_tol)) ++nonzero;
        smallest = std::min(smallest, std::abs(v.value));
    }
    o.ok = worst <= 1e-6 && nonzero >= 20 && nonzero == tried;
    o.detail = fmt("smeared overlap max rel dev %.2e over %d pairs; unequal-time nonzero at %d/%d spacelike points "
                   "(min |value| %.2e)",
                   worst, n, nonzero, tried, smallest);
    return o;
}

Outcome bookkeeping()
{
    Outcome o;
    struct Case {
        const char* name;
        SourceModel src;
        FieldParams fp;
        double t;
    };
    std::vector<double> rn, tn;
    for (int i = 0; i <= 20; ++i) rn.push_back(0.1 * i);
    for (int i = 0; i <= 30; ++i) tn.push_back(0.1 * i);
    std::vector<std::vector<double>> v;
    for (double t : tn) {
        std::vector<double> row;
        for (double r : rn) row.push_back((1.0 - r / 2.0) * (1.0 - r / 2.0) * std::pow(std::sin(pi * t / 3.0), 2));
        v.push_back(row);
    }
    const std::vector<Case> cases{
        {"gauss m=1", pulse(), FieldParams(1.0, 1.0), 4.0},
        {"gauss m=0 mid-pulse", pulse(), FieldParams(0.0, 0.7), 2.2},
        {"offset m=2", pulse(2.0, {1.0, -0.5, 0.7}, 0.3, 0.5), FieldParams(2.0, 1.3), 5.0},
        {"two pulses", SourceModel(std::vector<SourceComponent>{GaussianPulse(Event{2.0, {0, 0, 0}}, 0.4, 0.3, 1.0),
                                                                GaussianPulse(Event{2.5, {1, 0, 0}}, 0.3, 0.3, -0.6)}),
         FieldParams(1.0, 1.0), 4.0},
        {"tabulated", SourceModel(Tabulated({0, 0, 0}, rn, tn, v)), FieldParams(1.0, 1.0), 3.0},
    };
    for (const auto& c : cases) {
        const double n2 = mode_amplitude(c.src, c.fp, c.t, q).norm2;
        const cplx a = alpha(c.src, c.fp, c.t, q);
        const cplx x = xi(c.src, c.fp, c.t, q);
        const double dev = std::abs(a.real() / (-0.5 * n2) - 1.0);
        o.ok = o.ok && std::abs(x.real()) <= 1e-10 && dev <= 1e-6 && n2 > 0.0;
        o.detail += fmt("%s: <N> %.4e |Re xi| %.1e rel %.1e; ", c.name, n2, std::abs(x.real()), dev);
    }
    return o;
}

Outcome contrast()
{
    Outcome o;
    const auto src = pulse();
    const double start = 0.2, extent = 2.4;
    int points = 0;
    for (double m : {0.5, 1.0}) {
        const FieldParams fp(m, 1.0);
        for (double t : {3.0, 4.0}) {
            const double cone = t - start + extent;
            const SingleParticleField psi(src, fp, q, t, cone + 4.0);
            double peak_k = 0.0, peak_m = 0.0, peak_psi = 0.0;
            for (double r = 0.0; r < cone; r += 0.1) {
                const cplx p = psi({r, 0, 0});
                peak_k = std::max(peak_k, std::abs(retarded_field(Event{t, {r, 0, 0}}, src, fp, q).value));
                peak_m = std::max(peak_m, std::abs(2.0 * p.real()));
                peak_psi = std::max(peak_psi, std::abs(p));
            }
            double worst_k = 0.0, worst_m = 0.0, least_psi = 1e300;
            for (int i = 0; i < 40; ++i) {
                const double r = cone + 0.01 + 3.0 * i / 39.0;
                const Vec3 x{r / std::sqrt(2.0), 0.0, r / std::sqrt(2.0)};
                const cplx p = psi(x);
                worst_k = std::max(worst_k, std::abs(retarded_field(Event{t, x}, src, fp, q).value));
                worst_m = std::max(worst_m, std::abs(2.0 * p.real()));
                least_psi = std::min(least_psi, std::abs(p));
                ++points;
            }
            const bool ok = worst_k <= 1e-6 * peak_k && worst_m <= 1e-6 * peak_m && least_psi >= 1e-6 * peak_psi;
            o.ok = o.ok && ok;
            o.detail += fmt("m=%g t=%g: field %.1e/%.1e, 2Re psi %.1e/%.1e, min|psi| %.2e of peak; ", m, t,
                            worst_k, peak_k, worst_m, peak_m, least_psi / peak_psi);
        }
    }
    o.detail += fmt("%d spacelike points", points);
    return o;
}

Outcome shift_rule()
{
    Outcome o;
    const auto src = pulse();
    const FieldParams fp(1.0, 1.0);
    const double cutoff = 20.0;
    double worst = 0.0;
    int checks = 0;
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> ur(0.0, 3.0);
    for (int i = 0; i < 12; ++i) {
        const Event x{3.0, {ur(rng), 0.5 * ur(rng), 0.0}};
        const auto jet = retarded_jet(x, src, fp, q);
        for (auto kind : {ObservableKind::field, ObservableKind::dt, ObservableKind::grad}) {
            const double C = vacuum_second_moment(kind, fp, cutoff);
            for (int axis = 0; axis < (kind == ObservableKind::grad ? 3 : 1); ++axis) {
                const double a = jet_shift(kind, jet, axis);
                for (int n = 0; n <= 4; ++n) {
                    const double got = expectation_power(kind, n, jet, fp, cutoff, axis);
                    worst = std::max({worst, rel(got, oracle::fock_moment(n, C, a)),
                                      rel(got, oracle::recursive_moment(n, C, a))});
                    ++checks;
                }
            }
        }
    }

    // source parts at spacelike points
    std::vector<ObservableSpec> obs;
    for (int n = 1; n <= 4; ++n) {
        obs.push_back({{{n, 0, 0, 0, 1.0}}});
        obs.push_back({{{0, n, 0, 0, 1.0}}});
        obs.push_back({{{0, 0, n, 0, 1.0}}});
    }
    obs.push_back(ObservableSpec::energy_density(fp.mass));
    obs.push_back({{{1, 1, 0, 0, 1.0}, {2, 0, 1, 2, -0.5}}});
    std::vector<double> peak(obs.size() + 2, 0.0), worst_out(obs.size() + 2, 0.0);
    auto sample = [&](const Event& x, std::vector<double>& into) {
        const auto jet = retarded_jet(x, src, fp, q);
        for (std::size_t i = 0; i < obs.size(); ++i)
            into[i] = std::max(into[i], std::abs(expectation_observable(obs[i], jet, fp, cutoff).source_part));
        into[obs.size()] = std::max(into[obs.size()], std::abs(energy_density_expectation(jet, fp, cutoff).source_part));
        const Event y{2.5, {0.3, 0.17, 0}};
        into[obs.size() + 1] =
            std::max(into[obs.size() + 1], std::abs(two_point_correlation(x, y, src, fp, q).source_part));
    };
    for (int i = 0; i < 40; ++i) sample(Event{3.0, {0.1 + 0.1 * i, 0.0, 0.0}}, peak);
    int spacelike = 0;
    for (int i = 0; i < 1000; ++i) {
        const double t = 0.5 + 3.5 * (i % 50) / 49.0;
        const double r = t - 0.2 + 2.4 + 0.02 + 0.2 * (i / 50);
        sample(Event{t, {r * 0.6, -r * 0.8, 0.0}}, worst_out);
        ++spacelike;
    }
    bool vanish = true;
    for (std::size_t i = 0; i < peak.size(); ++i) vanish = vanish && worst_out[i] <= 1e-6 * peak[i];
    double worst_ratio = 0.0;
    for (std::size_t i = 0; i < peak.size(); ++i) worst_ratio = std::max(worst_ratio, worst_out[i] / peak[i]);
    o.ok = worst <= 1e-8 && vanish;
    o.detail = fmt("moments max rel dev %.2e over %d checks; source parts at %d spacelike points max %.1e of peak "
                   "(%zu observables)",
                   worst, checks, spacelike, worst_ratio, peak.size());
    return o;
}

Outcome classical()
{
    Outcome o;
    const auto src = pulse();
    const FieldParams fp(1.0, 1.0);
    const auto a = solve_radial_kg(src, fp, GridSpec::with_cfl(12, 6, 0.02));
    const auto b = solve_radial_kg(src, fp, GridSpec::with_cfl(12, 6, 0.01));
    const auto c = solve_radial_kg(src, fp, GridSpec::with_cfl(12, 6, 0.005));
    double peak = 0.0, dev = 0.0;
    for (double r = 0.0; r <= 7.0; r += 0.1) {
        const double want = retarded_field(Event{6.0, {r, 0, 0}}, src, fp, q).value;
        peak = std::max(peak, std::abs(want));
        dev = std::max(dev, std::abs((4.0 * c.value(6.0, r) - b.value(6.0, r)) / 3.0 - want));
    }
    const double order = convergence_order(a, b, c, 6.0);
    const auto longrun = solve_radial_kg(src, fp, GridSpec::with_cfl(14, 8, 0.01));
    const double drift = lattice_energy_drift(longrun, 4.0, 4.0);

    const auto flash = SourceModel::gaussian(Event{0.3, {0, 0, 0}}, 0.05, 0.05, 1.0);
    const double dr = 0.005;
    const auto h = solve_radial_kg(flash, FieldParams(0.0, 1.0), GridSpec::with_cfl(6, 3, dr));
    double front = 0.0;
    for (std::size_t i = h.t.size() / 2; i < h.t.size(); i += h.t.size() / 10)
        front = std::max(front, std::abs(locate_front(h, h.t[i]) - (h.t[i] - 0.3)));

    o.ok = dev <= 1e-3 * peak && std::abs(order - 2.0) <= 0.2 && drift < 1e-3 && front <= 2.0 * dr;
    o.detail = fmt("lattice vs quadrature %.2e of peak; order %.3f; drift %.2e; front offset %.4f (limit %.3f)",
                   dev / peak, order, drift, front, 2.0 * dr);
    return o;
}

Outcome two_point()
{
    Outcome o;
    const auto src = pulse();
    const FieldParams fp(1.0, 1.0);
    double worst = 0.0, outside = 0.0, least_vac = 1e300;
    int pairs = 0;
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) {
            const Event x{3.0 + 0.2 * i, {0.3 * i, 0.0, 0.1}};
            const Event y{2.5 + 0.3 * j, {0.0, 0.25 * j, 0.0}};
            const auto tp = two_point_correlation(x, y, src, fp, q);
            const double prod = retarded_field(x, src, fp, q).value * retarded_field(y, src, fp, q).value;
            worst = std::max(worst, rel(tp.source_part, prod));
            ++pairs;
        }
    for (int i = 0; i < 20; ++i) {
        const Event in{3.0, {0.2 * i / 20.0, 0.0, 0.0}};
        const Event out{0.5 + 0.1 * i, {0.0, 3.0 + 0.1 * i, 0.0}};
        outside = std::max({outside, std::abs(two_point_correlation(in, out, src, fp, q).source_part),
                            std::abs(two_point_correlation(out, in, src, fp, q).source_part)});
    }
    for (int i = 0; i < 20; ++i) {
        const Event x{1.0, {0.0, 0.0, 0.0}};
        const Event y{1.0 + 0.1 * i, {0.5 + 0.15 * i + 0.1 * i, 0.0, 0.0}};
        least_vac = std::min(least_vac, std::abs(two_point_correlation(x, y, src, fp, q).vacuum));
    }
    o.ok = worst <= 1e-10 && outside == 0.0 && least_vac > 1e-6;
    o.detail = fmt("product rel dev %.1e over %d pairs; outside-cone max %.1e; min spacelike |vacuum| %.2e", worst,
                   pairs, outside, least_vac);
    return o;
}

Outcome cutoff_stability()
{
    Outcome o;
    const auto src = pulse();
    const FieldParams fp(1.0, 1.0);
    const double L = 50.0;
    struct Family {
        std::string name;
        double worst = 0.0;
    };
    std::vector<Family> fam;
    auto track = [&](const std::string& name, double a, double b) {
        const double d = a == b ? 0.0 : std::abs(b - a) / std::max(std::abs(a), std::abs(b));
        for (auto& f : fam)
            if (f.name == name) {
                f.worst = std::max(f.worst, d);
                return;
            }
        fam.push_back({name, d});
    };
    for (double r : {0.6, 1.0, 2.0, 3.5})
        track("localized energy subtracted",
              energy_density_on_localized_state(Event{0.0, {r, 0.3, 0}}, Event{}, fp, L, q).subtracted,
              energy_density_on_localized_state(Event{0.0, {r, 0.3, 0}}, Event{}, fp, 2.0 * L, q).subtracted);
    for (double r : {0.0, 0.5, 1.5, 2.5}) {
        const auto jet = retarded_jet(Event{3.0, {r, 0.2, 0}}, src, fp, q);
        track("energy density", energy_density_expectation(jet, fp, L).source_part,
              energy_density_expectation(jet, fp, 2.0 * L).source_part);
        track("two-point", two_point_correlation(Event{3.0, {r, 0.2, 0}}, Event{2.6, {0.1, 0, 0}}, src, fp, q).source_part,
              two_point_correlation(Event{3.0, {r, 0.2, 0}}, Event{2.6, {0.1, 0, 0}}, src, fp, q).source_part);
        for (auto kind : {ObservableKind::field, ObservableKind::dt, ObservableKind::grad})
            for (int n = 1; n <= 4; ++n) {
                ObservableSpec s;
                s.terms.push_back({kind == ObservableKind::field ? n : 0, kind == ObservableKind::dt ? n : 0,
                                   kind == ObservableKind::grad ? n : 0, 0, 1.0});
                track(fmt("%s^%d", to_string(kind), n), expectation_observable(s, jet, fp, L).source_part,
                      expectation_observable(s, jet, fp, 2.0 * L).source_part);
            }
    }
    std::string bad;
    for (const auto& f : fam)
        if (f.worst >= 1e-2) {
            o.ok = false;
            bad += fmt(" %s(%.2g)", f.name.c_str(), f.worst);
        }
    o.detail = fmt("%zu quantity families, Lambda %g -> %g", fam.size(), L, 2.0 * L);
    if (!bad.empty()) o.detail += "; changes >= 1%:" + bad;
    return o;
}

} // namespace

int main()
{
    struct Criterion {
        const char* name;
        double limit_s;
        Outcome (*run)();
    };
    const Criterion all[] = {
        {"microcausality", 60, microcausality},       {"closed-form oracle", 60, closed_form},
        {"asymptotic decay", 120, tails},             {"NW normalization", 120, nw_normalization},
        {"persistence bookkeeping", 60, bookkeeping}, {"causality vs non-locality", 120, contrast},
        {"shift rule", 120, shift_rule},              {"classical correspondence", 300, classical},
        {"two-point structure", 60, two_point},       {"cutoff stability", 120, cutoff_stability},
    };
    int failures = 0;
    int id = 1;
    for (const auto& c : all) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool ok = o.ok && secs < c.limit_s;
        failures += ok ? 0 : 1;
        std::printf("%s %d %s: %s [%.1f s, limit %.0f s]\n", ok ? "PASS" : "FAIL", id++, c.name, o.detail.c_str(),
                    secs, c.limit_s);
        std::fflush(stdout);
    }
    return failures;
}

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "qftlab/source_dynamics.hpp"

using namespace qftlab;

namespace {

const QuadratureConfig q;
const FieldParams m1(1.0, 1.0);

SourceModel pulse(double tc = 2.0, Vec3 c = {0, 0, 0}, double sx = 0.4, double st = 0.3, double A = 1.0)
{
    return SourceModel::gaussian(Event{tc, c}, sx, st, A);
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(a), std::abs(b)); }

} // namespace

// ---------------------------------------------------------------------------
// coherent amplitude and persistence phases

TEST(CoherentAmplitude, ZeroCoupling)
{
    const FieldParams g0(1.0, 0.0);
    const auto src = pulse();
    EXPECT_EQ(mode_amplitude(src, g0, 4.0, q).norm2, 0.0);
    EXPECT_EQ(std::abs(alpha(src, g0, 4.0, q)), 0.0);
    EXPECT_EQ(std::abs(xi(src, g0, 4.0, q)), 0.0);
    EXPECT_EQ(vacuum_persistence(src, g0, 4.0, q), 1.0);
}

TEST(CoherentAmplitude, PointSourcePhase)
{
    const Event y{1.0, {0.3, -0.2, 0.5}};
    const FieldParams fp(1.0, 0.7);
    const auto src = SourceModel::point(y, 1.0);
    for (const Vec3 k : {Vec3{0.5, 0, 0}, Vec3{1.0, 2.0, -0.5}, Vec3{0, 0, 3.0}}) {
        const cplx f = coherent_amplitude_at(k, src, fp, 2.0, q);
        const double om = fp.omega(norm(k));
        const cplx want = 0.7 * std::polar(1.0, om * y.t - (k[0] * y.x[0] + k[1] * y.x[1] + k[2] * y.x[2]));
        EXPECT_NEAR(std::abs(f - want), 0.0, 1e-12);
        EXPECT_NEAR(std::abs(f), 0.7, 1e-12);
    }
    EXPECT_EQ(std::abs(coherent_amplitude_at({1, 0, 0}, src, fp, 0.5, q)), 0.0);
    EXPECT_TRUE(std::isinf(mode_amplitude(src, fp, 2.0, q).norm2));
    EXPECT_THROW(xi(src, fp, 2.0, q), InvalidArgument);
    EXPECT_THROW(alpha(src, fp, 2.0, q), InvalidArgument);
}

TEST(CoherentAmplitude, GaussianAgainstDirectTransform)
{
    // F(k) = g A (2 pi)^{3/2} sx^3 e^{-k^2 sx^2 / 2} int_0^t T(t') e^{i w t'} dt', untruncated
    const double sx = 0.4, st = 0.3, tc = 2.0;
    const auto src = pulse(tc, {0, 0, 0}, sx, st);
    for (double k : {0.3, 1.0, 2.5}) {
        const cplx f = coherent_amplitude_at({k, 0, 0}, src, m1, 10.0, q);
        const double om = m1.omega(k);
        const cplx want = std::pow(2.0 * pi, 1.5) * sx * sx * sx * std::exp(-0.5 * k * k * sx * sx) *
                          std::sqrt(2.0 * pi) * st * std::exp(-0.5 * om * om * st * st) * std::polar(1.0, om * tc);
        EXPECT_NEAR(std::abs(f - want), 0.0, 1e-7 * std::abs(want)) << k;
    }
}

TEST(CoherentAmplitude, TabulatedAgainstDirectTransform)
{
    const Tabulated tab({0, 0, 0}, {0.0, 0.5, 1.0}, {0.0, 0.4, 1.0, 1.5}, {{0, 0, 0}, {1, 0.6, 0}, {0.5, 0.1, 0}, {0, 0, 0}});
    const SourceModel src(tab);
    for (double k : {0.5, 4.0, 12.0}) {
        for (double t : {0.7, 1.5}) {
            const int n = 200000;
            cplx sum{};
            for (int i = 0; i < n; ++i) {
                const double s = (i + 0.5) * t / n;
                sum += tab.spatial_ft(k, s) * std::polar(1.0, m1.omega(k) * s);
            }
            const cplx want = m1.coupling * sum * (t / n);
            const cplx got = coherent_amplitude_at({0, k, 0}, src, m1, t, q);
            EXPECT_NEAR(std::abs(got - want), 0.0, 1e-7 * std::abs(want)) << k << " " << t;
        }
    }
}

TEST(CoherentAmplitude, ConstantAfterSwitchOff)
{
    const auto src = pulse();
    const double a = mode_amplitude(src, m1, 5.0, q).norm2;
    const double b = mode_amplitude(src, m1, 9.0, q).norm2;
    EXPECT_GT(a, 0.0);
    EXPECT_NEAR(a / b, 1.0, 1e-10);
    EXPECT_EQ(mode_amplitude(src, m1, 0.15, q).norm2, 0.0);
}

TEST(Persistence, BookkeepingIdentities)
{
    const auto src = pulse();
    for (double t : {1.8, 2.2, 4.0}) {
        const double n2 = mode_amplitude(src, m1, t, q).norm2;
        const cplx a = alpha(src, m1, t, q);
        const cplx x = xi(src, m1, t, q);
        EXPECT_NEAR(a.real() / (-0.5 * n2), 1.0, 1e-6) << t;
        EXPECT_NEAR(x.real(), 0.0, 1e-10);
        EXPECT_LE(vacuum_persistence(src, m1, t, q), 1.0);
    }
}

TEST(Persistence, BeforeOnset)
{
    const auto src = pulse();
    EXPECT_EQ(std::abs(xi(src, m1, 0.1, q)), 0.0);
    EXPECT_EQ(vacuum_persistence(src, m1, 0.15, q), 1.0);
}

TEST(Persistence, SpacelikePulsesAddIndependently)
{
    // two pulses 12 apart, each lasting 3.6: no causal contact
    const auto a = GaussianPulse(Event{2, {0, 0, 0}}, 0.3, 0.3, 1.0);
    const auto b = GaussianPulse(Event{2, {12, 0, 0}}, 0.3, 0.3, 1.0);
    const SourceModel both(std::vector<SourceComponent>{a, b});
    const double t = 4.0;
    const cplx sum = xi(SourceModel(a), m1, t, q) + xi(SourceModel(b), m1, t, q);
    const cplx joint = xi(both, m1, t, q);
    EXPECT_NEAR(std::abs(joint - sum), 0.0, 1e-6 * std::abs(sum));
}

// ---------------------------------------------------------------------------
// single-particle amplitude and retarded field

TEST(SingleParticle, PointSourceIsWightman)
{
    const Event y{1.0, {0, 0, 0}};
    const FieldParams fp(1.0, 0.5);
    const auto src = SourceModel::point(y, 2.0);
    const Event x{2.5, {0.4, 0.3, 0}};
    const cplx psi = single_particle_amplitude(x, src, fp, q);
    const cplx want = -quad::I * 0.5 * 2.0 * wightman(interval_classify(x, y), fp, q).value;
    EXPECT_NEAR(std::abs(psi - want), 0.0, 1e-14);
    EXPECT_EQ(std::abs(single_particle_amplitude(Event{0.5, {0, 0, 0}}, src, fp, q)), 0.0);
    EXPECT_EQ(std::abs(single_particle_amplitude(x, src, FieldParams(1.0, 0.0), q)), 0.0);
}

TEST(SingleParticle, RealPartIsHalfRetardedField)
{
    const auto src = pulse();
    const SingleParticleField psi(src, m1, q, 4.0, 9.0);
    for (double r : {0.0, 0.5, 1.0, 2.0, 3.0}) {
        const double phi = retarded_field(Event{4.0, {r, 0, 0}}, src, m1, q).value;
        EXPECT_NEAR(2.0 * psi({r, 0, 0}).real(), phi, 1e-7 * std::abs(phi) + 1e-12) << r;
    }
    // outside the forward cone of the support: causal part gone, amplitude not
    for (double r : {6.5, 7.5, 9.0}) {
        const cplx v = psi({r, 0, 0});
        EXPECT_LT(std::abs(v.real()), 1e-12);
        EXPECT_GT(std::abs(v), 1e-10);
    }
}

TEST(RetardedField, PointSourceMatchesPropagator)
{
    const Event y{1.0, {0, 0, 0}};
    const FieldParams fp(1.0, 0.8);
    const auto src = SourceModel::point(y, 1.5);
    for (auto [t, r] : {std::pair{3.0, 0.5}, {4.0, 2.0}, {2.0, 0.1}}) {
        const Event x{t, {r, 0, 0}};
        const double want = 0.8 * 1.5 * retarded(interval_classify(x, y), fp, q).interior;
        EXPECT_NEAR(retarded_field(x, src, fp, q).value, want, 1e-9 * std::abs(want));
    }
    EXPECT_EQ(retarded_field(Event{1.5, {2.0, 0, 0}}, src, fp, q).value, 0.0);
    EXPECT_THROW(retarded_field(Event{2.0, {1.0, 0, 0}}, src, fp, q), DistributionalPoint);
}

TEST(RetardedField, MasslessGaussianKirchhoff)
{
    // m = 0: Phi(R, t) = -(g / 2) int ds P(R, s, t - s) / R, done here on a fine trapezoid
    const auto src = pulse(2.0, {0, 0, 0}, 0.4, 0.3);
    const auto& g = std::get<GaussianPulse>(src.components().front());
    const FieldParams fp(0.0, 1.0);
    for (double R : {0.3, 1.0, 2.0}) {
        const double t = 3.5;
        const int n = 40000;
        const double hi = 6.0;
        double sum = 0.0;
        for (int i = 0; i <= n; ++i) {
            const double s = hi * i / n;
            sum += (i == 0 || i == n ? 0.5 : 1.0) * g.shell_moment_over_r(R, s, t - s);
        }
        const double want = -0.5 * sum * hi / n;
        EXPECT_NEAR(retarded_field(Event{t, {R, 0, 0}}, src, fp, q).value, want, 1e-7 * std::abs(want)) << R;
    }
}

TEST(RetardedField, Linearity)
{
    const auto a = GaussianPulse(Event{2, {0, 0, 0}}, 0.4, 0.3, 1.0);
    const auto b = GaussianPulse(Event{2.5, {1.0, 0.5, 0}}, 0.3, 0.2, -0.7);
    const SourceModel both(std::vector<SourceComponent>{a, b});
    for (const Event x : {Event{4.0, {0.5, 0, 0}}, Event{5.0, {1.0, 1.0, 0.5}}}) {
        const double sum =
            retarded_field(x, SourceModel(a), m1, q).value + retarded_field(x, SourceModel(b), m1, q).value;
        EXPECT_LE(rel(retarded_field(x, both, m1, q).value, sum), 1e-10);
        const double g1 = retarded_field(x, SourceModel(a), m1, q).value;
        const double g3 = retarded_field(x, SourceModel(a), FieldParams(1.0, 3.0), q).value;
        EXPECT_LE(rel(g3, 3.0 * g1), 1e-10);
    }
}

TEST(RetardedField, JetMatchesFiniteDifferences)
{
    const auto src = pulse();
    const Event x{4.0, {1.0, 0.5, 0.2}};
    const auto jet = retarded_jet(x, src, m1, q);
    const double h = 1e-3;
    auto phi = [&](Event e) { return retarded_field(e, src, m1, q).value; };
    const double dt = (phi(Event{x.t + h, x.x}) - phi(Event{x.t - h, x.x})) / (2 * h);
    EXPECT_NEAR(jet.dt, dt, 1e-5 * std::abs(jet.dt));
    for (int a = 0; a < 3; ++a) {
        Event p = x, m = x;
        p.x[a] += h;
        m.x[a] -= h;
        EXPECT_NEAR(jet.grad[a], (phi(p) - phi(m)) / (2 * h), 1e-5 * norm(jet.grad)) << a;
    }
    EXPECT_DOUBLE_EQ(jet.phi, phi(x));
}

TEST(RetardedField, ZeroOutsideForwardCone)
{
    const auto src = pulse();
    EXPECT_EQ(retarded_field(Event{3.0, {6.0, 0, 0}}, src, m1, q).value, 0.0);
    EXPECT_EQ(retarded_field(Event{0.15, {0.0, 0, 0}}, src, m1, q).value, 0.0);
    EXPECT_THROW(retarded_field(Event{-1.0, {0, 0, 0}}, src, m1, q), InvalidArgument);
}

TEST(RetardedField, SampledGridInterpolates)
{
    const auto src = pulse();
    const auto f = RetardedField::from_quadrature(src, m1, q, {3.0, 3.5}, {0.0, 0.5, 1.0});
    EXPECT_EQ(f.backend(), Backend::quadrature);
    EXPECT_DOUBLE_EQ(f.value(3.5, 0.5), retarded_field(Event{3.5, {0.5, 0, 0}}, src, m1, q).value);
    EXPECT_DOUBLE_EQ(f.value(3.25, 0.5), 0.5 * (f.sample(0, 1) + f.sample(1, 1)));
    EXPECT_THROW(f.value(4.0, 0.5), InvalidArgument);
}

// ---------------------------------------------------------------------------
// shift rule

TEST(Wick, VacuumMoments)
{
    const FieldParams m0(0.0, 1.0);
    for (auto k : {ObservableKind::field, ObservableKind::dt, ObservableKind::grad}) {
        EXPECT_EQ(wick_vacuum_moment(k, 1, m1, 20.0), 0.0);
        EXPECT_EQ(wick_vacuum_moment(k, 0, m1, 20.0), 1.0);
        const double c2 = wick_vacuum_moment(k, 2, m1, 20.0);
        EXPECT_NEAR(wick_vacuum_moment(k, 4, m1, 20.0), 3.0 * c2 * c2, 1e-12 * c2 * c2);
        EXPECT_NEAR(wick_vacuum_moment(k, 6, m1, 20.0), 15.0 * c2 * c2 * c2, 1e-12 * c2 * c2 * c2);
    }
    EXPECT_NEAR(wick_vacuum_moment(ObservableKind::field, 2, m0, 20.0), 400.0 / (8.0 * pi * pi), 1e-12);
    EXPECT_THROW(wick_vacuum_moment(ObservableKind::field, 2, m1, 0.5), InvalidArgument);
}

TEST(ShiftRule, AgainstFockSpaceAndRecursion)
{
    const auto src = pulse();
    const double L = 8.0;
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    for (int trial = 0; trial < 4; ++trial) {
        const Event x{3.0 + 0.5 * trial, {u(rng), u(rng), u(rng)}};
        const auto jet = retarded_jet(x, src, m1, q);
        for (auto kind : {ObservableKind::field, ObservableKind::dt, ObservableKind::grad}) {
            const double C = vacuum_second_moment(kind, m1, L);
            for (int axis = 0; axis < 3; ++axis) {
                const double a = jet_shift(kind, jet, axis);
                for (int n = 0; n <= 4; ++n) {
                    const double got = expectation_power(kind, n, jet, m1, L, axis);
                    EXPECT_LE(std::abs(got - oracle::fock_moment(n, C, a)), 1e-8 * std::abs(got) + 1e-300);
                    EXPECT_LE(std::abs(got - oracle::recursive_moment(n, C, a)), 1e-8 * std::abs(got) + 1e-300);
                }
                if (kind != ObservableKind::grad) break;
            }
        }
    }
}

TEST(ShiftRule, FirstAndSecondMoments)
{
    const auto src = pulse();
    const Event x{3.5, {0.5, 0, 0}};
    const double phi = retarded_field(x, src, m1, q).value;
    EXPECT_NEAR(expectation_power(ObservableKind::field, 1, x, src, m1, 20.0, q), phi, 1e-15);
    const double C = vacuum_second_moment(ObservableKind::field, m1, 20.0);
    EXPECT_NEAR(expectation_power(ObservableKind::field, 2, x, src, m1, 20.0, q), C + phi * phi, 1e-12 * C);
}

TEST(ShiftRule, SourcePartsVanishSpacelike)
{
    const auto src = pulse();
    const auto obs = ObservableSpec::energy_density(1.0);
    for (double r = 5.3; r < 9.0; r += 0.5) {
        const Event x{3.0, {r, 0, 0}};
        for (auto kind : {ObservableKind::field, ObservableKind::dt, ObservableKind::grad})
            for (int n = 0; n <= 4; ++n)
                EXPECT_EQ(expectation_power(kind, n, x, src, m1, 20.0, q), wick_vacuum_moment(kind, n, m1, 20.0));
        EXPECT_EQ(expectation_observable(obs, x, src, m1, 20.0, q).source_part, 0.0);
        EXPECT_EQ(energy_density_expectation(x, src, m1, 20.0, q).source_part, 0.0);
    }
}

TEST(Observable, SingleFieldTermAndEnergyDensity)
{
    const auto src = pulse();
    const Event x{3.5, {0.5, 0.2, 0}};
    ObservableSpec phi;
    phi.terms.push_back({1, 0, 0, 0, 1.0});
    EXPECT_NEAR(expectation_observable(phi, x, src, m1, 20.0, q).source_part,
                retarded_field(x, src, m1, q).value, 1e-15);
    const auto a = expectation_observable(ObservableSpec::energy_density(1.0), x, src, m1, 20.0, q);
    const auto b = energy_density_expectation(x, src, m1, 20.0, q);
    EXPECT_NEAR(a.vacuum, b.vacuum, 1e-12 * b.vacuum);
    EXPECT_NEAR(a.source_part, b.source_part, 1e-10 * b.vacuum);
    EXPECT_NEAR(energy_density_expectation(x, src, FieldParams(1.0, 0.0), 20.0, q).source_part, 0.0, 0.0);
}

TEST(Observable, MixedTermFactorizes)
{
    const auto src = pulse();
    const Event x{3.5, {0.5, 0.2, 0}};
    const auto jet = retarded_jet(x, src, m1, q);
    ObservableSpec o;
    o.terms.push_back({2, 1, 1, 2, 0.5});
    const double want = 0.5 * expectation_power(ObservableKind::field, 2, jet, m1, 20.0) *
                        expectation_power(ObservableKind::dt, 1, jet, m1, 20.0) *
                        expectation_power(ObservableKind::grad, 1, jet, m1, 20.0, 2);
    EXPECT_NEAR(expectation_observable(o, jet, m1, 20.0).total, want, 1e-14 * std::abs(want));
    o.terms.push_back({4, 2, 1, 0, 1.0});
    EXPECT_THROW(expectation_observable(o, jet, m1, 20.0), InvalidArgument);
}

TEST(Observable, CrossMomentDiagnostic)
{
    EXPECT_NEAR(factorization_cross_moment(2.0).imag(), 8.0 / (12.0 * pi * pi), 1e-15);
    EXPECT_EQ(factorization_cross_moment(2.0).real(), 0.0);
}

TEST(TwoPointCorrelation, ProductAndVacuum)
{
    const auto src = pulse();
    const Event x{3.5, {0.5, 0, 0}}, xp{4.0, {-0.3, 0.2, 0}};
    const auto tp = two_point_correlation(x, xp, src, m1, q);
    const double prod = retarded_field(x, src, m1, q).value * retarded_field(xp, src, m1, q).value;
    EXPECT_NEAR(tp.source_part, prod, 1e-10 * std::abs(prod));
    const Event far{3.0, {7.0, 0, 0}};
    const auto tf = two_point_correlation(x, far, src, m1, q);
    EXPECT_EQ(tf.source_part, 0.0);
    EXPECT_GT(std::abs(tf.vacuum), 0.0);
}

#pragma once

// Classical sources j(x) with compact spacetime support.
//
// Every extended component is spherically symmetric about its own spatial
// centre, so all spatial integrals reduce to radial ones. A SourceModel is a
// superposition of components; a single component is the common case.

#include <algorithm>
#include <cmath>
#include <limits>
#include <json.hpp>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "qftlab/core.hpp"
#include "qftlab/quadrature.hpp"

namespace qftlab {

/// j(x) = strength * delta^4(x - y).
struct PointSpacetime {
    Event y;
    double strength = 1.0;

    PointSpacetime(Event y_, double strength_) : y(y_), strength(strength_)
    {
        detail::require(y.finite() && std::isfinite(strength), "PointSpacetime: non-finite input");
        detail::require(y.t > 0.0, "PointSpacetime: event must lie after t = 0 (source off initially)");
    }
};

/// Gaussian pulse A exp(-|x-c|^2 / 2 sx^2) exp(-(t-tc)^2 / 2 st^2), zero outside
/// the ball |x-c| < n_sigma sx and the window |t-tc| < n_sigma st.
class GaussianPulse {
public:
    GaussianPulse(Event center, double sigma_x, double sigma_t, double amplitude, double n_sigma = 6.0)
        : center_(center), sigma_x_(sigma_x), sigma_t_(sigma_t), amplitude_(amplitude), n_sigma_(n_sigma)
    {
        detail::require(center.finite() && std::isfinite(amplitude), "GaussianPulse: non-finite input");
        detail::require(sigma_x > 0.0 && sigma_t > 0.0, "GaussianPulse: widths must be positive");
        detail::require(n_sigma > 0.0, "GaussianPulse: n_sigma must be positive");
        // the window must close by t = 0 so that j(., 0) = 0
        center_.t = std::max(center_.t, n_sigma_ * sigma_t_);
    }

    const Event& center() const { return center_; }
    const Vec3& spatial_center() const { return center_.x; }
    double sigma_x() const { return sigma_x_; }
    double sigma_t() const { return sigma_t_; }
    double amplitude() const { return amplitude_; }
    double n_sigma() const { return n_sigma_; }
    double rho_max() const { return n_sigma_ * sigma_x_; }
    double t_lo() const { return center_.t - n_sigma_ * sigma_t_; }
    double t_hi() const { return center_.t + n_sigma_ * sigma_t_; }

    double time_profile(double t) const
    {
        const double u = t - center_.t;
        if (!(std::abs(u) < n_sigma_ * sigma_t_)) return 0.0;
        return std::exp(-0.5 * u * u / (sigma_t_ * sigma_t_));
    }

    double radial_profile(double rho) const
    {
        if (!(rho < rho_max())) return 0.0;
        return amplitude_ * std::exp(-0.5 * rho * rho / (sigma_x_ * sigma_x_));
    }

    double value(double rho, double t) const { return radial_profile(rho) * time_profile(t); }

    /// P / R with P = int_{|R-s|}^{min(R+s, rho_max)} rho j(rho, t) d rho; finite as R -> 0.
    double shell_moment_over_r(double R, double s, double t) const
    {
        const double T = time_profile(t);
        if (T == 0.0) return 0.0;
        const double s2 = sigma_x_ * sigma_x_;
        const double lo = std::abs(R - s);
        const double rm = rho_max();
        if (!(lo < rm)) return 0.0;
        double P;
        if (R + s <= rm) {
            // A s2 [e^{-(R-s)^2/2s2} - e^{-(R+s)^2/2s2}] / R = 2 A s e^{-(R^2+s^2)/2s2} sinh(Rs/s2)/(Rs/s2)
            const double z = R * s / s2;
            const double shc = z < 1e-6 ? 1.0 + z * z / 6.0 : std::sinh(z) / z;
            return amplitude_ * T * 2.0 * s * std::exp(-0.5 * (R * R + s * s) / s2) * shc;
        }
        P = amplitude_ * s2 * (std::exp(-0.5 * lo * lo / s2) - std::exp(-0.5 * rm * rm / s2));
        return T * P / std::max(R, 1e-300);
    }

    /// Spatial Fourier transform of the radial profile: int d^3x A e^{...} e^{-ik.(x-c)}.
    double spatial_ft(double k) const
    {
        const double rm = rho_max();
        const double width = std::min(0.5 * sigma_x_, k > 0.0 ? pi / k : rm);
        const int panels = std::max(1, static_cast<int>(std::ceil(rm / width)));
        auto f = [&](double rho) {
            const double kr = k * rho;
            const double sinc = kr < 1e-8 ? 1.0 : std::sin(kr) / kr;
            return rho * rho * radial_profile(rho) * sinc;
        };
        return 4.0 * pi * quad::integrate<16>(f, 0.0, rm, panels);
    }

private:
    Event center_;
    double sigma_x_;
    double sigma_t_;
    double amplitude_;
    double n_sigma_;
};

/// Radially symmetric table j(rho, t) about a spatial centre.
/// values[i][j] is j(r[j], t[i]); zero outside the table.
class Tabulated {
public:
    Tabulated(Vec3 center, std::vector<double> r, std::vector<double> t, std::vector<std::vector<double>> values,
              bool interpolate = true)
        : center_(center), r_(std::move(r)), t_(std::move(t)), v_(std::move(values)), interpolate_(interpolate)
    {
        detail::require(all_finite(center_), "Tabulated: non-finite centre");
        detail::require(r_.size() >= 2 && t_.size() >= 2, "Tabulated: need at least 2 nodes per axis");
        detail::require(r_.front() == 0.0, "Tabulated: radial grid must start at 0");
        for (std::size_t i = 1; i < r_.size(); ++i)
            detail::require(r_[i] > r_[i - 1], "Tabulated: radial grid must increase");
        for (std::size_t i = 1; i < t_.size(); ++i)
            detail::require(t_[i] > t_[i - 1], "Tabulated: time grid must increase");
        detail::require(t_.front() >= 0.0, "Tabulated: table must start at t >= 0");
        detail::require(v_.size() == t_.size(), "Tabulated: one row per time node");
        for (const auto& row : v_) {
            detail::require(row.size() == r_.size(), "Tabulated: one value per radial node");
            for (double x : row) detail::require(std::isfinite(x), "Tabulated: non-finite sample");
        }
        if (t_.front() == 0.0)
            for (double x : v_.front())
                detail::require(x == 0.0, "Tabulated: j(., 0) must vanish (source off initially)");
    }

    const Vec3& spatial_center() const { return center_; }
    double rho_max() const { return r_.back(); }
    double t_lo() const { return t_.front(); }
    double t_hi() const { return t_.back(); }
    bool interpolates() const { return interpolate_; }
    const std::vector<double>& r_nodes() const { return r_; }
    const std::vector<double>& t_nodes() const { return t_; }
    const std::vector<std::vector<double>>& values() const { return v_; }

    double value(double rho, double t) const
    {
        if (rho > rho_max() || t < t_lo() || t > t_hi()) return 0.0;
        if (!interpolate_) {
            const auto i = exact_index(t_, t);
            const auto j = exact_index(r_, rho);
            if (!i || !j) throw InvalidArgument("Tabulated: off-grid query with interpolation disabled");
            return v_[*i][*j];
        }
        const auto [i, wt] = bracket(t_, t);
        return (1.0 - wt) * row_value(i, rho) + wt * row_value(i + 1, rho);
    }

    /// P / R, see GaussianPulse::shell_moment_over_r; exact for the piecewise-linear rows.
    double shell_moment_over_r(double R, double s, double t) const
    {
        require_interpolation();
        if (t < t_lo() || t > t_hi()) return 0.0;
        const double rm = rho_max();
        if (R < 1e-9) return s < rm ? 2.0 * s * value(s, t) : 0.0;
        const double a = std::abs(R - s);
        const double b = std::min(R + s, rm);
        if (!(b > a)) return 0.0;
        const auto [i, wt] = bracket(t_, t);
        return ((1.0 - wt) * row_first_moment(i, a, b) + wt * row_first_moment(i + 1, a, b)) / R;
    }

    /// Spatial Fourier transform at time t (linear in t between rows).
    double spatial_ft(double k, double t) const
    {
        require_interpolation();
        if (t < t_lo() || t > t_hi()) return 0.0;
        const auto [i, wt] = bracket(t_, t);
        return (1.0 - wt) * row_ft(i, k) + wt * row_ft(i + 1, k);
    }

    double row_ft(std::size_t row, double k) const
    {
        double sum = 0.0;
        for (std::size_t j = 0; j + 1 < r_.size(); ++j) {
            const double a = r_[j];
            const double b = r_[j + 1];
            const double va = v_[row][j];
            const double vb = v_[row][j + 1];
            if (va == 0.0 && vb == 0.0) continue;
            if (k * b < 1.0) {
                auto f = [&](double rho) {
                    const double kr = k * rho;
                    const double sinc = kr < 1e-8 ? 1.0 : std::sin(kr) / kr;
                    const double w = (rho - a) / (b - a);
                    return rho * rho * ((1.0 - w) * va + w * vb) * sinc;
                };
                sum += quad::integrate<8>(f, a, b, 1);
                continue;
            }
            // (1/k) int (c0 rho + c1 rho^2) sin(k rho)
            const double c1 = (vb - va) / (b - a);
            const double c0 = va - c1 * a;
            auto prim = [&](double x) {
                const double s = std::sin(k * x), c = std::cos(k * x);
                const double p1 = s / (k * k) - x * c / k;
                const double p2 = 2.0 * x * s / (k * k) + (2.0 / (k * k * k) - x * x / k) * c;
                return c0 * p1 + c1 * p2;
            };
            sum += (prim(b) - prim(a)) / k;
        }
        return 4.0 * pi * sum;
    }

private:
    static std::optional<std::size_t> exact_index(const std::vector<double>& g, double x)
    {
        for (std::size_t i = 0; i < g.size(); ++i)
            if (std::abs(g[i] - x) <= 1e-12 * std::max(1.0, std::abs(x))) return i;
        return std::nullopt;
    }

    // Interval index i with g[i] <= x <= g[i+1] and the fractional weight of g[i+1].
    static std::pair<std::size_t, double> bracket(const std::vector<double>& g, double x)
    {
        auto it = std::upper_bound(g.begin(), g.end(), x);
        std::size_t i = it == g.begin() ? 0 : static_cast<std::size_t>(it - g.begin()) - 1;
        i = std::min(i, g.size() - 2);
        const double w = (x - g[i]) / (g[i + 1] - g[i]);
        return {i, std::clamp(w, 0.0, 1.0)};
    }

    double row_value(std::size_t row, double rho) const
    {
        const auto [j, w] = bracket(r_, rho);
        return (1.0 - w) * v_[row][j] + w * v_[row][j + 1];
    }

    // int_a^b rho j_row(rho) d rho for the piecewise-linear row
    double row_first_moment(std::size_t row, double a, double b) const
    {
        double sum = 0.0;
        for (std::size_t j = 0; j + 1 < r_.size(); ++j) {
            const double lo = std::max(a, r_[j]);
            const double hi = std::min(b, r_[j + 1]);
            if (!(hi > lo)) continue;
            const double slope = (v_[row][j + 1] - v_[row][j]) / (r_[j + 1] - r_[j]);
            const double c0 = v_[row][j] - slope * r_[j];
            // int rho (c0 + slope rho) = c0 rho^2/2 + slope rho^3/3
            sum += c0 * 0.5 * (hi * hi - lo * lo) + slope * (hi * hi * hi - lo * lo * lo) / 3.0;
        }
        return sum;
    }

    void require_interpolation() const
    {
        if (!interpolate_)
            throw InvalidArgument("Tabulated: integrals over the table require interpolation enabled");
    }

    Vec3 center_;
    std::vector<double> r_;
    std::vector<double> t_;
    std::vector<std::vector<double>> v_;
    bool interpolate_;
};

using SourceComponent = std::variant<PointSpacetime, GaussianPulse, Tabulated>;

/// Spacetime bounding box of the support.
struct SupportBox {
    double t_lo = 0.0;
    double t_hi = 0.0;
    Vec3 x_lo{};
    Vec3 x_hi{};
};

namespace detail {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

} // namespace detail

inline Vec3 spatial_center(const SourceComponent& c)
{
    return std::visit(detail::overloaded{[](const PointSpacetime& p) { return p.y.x; },
                                         [](const auto& e) { return e.spatial_center(); }},
                      c);
}

inline double rho_max(const SourceComponent& c)
{
    return std::visit(detail::overloaded{[](const PointSpacetime&) { return 0.0; },
                                         [](const auto& e) { return e.rho_max(); }},
                      c);
}

inline std::pair<double, double> time_window(const SourceComponent& c)
{
    return std::visit(detail::overloaded{[](const PointSpacetime& p) { return std::pair{p.y.t, p.y.t}; },
                                         [](const auto& e) { return std::pair{e.t_lo(), e.t_hi()}; }},
                      c);
}

/// Superposition of source components; immutable after construction.
class SourceModel {
public:
    SourceModel() = default;
    explicit SourceModel(std::vector<SourceComponent> components) : components_(std::move(components))
    {
        detail::require(!components_.empty(), "SourceModel: at least one component required");
    }
    SourceModel(SourceComponent c) : components_{std::move(c)} {}

    static SourceModel point(Event y, double strength = 1.0) { return SourceModel(PointSpacetime(y, strength)); }
    static SourceModel gaussian(Event center, double sigma_x, double sigma_t, double amplitude = 1.0,
                                double n_sigma = 6.0)
    {
        return SourceModel(GaussianPulse(center, sigma_x, sigma_t, amplitude, n_sigma));
    }

    const std::vector<SourceComponent>& components() const { return components_; }

    bool has_point_component() const
    {
        return std::any_of(components_.begin(), components_.end(),
                           [](const auto& c) { return std::holds_alternative<PointSpacetime>(c); });
    }

    /// True when every component is extended and all share one spatial centre.
    bool rotationally_symmetric() const
    {
        if (components_.empty() || has_point_component()) return false;
        const Vec3 c0 = spatial_center(components_.front());
        return std::all_of(components_.begin(), components_.end(),
                           [&](const auto& c) { return norm(spatial_center(c) - c0) == 0.0; });
    }

    /// j(x); point components contribute nothing pointwise.
    double eval(const Event& x) const
    {
        if (!x.finite()) throw InvalidArgument("source_eval: non-finite event");
        double sum = 0.0;
        for (const auto& c : components_) {
            sum += std::visit(detail::overloaded{[](const PointSpacetime&) { return 0.0; },
                                                 [&](const auto& e) {
                                                     return e.value(norm(x.x - e.spatial_center()), x.t);
                                                 }},
                              c);
        }
        return sum;
    }

    SupportBox support_box() const
    {
        SupportBox box;
        box.t_lo = std::numeric_limits<double>::infinity();
        box.t_hi = -box.t_lo;
        for (int d = 0; d < 3; ++d) {
            box.x_lo[d] = std::numeric_limits<double>::infinity();
            box.x_hi[d] = -box.x_lo[d];
        }
        for (const auto& c : components_) {
            const auto [lo, hi] = time_window(c);
            box.t_lo = std::min(box.t_lo, lo);
            box.t_hi = std::max(box.t_hi, hi);
            const Vec3 ctr = spatial_center(c);
            const double rm = rho_max(c);
            for (int d = 0; d < 3; ++d) {
                box.x_lo[d] = std::min(box.x_lo[d], ctr[d] - rm);
                box.x_hi[d] = std::max(box.x_hi[d], ctr[d] + rm);
            }
        }
        return box;
    }

    /// Whether x lies in the causal future of the support (with a margin widening it).
    bool in_causal_future(const Event& x, double margin = 0.0) const
    {
        for (const auto& c : components_) {
            const auto [lo, hi] = time_window(c);
            (void)hi;
            const double dist = std::max(0.0, norm(x.x - spatial_center(c)) - rho_max(c));
            if (x.t - lo + margin >= dist) return true;
        }
        return false;
    }

private:
    std::vector<SourceComponent> components_;
};

inline double source_eval(const SourceModel& src, const Event& x) { return src.eval(x); }

// ---------------------------------------------------------------------------
// JSON

namespace detail {

inline Event event_from_json(const nlohmann::json& j, const char* what)
{
    if (!j.is_array() || j.size() != 4) throw InvalidArgument(std::string(what) + ": expected [t,x,y,z]");
    return Event{j[0].get<double>(), {j[1].get<double>(), j[2].get<double>(), j[3].get<double>()}};
}

inline Vec3 vec3_from_json(const nlohmann::json& j, const char* what)
{
    if (!j.is_array() || j.size() != 3) throw InvalidArgument(std::string(what) + ": expected [x,y,z]");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline nlohmann::json component_to_json(const SourceComponent& c)
{
    return std::visit(
        overloaded{[](const PointSpacetime& p) {
                       return nlohmann::json{{"type", "point"},
                                             {"y", {p.y.t, p.y.x[0], p.y.x[1], p.y.x[2]}},
                                             {"strength", p.strength}};
                   },
                   [](const GaussianPulse& g) {
                       const auto& e = g.center();
                       return nlohmann::json{{"type", "gaussian"},
                                             {"center", {e.t, e.x[0], e.x[1], e.x[2]}},
                                             {"sigma_x", g.sigma_x()},
                                             {"sigma_t", g.sigma_t()},
                                             {"amplitude", g.amplitude()},
                                             {"n_sigma", g.n_sigma()}};
                   },
                   [](const Tabulated& t) {
                       const auto& c = t.spatial_center();
                       return nlohmann::json{{"type", "tabulated"},
                                             {"center", {c[0], c[1], c[2]}},
                                             {"r", t.r_nodes()},
                                             {"t", t.t_nodes()},
                                             {"values", t.values()},
                                             {"interpolate", t.interpolates()}};
                   }},
        c);
}

inline SourceComponent component_from_json(const nlohmann::json& j)
{
    try {
        const std::string type = j.at("type").get<std::string>();
        if (type == "point")
            return PointSpacetime(event_from_json(j.at("y"), "point.y"), j.value("strength", 1.0));
        if (type == "gaussian")
            return GaussianPulse(event_from_json(j.at("center"), "gaussian.center"), j.at("sigma_x").get<double>(),
                                 j.at("sigma_t").get<double>(), j.value("amplitude", 1.0), j.value("n_sigma", 6.0));
        if (type == "tabulated")
            return Tabulated(vec3_from_json(j.value("center", nlohmann::json::array({0.0, 0.0, 0.0})),
                                            "tabulated.center"),
                             j.at("r").get<std::vector<double>>(), j.at("t").get<std::vector<double>>(),
                             j.at("values").get<std::vector<std::vector<double>>>(), j.value("interpolate", true));
        throw InvalidArgument("source: unknown type '" + type + "'");
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("source: malformed JSON: ") + e.what());
    }
}

} // namespace detail

inline nlohmann::json to_json(const SourceModel& s)
{
    if (s.components().size() == 1) return detail::component_to_json(s.components().front());
    nlohmann::json comps = nlohmann::json::array();
    for (const auto& c : s.components()) comps.push_back(detail::component_to_json(c));
    return nlohmann::json{{"type", "sum"}, {"components", comps}};
}

inline SourceModel source_from_json(const nlohmann::json& j)
{
    if (j.is_object() && j.value("type", std::string{}) == "sum") {
        std::vector<SourceComponent> comps;
        if (!j.contains("components") || !j["components"].is_array())
            throw InvalidArgument("source: 'sum' needs a 'components' array");
        for (const auto& c : j["components"]) comps.push_back(detail::component_from_json(c));
        return SourceModel(std::move(comps));
    }
    return SourceModel(detail::component_from_json(j));
}

} // namespace qftlab

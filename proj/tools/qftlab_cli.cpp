// qftlab command-line front-end.
//
//   qftlab <command> [flags]      command: propagator nw evolve causality-scan oracle-compare moments
//
// Exit codes: 0 ok, 2 invalid input, 3 convergence failure or oracle mismatch,
// 4 causality violation.

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include "qftlab/qftlab.hpp"

namespace {

using json = nlohmann::json;
using namespace qftlab;

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 2;
constexpr int kExitConvergence = 3;
constexpr int kExitCausality = 4;

class OracleMismatch : public Error {
public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// parsing helpers

std::vector<double> split_numbers(const std::string& s, char sep)
{
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) {
        if (item.empty()) continue;
        std::size_t pos = 0;
        double v = 0.0;
        try {
            v = std::stod(item, &pos);
        } catch (const std::exception&) {
            throw InvalidArgument("not a number: '" + item + "'");
        }
        if (pos != item.size()) throw InvalidArgument("not a number: '" + item + "'");
        out.push_back(v);
    }
    return out;
}

/// "a:b:step" or a single value.
json parse_range(const std::string& s)
{
    const auto v = split_numbers(s, ':');
    if (v.size() == 1) return json::array({v[0], v[0], 1.0});
    if (v.size() != 3 || !(v[2] > 0.0) || v[1] < v[0]) throw InvalidArgument("range must be a:b:step with b >= a, step > 0");
    return json::array({v[0], v[1], v[2]});
}

std::vector<double> expand_range(const json& r)
{
    if (r.is_number()) return {r.get<double>()};
    if (!r.is_array() || r.size() != 3) throw InvalidArgument("range must be [a, b, step]");
    const double a = r[0].get<double>();
    const double b = r[1].get<double>();
    const double h = r[2].get<double>();
    if (!(h > 0.0) || b < a) throw InvalidArgument("range must have b >= a and step > 0");
    std::vector<double> out;
    const auto n = static_cast<long>(std::floor((b - a) / h + 1e-9));
    for (long i = 0; i <= n; ++i) out.push_back(a + static_cast<double>(i) * h);
    return out;
}

json parse_grid(const std::string& s)
{
    const auto v = split_numbers(s, ',');
    if (v.size() != 3) throw InvalidArgument("--grid expects r_max,t_max,dr");
    return json{{"r_max", v[0]}, {"t_max", v[1]}, {"dr", v[2]}};
}

json parse_quad(const std::string& s)
{
    json q = json::object();
    std::stringstream ss(s);
    std::string item;
    int pos = 0;
    while (std::getline(ss, item, ',')) {
        if (item.rfind("eps=", 0) == 0) {
            q["epsilon_list"] = split_numbers(item.substr(4), ':');
            continue;
        }
        const auto v = split_numbers(item, ',');
        if (v.size() != 1) throw InvalidArgument("--quad expects k_max,n_k,eps=a:b:c");
        if (pos == 0) q["k_max"] = v[0];
        else if (pos == 1) q["n_k"] = static_cast<int>(v[0]);
        else throw InvalidArgument("--quad expects k_max,n_k,eps=a:b:c");
        ++pos;
    }
    return q;
}

QuadratureConfig quadrature_from(const json& d)
{
    QuadratureConfig q;
    if (d.contains("quadrature")) {
        const auto& j = d["quadrature"];
        q.k_max = j.value("k_max", q.k_max);
        q.n_k = j.value("n_k", q.n_k);
        if (j.contains("epsilon_list")) q.epsilon_list = j["epsilon_list"].get<std::vector<double>>();
        q.extrapolation_order = j.value("extrapolation_order", std::min<int>(q.extrapolation_order,
                                                                             static_cast<int>(q.epsilon_list.size()) - 1));
        q.abs_tol = j.value("abs_tol", q.abs_tol);
        q.rel_tol = j.value("rel_tol", q.rel_tol);
    }
    q.validate();
    return q;
}

FieldParams field_from(const json& d)
{
    const auto& f = d.at("field_params");
    return FieldParams(f.value("mass", 1.0), f.value("coupling", 1.0));
}

double cutoff_from(const json& d, const FieldParams& fp)
{
    return d.contains("cutoff") ? d["cutoff"].get<double>() : 50.0 * std::max(fp.mass, 1.0);
}

SourceModel source_from(const json& d)
{
    if (!d.contains("source")) throw InvalidArgument("this command requires --source");
    return source_from_json(d["source"]);
}

double source_start(const SourceModel& s)
{
    double lo = 1e300;
    for (const auto& c : s.components()) lo = std::min(lo, time_window(c).first);
    return lo;
}

double source_end(const SourceModel& s)
{
    double hi = -1e300;
    for (const auto& c : s.components()) hi = std::max(hi, time_window(c).second);
    return hi;
}

double source_extent(const SourceModel& s)
{
    double rm = 0.0;
    for (const auto& c : s.components()) rm = std::max(rm, rho_max(c));
    return rm;
}

GridSpec grid_from(const json& d, const SourceModel& src)
{
    double t_max = source_end(src) + 3.0;
    double dr = 0.01;
    double r_max = -1.0;
    if (d.contains("grid")) {
        const auto& g = d["grid"];
        t_max = g.value("t_max", t_max);
        dr = g.value("dr", dr);
        r_max = g.value("r_max", r_max);
    }
    if (r_max < 0.0) r_max = t_max - std::max(0.0, source_start(src)) + source_extent(src) + 2.0;
    return grid_from_env(r_max, t_max, dr);
}

/// Work items run on a pool; results land in index order.
template <class F>
void parallel_for(std::size_t n, unsigned threads, F&& f)
{
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                f(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------
// commands

struct Outcome {
    io::Table table;
    json summary = json::object();
    int exit_code = kExitOk;
};

std::vector<std::string> quantities_from(const json& d, std::vector<std::string> fallback)
{
    if (d.contains("quantities")) return d["quantities"].get<std::vector<std::string>>();
    return fallback;
}

Outcome cmd_propagator(const json& d, unsigned threads)
{
    const auto fp = field_from(d);
    const auto q = quadrature_from(d);
    const auto qs = quantities_from(d, {"wightman"});
    const auto scan = d.value("scan", std::string("equal-time"));
    std::vector<double> ts = d.contains("t") ? expand_range(d["t"]) : std::vector<double>{0.0};
    if (scan == "equal-time") {
        if (d.contains("t") && !(ts.size() == 1 && ts[0] == 0.0))
            throw InvalidArgument("--scan equal-time takes no --t");
        ts = {0.0};
    } else if (scan != "grid") {
        throw InvalidArgument("--scan must be equal-time or grid");
    }
    if (!d.contains("r")) throw InvalidArgument("propagator requires --r a:b:step");
    const auto rs = expand_range(d["r"]);

    struct Item {
        double t, r;
        std::string quantity;
    };
    std::vector<Item> items;
    for (const auto& name : qs)
        for (double t : ts)
            for (double r : rs) items.push_back({t, r, name});
    std::vector<std::array<double, 3>> out(items.size());
    parallel_for(items.size(), threads, [&](std::size_t i) {
        const auto& it = items[i];
        const auto sep = FourSep::radial(it.t, it.r);
        if (it.quantity == "wightman") {
            const auto w = wightman(sep, fp, q);
            out[i] = {w.value.real(), w.value.imag(), w.residual};
        } else if (it.quantity == "wightman_dt") {
            const auto w = wightman_dt(sep, fp, q);
            out[i] = {w.value.real(), w.value.imag(), w.residual};
        } else if (it.quantity == "closed_form") {
            if (it.t != 0.0) throw InvalidArgument("closed_form is an equal-time quantity");
            out[i] = {equal_time_closed_form(it.r, fp.mass), 0.0, 0.0};
        } else if (it.quantity == "pauli_jordan" || it.quantity == "retarded") {
            const auto v = it.quantity == "retarded" ? retarded(sep, fp, q) : pauli_jordan(sep, fp, q);
            out[i] = {v.interior, v.cone_coeff, v.residual};
        } else if (it.quantity == "feynman") {
            const auto v = feynman(sep, fp, q);
            out[i] = {v.real(), v.imag(), 0.0};
        } else {
            throw InvalidArgument("unknown propagator quantity '" + it.quantity + "'");
        }
    });
    Outcome o{io::Table({"sep_t", "sep_r", "mass", "quantity", "value_re", "value_im", "residual"})};
    for (std::size_t i = 0; i < items.size(); ++i)
        o.table.add({items[i].t, items[i].r, fp.mass, items[i].quantity, out[i][0], out[i][1], out[i][2]});
    return o;
}

Outcome cmd_nw(const json& d, unsigned threads)
{
    const auto fp = field_from(d);
    const auto q = quadrature_from(d);
    const auto qs = quantities_from(d, {"nw_kernel"});
    const std::vector<double> ts = d.contains("t") ? expand_range(d["t"]) : std::vector<double>{0.0};
    if (!d.contains("r")) throw InvalidArgument("nw requires --r a:b:step");
    const auto rs = expand_range(d["r"]);

    struct Item {
        double t, r;
        std::string quantity;
    };
    std::vector<Item> items;
    for (const auto& name : qs)
        for (double t : ts)
            for (double r : rs) items.push_back({t, r, name});
    std::vector<std::array<double, 3>> out(items.size());
    std::vector<std::optional<std::array<double, 3>>> extra(items.size());
    parallel_for(items.size(), threads, [&](std::size_t i) {
        const auto& it = items[i];
        if (it.quantity == "nw_kernel") {
            const auto v = nw_kernel(it.r, fp, q);
            out[i] = {v.value, 0.0, v.residual};
        } else if (it.quantity == "nw_psi") {
            const auto v = nw_wavefunction(FourSep::radial(it.t, it.r), fp, q);
            out[i] = {v.value.real(), v.value.imag(), v.residual};
        } else if (it.quantity == "nw_overlap") {
            const auto v = nw_unequal_time_overlap(FourSep::radial(it.t, it.r), fp, q);
            out[i] = {v.value.real(), v.value.imag(), v.error};
        } else if (it.quantity == "h_localized") {
            const auto e = energy_density_on_localized_state(Event::radial(it.t, it.r), Event{}, fp,
                                                             cutoff_from(d, fp), q);
            out[i] = {e.subtracted, 0.0, 0.0};
            extra[i] = std::array<double, 3>{e.vacuum_part, e.raw, 0.0};
        } else {
            throw InvalidArgument("unknown nw quantity '" + it.quantity + "'");
        }
    });
    Outcome o{io::Table({"sep_t", "sep_r", "mass", "quantity", "value_re", "value_im", "residual"})};
    for (std::size_t i = 0; i < items.size(); ++i) {
        o.table.add({items[i].t, items[i].r, fp.mass, items[i].quantity, out[i][0], out[i][1], out[i][2]});
        if (extra[i]) {
            o.table.add({items[i].t, items[i].r, fp.mass, std::string("h_localized_vacuum"), (*extra[i])[0], 0.0, 0.0});
            o.table.add({items[i].t, items[i].r, fp.mass, std::string("h_localized_raw"), (*extra[i])[1], 0.0, 0.0});
        }
    }
    return o;
}

struct OutputRequest {
    std::string quantity;
    std::vector<Event> points;
};

std::vector<OutputRequest> evolve_requests(const json& d, const SourceModel& src)
{
    std::vector<OutputRequest> reqs;
    const Vec3 c = spatial_center(src.components().front());
    auto scan_points = [&](const json& t, const json& r) {
        std::vector<Event> pts;
        for (double tt : expand_range(t))
            for (double rr : expand_range(r)) pts.push_back(Event{tt, c + Vec3{rr, 0.0, 0.0}});
        return pts;
    };
    if (d.contains("outputs")) {
        for (const auto& o : d["outputs"]) {
            OutputRequest rq;
            rq.quantity = o.at("quantity").get<std::string>();
            if (o.contains("points")) {
                for (const auto& p : o["points"]) {
                    if (!p.is_array() || p.size() != 4) throw InvalidArgument("points must be [t,x,y,z]");
                    rq.points.push_back(Event{p[0].get<double>(), {p[1].get<double>(), p[2].get<double>(),
                                                                   p[3].get<double>()}});
                }
            } else if (o.contains("scan")) {
                rq.points = scan_points(o["scan"].at("t"), o["scan"].at("r"));
            } else {
                throw InvalidArgument("each output needs 'points' or 'scan'");
            }
            reqs.push_back(std::move(rq));
        }
        return reqs;
    }
    if (!d.contains("t") || !d.contains("r")) throw InvalidArgument("evolve requires --t and --r or an outputs list");
    for (const auto& name : quantities_from(d, {"retarded_field"})) reqs.push_back({name, scan_points(d["t"], d["r"])});
    return reqs;
}

Outcome cmd_evolve(const json& d, unsigned threads, const std::string& history_path)
{
    const auto fp = field_from(d);
    const auto q = quadrature_from(d);
    const auto src = source_from(d);
    const double cutoff = cutoff_from(d, fp);
    const auto backend = d.value("backend", std::string("quadrature"));
    if (backend != "quadrature" && backend != "lattice") throw InvalidArgument("--backend must be quadrature or lattice");
    const auto reqs = evolve_requests(d, src);

    std::optional<LatticeHistory> hist;
    std::optional<RetardedField> lattice_field;
    if (backend == "lattice") {
        hist = solve_radial_kg(src, fp, grid_from(d, src));
        lattice_field = to_retarded_field(*hist);
        if (!history_path.empty()) {
            io::Table h({"t", "r", "phi"});
            for (std::size_t i = 0; i < hist->t.size(); ++i)
                for (std::size_t j = 0; j < hist->r.size(); ++j) h.add({hist->t[i], hist->r[j], hist->phi[i][j]});
            std::ofstream os(history_path);
            if (!os) throw InvalidArgument("cannot write " + history_path);
            h.write_csv(os, io::config_hash(d));
        }
    } else if (!history_path.empty()) {
        throw InvalidArgument("--history requires --backend lattice");
    }

    struct Row {
        double value = 0.0, vacuum = 0.0, source = 0.0, residual = 0.0;
    };
    Outcome o{io::Table({"quantity", "t", "x", "y", "z", "value", "vacuum_part", "source_part", "backend", "residual"})};
    for (const auto& rq : reqs) {
        std::vector<Row> rows(rq.points.size());
        const std::string& name = rq.quantity;
        const bool per_time = name == "alpha" || name == "xi" || name == "norm2";
        const bool is_psi = name == "psi_re" || name == "psi_im";
        std::map<double, std::unique_ptr<SingleParticleField>> psi_fields;
        if (is_psi) {
            std::map<double, double> reach;
            for (const auto& p : rq.points) reach[p.t] = std::max(reach[p.t], max_center_distance(src, p.x));
            for (const auto& [t, r] : reach) psi_fields[t] = std::make_unique<SingleParticleField>(src, fp, q, t, r);
        }
        parallel_for(rq.points.size(), threads, [&](std::size_t i) {
            const Event& x = rq.points[i];
            Row& row = rows[i];
            if (per_time) {
                if (name == "norm2") row.value = mode_amplitude(src, fp, x.t, q).norm2;
                else if (name == "alpha") row.value = alpha(src, fp, x.t, q).real();
                else row.value = xi(src, fp, x.t, q).imag();
                row.source = row.value;
                return;
            }
            if (is_psi) {
                const auto v = (*psi_fields.at(x.t))(x.x);
                row.value = name == "psi_re" ? v.real() : v.imag();
                row.source = row.value;
                return;
            }
            FieldJet jet;
            if (lattice_field) {
                const double r = norm(x.x - hist->center);
                jet.phi = lattice_field->value(x.t, r);
                jet.dt = lattice_field->dt(x.t, r);
                const Vec3 dx = x.x - hist->center;
                for (int a = 0; a < 3; ++a) jet.grad[a] = r > 0.0 ? lattice_field->dr(x.t, r) * dx[a] / r : 0.0;
                jet.error = lattice_field->error_estimate();
            } else if (name == "retarded_field") {
                const auto v = retarded_field(x, src, fp, q);
                jet.phi = v.value;
                jet.error = v.error;
            } else {
                jet = retarded_jet(x, src, fp, q);
            }
            row.residual = jet.error;
            if (name == "retarded_field") {
                row.value = row.source = jet.phi;
            } else if (name == "dt_field") {
                row.value = row.source = jet.dt;
            } else if (name == "energy_density") {
                const auto e = energy_density_expectation(jet, fp, cutoff);
                row.vacuum = e.vacuum;
                row.source = e.source_part;
                row.value = e.vacuum + e.source_part;
            } else if (name == "phi2" || name == "phi3" || name == "phi4") {
                const int n = name[3] - '0';
                row.value = expectation_power(ObservableKind::field, n, jet, fp, cutoff);
                row.vacuum = wick_vacuum_moment(ObservableKind::field, n, fp, cutoff);
                row.source = row.value - row.vacuum;
            } else {
                throw InvalidArgument("unknown evolve quantity '" + name + "'");
            }
        });
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const auto& x = rq.points[i];
            o.table.add({name, x.t, x.x[0], x.x[1], x.x[2], rows[i].value, rows[i].vacuum, rows[i].source,
                         std::string(per_time || is_psi ? "quadrature" : backend), rows[i].residual});
        }
    }
    return o;
}

Outcome cmd_causality(const json& d)
{
    const auto fp = field_from(d);
    const auto src = source_from(d);
    const double tol = d.value("tol", 1e-6);
    const auto h = solve_radial_kg(src, fp, grid_from(d, src));
    const auto rep = causal_support_scan(h, src, tol);
    Outcome o{io::Table({"metric", "value"})};
    o.table.add({std::string("checked"), static_cast<double>(rep.checked)});
    o.table.add({std::string("violations"), static_cast<double>(rep.violations.size())});
    o.table.add({std::string("max_abs"), rep.max_abs});
    o.table.add({std::string("max_outside"), rep.max_outside});
    o.table.add({std::string("tol"), tol});
    json v = json::array();
    for (const auto& x : rep.violations) v.push_back({{"t", x.t}, {"r", x.r}, {"phi", x.phi}});
    o.summary = json{{"checked", rep.checked}, {"violations", v}, {"max_abs", rep.max_abs},
                     {"max_outside", rep.max_outside}, {"tol", tol}};
    if (!rep.violations.empty()) {
        for (const auto& x : rep.violations)
            std::cerr << "causality violation at t=" << x.t << " r=" << x.r << " phi=" << x.phi << '\n';
        o.exit_code = kExitCausality;
    }
    return o;
}

Outcome cmd_oracle(const json& d, unsigned threads)
{
    const auto fp = field_from(d);
    const auto q = quadrature_from(d);
    const auto src = source_from(d);
    const double tol = d.value("tol", 1e-3);
    const auto grid = grid_from(d, src);
    auto fine_grid = grid;
    fine_grid.dr *= 0.5;
    fine_grid.dt_step *= 0.5;
    const auto coarse = solve_radial_kg(src, fp, grid);
    const auto fine = solve_radial_kg(src, fp, fine_grid);
    const double t = grid.t_max;
    const double reach = std::min(t - source_start(src) + source_extent(src), grid.r_max);
    const int npts = d.value("points", 41);
    std::vector<double> rs;
    for (int i = 0; i < npts; ++i) rs.push_back(reach * i / (npts - 1));
    const Vec3 c = spatial_center(src.components().front());
    std::vector<double> quadv(rs.size());
    parallel_for(rs.size(), threads, [&](std::size_t i) {
        quadv[i] = retarded_field(Event{t, c + Vec3{rs[i], 0.0, 0.0}}, src, fp, q).value;
    });
    double peak = 0.0;
    for (double v : quadv) peak = std::max(peak, std::abs(v));
    Outcome o{io::Table({"t", "r", "quadrature", "lattice", "lattice_richardson", "deviation"})};
    double dev = 0.0;
    for (std::size_t i = 0; i < rs.size(); ++i) {
        const double l1 = coarse.value(t, rs[i]);
        const double l2 = fine.value(t, rs[i]);
        const double rich = (4.0 * l2 - l1) / 3.0;
        const double e = std::abs(rich - quadv[i]);
        dev = std::max(dev, e);
        o.table.add({t, rs[i], quadv[i], l2, rich, e});
    }
    const double rel = peak > 0.0 ? dev / peak : dev;
    o.summary = json{{"max_rel_dev", rel}, {"peak", peak}, {"tol", tol}, {"dr", grid.dr}};
    std::cerr << "max_rel_dev=" << io::format_number(rel) << '\n';
    if (!(rel <= tol)) o.exit_code = kExitConvergence;
    return o;
}

Outcome cmd_moments(const json& d)
{
    const auto fp = field_from(d);
    const double cutoff = cutoff_from(d, fp);
    const int max_n = d.value("max_n", 6);
    if (max_n < 0) throw InvalidArgument("--max-n must be >= 0");
    Outcome o{io::Table({"kind", "n", "mass", "cutoff", "value"})};
    for (auto kind : {ObservableKind::field, ObservableKind::dt, ObservableKind::grad})
        for (int n = 0; n <= max_n; ++n)
            o.table.add({std::string(to_string(kind)), static_cast<double>(n), fp.mass, cutoff,
                         wick_vacuum_moment(kind, n, fp, cutoff)});
    return o;
}

json read_json_file(const std::string& path)
{
    std::ifstream is(path);
    if (!is) throw InvalidArgument("cannot read " + path);
    try {
        return json::parse(is);
    } catch (const json::exception& e) {
        throw InvalidArgument(path + ": " + e.what());
    }
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"qftlab: scalar field propagators, localization and driven-field numerics"};
    app.require_subcommand(0, 1);

    std::string descriptor_path, source_path, grid_s, quad_s, out_path, format = "csv", scan, r_s, t_s, backend;
    std::string history_path;
    std::vector<std::string> quantities;
    std::optional<double> mass, coupling, cutoff, tol;
    std::optional<int> max_n;
    unsigned threads = std::max(1u, std::thread::hardware_concurrency());

    app.add_option("--descriptor", descriptor_path, "JSON run descriptor");
    auto add_common = [&](CLI::App* sc) {
        sc->add_option("--mass", mass, "field mass m >= 0");
        sc->add_option("--coupling", coupling, "source coupling g");
        sc->add_option("--cutoff", cutoff, "momentum cutoff for vacuum moments");
        sc->add_option("--source", source_path, "source JSON file");
        sc->add_option("--grid", grid_s, "lattice grid r_max,t_max,dr");
        sc->add_option("--quad", quad_s, "quadrature k_max,n_k,eps=a:b:c");
        sc->add_option("--out", out_path, "output file (default stdout)");
        sc->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
        sc->add_option("--threads", threads, "worker threads");
        sc->add_option("--descriptor", descriptor_path, "JSON run descriptor");
    };
    std::vector<CLI::App*> subs;
    for (const char* name : {"propagator", "nw", "evolve", "causality-scan", "oracle-compare", "moments"}) {
        auto* sc = app.add_subcommand(name);
        add_common(sc);
        subs.push_back(sc);
    }
    for (auto* sc : {subs[0], subs[1]}) {
        sc->add_option("--scan", scan, "equal-time or grid");
        sc->add_option("--r", r_s, "separation range a:b:step");
        sc->add_option("--t", t_s, "time separation range a:b:step");
        sc->add_option("--quantity", quantities, "quantities to emit");
    }
    subs[2]->add_option("--r", r_s, "radius range from the source centre a:b:step");
    subs[2]->add_option("--t", t_s, "time range a:b:step");
    subs[2]->add_option("--quantity", quantities, "quantities to emit");
    subs[2]->add_option("--backend", backend, "quadrature or lattice");
    subs[2]->add_option("--history", history_path, "write the lattice history (t, r, phi) here");
    subs[3]->add_option("--tol", tol, "relative tolerance");
    subs[4]->add_option("--tol", tol, "relative tolerance on max deviation");
    subs[5]->add_option("--max-n", max_n, "highest moment order");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitInvalid;
    }

    try {
        json d = descriptor_path.empty() ? json::object() : read_json_file(descriptor_path);
        std::string command = d.value("command", std::string{});
        for (auto* sc : subs)
            if (sc->parsed()) command = sc->get_name();
        if (command.empty()) throw InvalidArgument("no command given (or 'command' in the descriptor)");
        d["command"] = command;
        if (!d.contains("field_params")) d["field_params"] = json::object();
        if (mass) d["field_params"]["mass"] = *mass;
        if (coupling) d["field_params"]["coupling"] = *coupling;
        if (!d["field_params"].contains("mass")) d["field_params"]["mass"] = 1.0;
        if (!d["field_params"].contains("coupling")) d["field_params"]["coupling"] = 1.0;
        if (cutoff) d["cutoff"] = *cutoff;
        if (tol) d["tol"] = *tol;
        if (max_n) d["max_n"] = *max_n;
        if (!source_path.empty()) d["source"] = read_json_file(source_path);
        if (!grid_s.empty()) d["grid"] = parse_grid(grid_s);
        if (!quad_s.empty()) d["quadrature"] = parse_quad(quad_s);
        if (!scan.empty()) d["scan"] = scan;
        if (!r_s.empty()) d["r"] = parse_range(r_s);
        if (!t_s.empty()) d["t"] = parse_range(t_s);
        if (!quantities.empty()) d["quantities"] = quantities;
        if (!backend.empty()) d["backend"] = backend;
        if (d.contains("format") && format == "csv") format = d["format"].get<std::string>();
        if (d.contains("out") && out_path.empty()) out_path = d["out"].get<std::string>();
        d.erase("out");
        d.erase("format");
        if (const char* env = std::getenv("CFL_OVERRIDE")) d["cfl_override"] = env;

        Outcome o{io::Table({})};
        if (command == "propagator") o = cmd_propagator(d, threads);
        else if (command == "nw") o = cmd_nw(d, threads);
        else if (command == "evolve") o = cmd_evolve(d, threads, history_path);
        else if (command == "causality-scan") o = cmd_causality(d);
        else if (command == "oracle-compare") o = cmd_oracle(d, threads);
        else if (command == "moments") o = cmd_moments(d);
        else throw InvalidArgument("unknown command '" + command + "'");

        const std::string hash = io::config_hash(d);
        std::ofstream file;
        if (!out_path.empty()) {
            file.open(out_path);
            if (!file) throw InvalidArgument("cannot write " + out_path);
        }
        std::ostream& os = out_path.empty() ? std::cout : file;
        if (format == "json") {
            auto j = o.table.to_json(hash);
            if (!o.summary.empty()) j["summary"] = o.summary;
            os << j.dump(2) << '\n';
        } else {
            o.table.write_csv(os, hash);
        }
        return o.exit_code;
    } catch (const ConvergenceError& e) {
        std::cerr << "convergence failure: " << e.what() << '\n';
        return kExitConvergence;
    } catch (const CausalityViolation& e) {
        std::cerr << "causality violation: " << e.what() << '\n';
        return kExitCausality;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInvalid;
    } catch (const json::exception& e) {
        std::cerr << "error: malformed descriptor: " << e.what() << '\n';
        return kExitInvalid;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInvalid;
    }
}

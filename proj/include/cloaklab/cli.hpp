#pragma once
// Command-line front end. Every option lives on the top-level app so that a
// flat `key = value` config file can set any of them; subcommands only select
// the action. Flags given on the command line override file values.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cloaklab/cloak.hpp"
#include "cloaklab/experiments.hpp"
#include "cloaklab/lippmann.hpp"
#include "cloaklab/modesolver.hpp"
#include "cloaklab/radial.hpp"
#include "cloaklab/specfun.hpp"
#include "cloaklab/teig.hpp"

namespace cloaklab::cli {

using json = nlohmann::ordered_json;

enum class Command { Scatter, Sweep, LsCheck, TeigScan, TeigRoots, TeigAccum, RegionGrid, Selftest };

inline const char* command_name(Command c) {
    switch (c) {
    case Command::Scatter: return "scatter";
    case Command::Sweep: return "sweep";
    case Command::LsCheck: return "ls-check";
    case Command::TeigScan: return "teig-scan";
    case Command::TeigRoots: return "teig-roots";
    case Command::TeigAccum: return "teig-accum";
    case Command::RegionGrid: return "region-grid";
    case Command::Selftest: return "selftest";
    }
    return "?";
}

struct Range {
    double lo = 0.0, hi = 0.0;
};

/// "a:b" with a < b.
inline Range parse_range(const std::string& s, const std::string& what) {
    const auto c = s.find(':');
    if (c == std::string::npos) throw ValidationError(what + ": expected lo:hi, got '" + s + "'");
    Range r;
    try {
        std::size_t used = 0;
        const std::string a = s.substr(0, c), b = s.substr(c + 1);
        r.lo = std::stod(a, &used);
        if (used != a.size()) throw std::invalid_argument(a);
        r.hi = std::stod(b, &used);
        if (used != b.size()) throw std::invalid_argument(b);
    } catch (const std::exception&) {
        throw ValidationError(what + ": cannot read '" + s + "' as lo:hi");
    }
    if (!(r.lo < r.hi)) throw ValidationError(what + ": need lo < hi in '" + s + "'");
    return r;
}

/// A scan line "im=<value>" (horizontal) or "re=<value>" (vertical).
struct LineSpec {
    bool fixed_imag = true;
    double value = 0.0;
};

inline LineSpec parse_line(const std::string& s) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ValidationError("line: expected im=<v> or re=<v>, got '" + s + "'");
    std::string key = s.substr(0, eq), val = s.substr(eq + 1);
    key.erase(0, key.find_first_not_of(' '));
    key.erase(key.find_last_not_of(' ') + 1);
    LineSpec l;
    if (key == "im") l.fixed_imag = true;
    else if (key == "re") l.fixed_imag = false;
    else throw ValidationError("line: unknown coordinate '" + key + "' (use im or re)");
    try {
        std::size_t used = 0;
        l.value = std::stod(val, &used);
        if (val.find_first_not_of(' ', used) != std::string::npos) throw std::invalid_argument(val);
    } catch (const std::exception&) {
        throw ValidationError("line: cannot read value in '" + s + "'");
    }
    return l;
}

struct RunConfig {
    Command command = Command::Selftest;
    CloakParams cloak;

    // scattering
    double k = 1.0;
    double R = 3.0;
    int truncation = 0;
    std::string incident = "plane";
    int far_samples = 73;
    double rtol = 1e-13;

    // Lippmann-Schwinger
    int nodes = 128;
    int panel = 32;
    double ls_tol = 1e-9;
    double max_norm = 0.9;

    // sweep
    std::vector<double> eps_list{0.1, 0.05, 0.025, 0.0125};
    std::vector<double> k_list{0.5, 1.0, 2.0};
    double c_star = 1.0;
    std::string law = "auto";
    int ls_every = 0;
    bool t_norm = true;
    double contraction_threshold = 0.5;
    double slope_lo = 0.8, slope_hi = 1.2;
    double band3 = 10.0, band2 = 3.0;

    // transmission eigenvalues and region grid
    std::vector<int> n;
    std::string line;
    std::string re, im;
    double step = 0.0;
    double residual_tol = 1e-10;
    double outer_half_width = 0.4;
    double guard = 1e-3;
    double shrink = 0.5;

    int workers = 1;
    std::string out, json_path, manifest;

    /// Fills command-dependent defaults (n list, step, ranges).
    void resolve() {
        if (n.empty()) n = command == Command::TeigAccum ? std::vector<int>{1, 7, 12} : std::vector<int>{1};
        if (step == 0.0) step = command == Command::RegionGrid ? 0.02 : 0.002;
        if (command == Command::RegionGrid) {
            if (re.empty()) re = "-3:3";
            if (im.empty()) im = "-3:1";
        }
        if (command == Command::TeigScan && line.empty()) line = "im=-0.47";
        if (command == Command::TeigScan && re.empty() && im.empty()) re = "1.7:2.1";
    }

    /// Throws ValidationError listing every problem found.
    void validate() const {
        std::ostringstream msg;
        try {
            cloak.validate();
        } catch (const ValidationError& e) {
            msg << ' ' << e.what();
        }
        auto need = [&](bool ok, const std::string& text) {
            if (!ok) msg << ' ' << text << ';';
        };
        need(workers == 1, "workers must be 1 (this build evaluates on a single thread)");
        need(k > 0.0, "k must be positive");
        need(R > 2.0, "R must exceed 2");
        need(truncation >= 0, "truncation must be non-negative");
        need(incident == "plane", "incident must be 'plane'");
        need(far_samples >= 2, "far_samples must be at least 2");
        need(rtol > 0.0 && rtol < 1e-3, "rtol must lie in (0, 1e-3)");
        need(nodes >= 8, "nodes must be at least 8");
        need(panel >= 4 && panel <= nodes, "panel must lie in [4, nodes]");
        need(ls_tol > 0.0, "ls_tol must be positive");
        need(max_norm > 0.0 && max_norm < 1.0, "max_norm must lie in (0, 1)");
        for (double e : eps_list) need(e > 0.0 && e < 1.0, "eps_list entries must lie in (0, 1)");
        for (double kk : k_list) need(kk > 0.0, "k_list entries must be positive");
        need(c_star > 0.0, "c_star must be positive");
        need(law == "auto" || law == "cubic" || law == "log", "law must be auto, cubic or log");
        need(ls_every >= 0, "ls_every must be non-negative");
        need(slope_lo < slope_hi, "slope_lo must be below slope_hi");
        need(band3 > 1.0 && band2 > 1.0, "bands must exceed 1");
        for (int v : n) need(v >= 0, "n entries must be non-negative");
        need(step > 0.0, "step must be positive");
        need(residual_tol > 0.0, "residual_tol must be positive");
        need(outer_half_width > guard && guard > 0.0, "need 0 < guard < outer_half_width");
        need(shrink > 0.0 && shrink < 1.0, "shrink must lie in (0, 1)");
        auto range_ok = [&](const std::string& s, const char* what) {
            if (s.empty()) return;
            try {
                parse_range(s, what);
            } catch (const ValidationError& e) {
                msg << ' ' << e.what() << ';';
            }
        };
        range_ok(re, "re");
        range_ok(im, "im");
        if (command == Command::TeigScan) {
            try {
                const auto l = parse_line(line);
                need(!(l.fixed_imag ? re : im).empty(),
                     std::string("teig-scan needs --") + (l.fixed_imag ? "re" : "im") + " for the free coordinate");
            } catch (const ValidationError& e) {
                msg << ' ' << e.what() << ';';
            }
        }
        if (command == Command::TeigRoots) need(!re.empty() && !im.empty(), "teig-roots needs --re and --im");
        if (!msg.str().empty()) throw ValidationError("invalid configuration:" + msg.str());
    }
};

namespace detail {

inline std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.16e", v);
    return buf;
}

inline std::string echo_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <class T>
std::string echo_list(const std::vector<T>& v) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ", ";
        if constexpr (std::is_same_v<T, double>) s += echo_num(v[i]);
        else s += std::to_string(v[i]);
    }
    return s + "]";
}

inline std::string quoted(const std::string& s) { return "\"" + s + "\""; }

} // namespace detail

/// The resolved configuration as config-file lines; feeding these back
/// through --config reproduces the run.
inline std::vector<std::pair<std::string, std::string>> resolved_entries(const RunConfig& c) {
    using namespace detail;
    return {
        {"eps", echo_num(c.cloak.eps)},
        {"k_eps", echo_num(c.cloak.k_eps)},
        {"dim", std::to_string(c.cloak.dim)},
        {"sigma_off", c.cloak.sigma_off ? "true" : "false"},
        {"k", echo_num(c.k)},
        {"R", echo_num(c.R)},
        {"truncation", std::to_string(c.truncation)},
        {"incident", quoted(c.incident)},
        {"far_samples", std::to_string(c.far_samples)},
        {"rtol", echo_num(c.rtol)},
        {"nodes", std::to_string(c.nodes)},
        {"panel", std::to_string(c.panel)},
        {"ls_tol", echo_num(c.ls_tol)},
        {"max_norm", echo_num(c.max_norm)},
        {"eps_list", echo_list(c.eps_list)},
        {"k_list", echo_list(c.k_list)},
        {"c_star", echo_num(c.c_star)},
        {"law", quoted(c.law)},
        {"ls_every", std::to_string(c.ls_every)},
        {"t_norm", c.t_norm ? "true" : "false"},
        {"contraction_threshold", echo_num(c.contraction_threshold)},
        {"slope_lo", echo_num(c.slope_lo)},
        {"slope_hi", echo_num(c.slope_hi)},
        {"band3", echo_num(c.band3)},
        {"band2", echo_num(c.band2)},
        {"n", echo_list(c.n)},
        {"line", quoted(c.line)},
        {"re", quoted(c.re)},
        {"im", quoted(c.im)},
        {"step", echo_num(c.step)},
        {"residual_tol", echo_num(c.residual_tol)},
        {"outer_half_width", echo_num(c.outer_half_width)},
        {"guard", echo_num(c.guard)},
        {"shrink", echo_num(c.shrink)},
        {"workers", std::to_string(c.workers)},
    };
}

/// "# key = value" block opening every CSV and text output.
inline void write_metadata(std::ostream& os, const RunConfig& c) {
    os << "# cloaklab " << command_name(c.command) << "\n";
    for (const auto& [k, v] : resolved_entries(c)) os << "# " << k << " = " << v << "\n";
    os << "# determinant_normalization = \"column-max then row-max\"\n";
}

inline json metadata_json(const RunConfig& c) {
    json j;
    j["command"] = command_name(c.command);
    json cfg = json::object();
    for (const auto& [k, v] : resolved_entries(c)) cfg[k] = v;
    j["config"] = cfg;
    return j;
}

inline json cplx_json(cplx z) { return json::array({z.real(), z.imag()}); }

// ---------------------------------------------------------------- commands

inline void cmd_scatter(const RunConfig& c, std::ostream& os) {
    SolveOptions so;
    so.N = c.truncation;
    so.R_eval = std::max(c.R, 5.0);
    so.radial.rtol = c.rtol;
    const auto sol = solve(c.k, c.cloak, so);
    json j = metadata_json(c);
    j["k"] = c.k;
    j["N"] = sol.N;
    j["tail_estimate"] = sol.tail_estimate;
    json modes = json::array();
    for (const auto& m : sol.modes)
        modes.push_back({{"n", m.index}, {"s", cplx_json(m.s)}, {"alpha", cplx_json(m.alpha)},
                         {"beta", cplx_json(m.beta)}, {"condition_number", m.condition_number},
                         {"residual", m.residual}, {"near_resonance", m.near_resonance}});
    j["modes"] = modes;
    j["norms"] = {{"l2_2_R", l2_scattered_norm(sol, 2.0, c.R)}, {"l2_2_5", l2_scattered_norm(sol, 2.0, 5.0)}};
    json far = json::array();
    const double span = c.cloak.dim == 2 ? 2.0 * pi : pi;
    const int m = c.far_samples;
    for (int i = 0; i < m; ++i) {
        const double th = c.cloak.dim == 2 ? span * i / m : span * i / (m - 1);
        const cplx u = far_field(sol, th);
        far.push_back({{"theta", th}, {"re", u.real()}, {"im", u.imag()}, {"abs", std::abs(u)}});
    }
    j["far_field"] = far;
    os << j.dump(2) << "\n";
}

inline void cmd_ls_check(const RunConfig& c, std::ostream& os) {
    SolveOptions so;
    so.N = c.truncation;
    so.R_eval = c.R;
    so.radial.rtol = c.rtol;
    const auto sol = solve(c.k, c.cloak, so);
    LSOptions lo;
    lo.modal.nodes = c.nodes;
    lo.modal.panel = c.panel;
    lo.tol = c.ls_tol;
    lo.max_norm = c.max_norm;
    lo.R = c.R;
    const auto ls = ls_solve(c.k, c.cloak, incident_coeffs(c.k, sol.N, c.cloak.dim), lo);
    json j = metadata_json(c);
    j["N"] = sol.N;
    j["t_norm"] = ls.t_norm;
    j["iterations"] = ls.iterations;
    j["residuals"] = ls.residuals;
    j["relative_l2_difference"] = relative_l2_difference(sol, ls.scattered, 2.0, c.R);
    os << j.dump(2) << "\n";
}

inline std::vector<double> grid_axis(const Range& r, double step) {
    const int m = static_cast<int>(std::floor((r.hi - r.lo) / step + 1e-9)) + 1;
    std::vector<double> v(m);
    for (int i = 0; i < m; ++i) {
        v[i] = r.lo + i * step;
        if (std::abs(v[i]) < 1e-9 * step) v[i] = 0.0;
    }
    return v;
}

inline void cmd_teig_scan(const RunConfig& c, std::ostream& os) {
    const auto l = parse_line(c.line);
    const Range r = parse_range(l.fixed_imag ? c.re : c.im, l.fixed_imag ? "re" : "im");
    RadialOptions ro;
    ro.rtol = c.rtol;
    write_metadata(os, c);
    os << "n,re_k,im_k,re_f,im_f,abs_f\n";
    const auto axis = grid_axis(r, c.step);
    for (int n : c.n) {
        for (double t : axis) {
            const cplx k = l.fixed_imag ? cplx(t, l.value) : cplx(l.value, t);
            const auto s = det_f(n, k, c.cloak, ro);
            using detail::num;
            os << n << ',' << num(k.real()) << ',' << num(k.imag()) << ',' << num(s.f.real()) << ','
               << num(s.f.imag()) << ',' << num(std::abs(s.f)) << "\n";
        }
    }
}

inline json root_json(const RootRecord& r) {
    return {{"n", r.n}, {"k", cplx_json(r.k_root)}, {"residual", r.residual},
            {"newton_iters", r.newton_iters}, {"multiplicity", r.multiplicity}};
}

inline void cmd_teig_roots(const RunConfig& c, std::ostream& os) {
    const Range rr = parse_range(c.re, "re"), ri = parse_range(c.im, "im");
    const Box box{{rr.lo, ri.lo}, {rr.hi, ri.hi}};
    RootOptions opt;
    opt.radial.rtol = c.rtol;
    opt.residual_tol = c.residual_tol;
    opt.pole_margin = c.guard;
    json j = metadata_json(c);
    j["box"] = {{"re", {rr.lo, rr.hi}}, {"im", {ri.lo, ri.hi}}};
    json modes = json::array();
    for (int n : c.n) {
        const auto rep = mirror_check(n, box, c.cloak, opt);
        json roots = json::array(), mirror = json::array();
        for (const auto& r : rep.roots) roots.push_back(root_json(r));
        for (const auto& r : rep.mirror_roots) mirror.push_back(root_json(r));
        modes.push_back({{"n", n}, {"winding", det_winding(n, box, c.cloak, opt)}, {"roots", roots},
                         {"mirror_roots", mirror}, {"mirror_counts_match", rep.counts_match},
                         {"max_mirror_mismatch", rep.counts_match ? json(rep.max_mismatch) : json(nullptr)}});
    }
    j["modes"] = modes;
    os << j.dump(2) << "\n";
}

inline void cmd_teig_accum(const RunConfig& c, std::ostream& os) {
    AccumulationOptions ao;
    ao.roots.radial.rtol = c.rtol;
    ao.roots.residual_tol = c.residual_tol;
    ao.outer_half_width = c.outer_half_width;
    ao.guard = c.guard;
    ao.shrink = c.shrink;
    const auto t = accumulation_study(c.n, c.cloak, ao);
    json j = metadata_json(c);
    j["kappa"] = cplx_json(t.kappa);
    json rows = json::array();
    for (const auto& r : t.rows)
        rows.push_back({{"n", r.n}, {"found", r.found}, {"k_n", cplx_json(r.k_n)}, {"distance", r.distance},
                        {"residual", r.residual}, {"roots_seen", r.roots_seen}});
    j["rows"] = rows;
    j["monotone"] = t.monotone;
    os << j.dump(2) << "\n";
}

inline void cmd_region_grid(const RunConfig& c, std::ostream& os) {
    const auto xs = grid_axis(parse_range(c.re, "re"), c.step);
    const auto ys = grid_axis(parse_range(c.im, "im"), c.step);
    write_metadata(os, c);
    os << "re_k,im_k,label,uncovered\n";
    for (double b : ys)
        for (double a : xs) {
            const auto lab = classify_k({a, b}, c.cloak);
            os << detail::num(a) << ',' << detail::num(b) << ',' << region_name(lab.tag) << ','
               << (lab.uncovered ? 1 : 0) << "\n";
        }
}

inline ResonanceLaw law_of(const std::string& s) {
    if (s == "cubic") return ResonanceLaw::Cubic;
    if (s == "log") return ResonanceLaw::Log;
    return ResonanceLaw::Auto;
}

inline json criterion(const std::string& id, double value, double lo, double hi) {
    return {{"id", id}, {"value", value}, {"lo", lo}, {"hi", hi}, {"pass", value >= lo && value <= hi}};
}

/// Fits, bands and pass/fail entries for a finished sweep.
inline json sweep_summary(const RunConfig& c, const std::vector<SweepRow>& rows) {
    json fits = json::array(), checks = json::array();
    const int dim = c.cloak.dim;
    for (double k : c.k_list) {
        std::vector<SweepRow> sub;
        for (const auto& r : rows)
            if (r.k == k) sub.push_back(r);
        for (auto q : {RateQuantity::NormS, RateQuantity::FarMax}) {
            const std::string qn = q == RateQuantity::NormS ? "norm_s" : "far_max";
            try {
                if (dim == 3) {
                    const auto f = fit_rate(sub, RateTransform::LogEps, q);
                    fits.push_back({{"k", k}, {"quantity", qn}, {"transform", "log_eps"}, {"slope", f.slope},
                                    {"intercept", f.intercept}, {"r_squared", f.r_squared},
                                    {"points_used", f.points_used}});
                    checks.push_back(criterion("slope_" + qn + "_k=" + detail::echo_num(k), f.slope, c.slope_lo,
                                               c.slope_hi));
                } else {
                    const auto f = fit_inverse_log(sub, q);
                    const auto g = fit_rate(sub, RateTransform::LogLogInvEps, q);
                    fits.push_back({{"k", k}, {"quantity", qn}, {"transform", "inverse_log_origin"},
                                    {"coefficient", f.coefficient},
                                    {"max_relative_residual", f.max_relative_residual},
                                    {"loglog_slope", g.slope}, {"r_squared", g.r_squared},
                                    {"points_used", f.points_used}});
                    checks.push_back(criterion("origin_fit_residual_" + qn + "_k=" + detail::echo_num(k),
                                               f.max_relative_residual, 0.0, 0.5));
                }
            } catch (const ValidationError& e) {
                fits.push_back({{"k", k}, {"quantity", qn}, {"error", e.what()}});
                checks.push_back({{"id", "fit_" + qn + "_k=" + detail::echo_num(k)}, {"pass", false},
                                  {"error", e.what()}});
            }
        }
    }
    if (dim == 2) {
        std::vector<double> sn, sf;
        for (const auto& r : rows) {
            if (r.flagged) continue;
            sn.push_back(r.norm_s * std::abs(std::log(r.eps)));
            sf.push_back(r.far_max * std::abs(std::log(r.eps)));
        }
        checks.push_back(criterion("band_norm_s_log_eps", band(sn), 1.0, c.band2));
        checks.push_back(criterion("band_far_max_log_eps", band(sf), 1.0, c.band2));
    }
    const auto cons = estimate_consistency_check(rows, c.R);
    checks.push_back(criterion("consistency_C_band", cons.band, 1.0, c.band3));
    const auto ff = far_field_bound_check(rows);
    checks.push_back(criterion("far_field_bound_band", ff.band, 1.0, c.band3));
    checks.push_back(criterion("far_field_path_gap", ff.path_gap, 0.0, 1e-6));
    int flagged = 0;
    for (const auto& r : rows) flagged += r.flagged;
    json j = metadata_json(c);
    j["rows"] = rows.size();
    j["flagged_rows"] = flagged;
    j["fits"] = fits;
    j["consistency"] = {{"C", cons.C}, {"band", cons.band}};
    j["far_field_bound"] = {{"ratio", ff.ratio}, {"band", ff.band}, {"path_gap", ff.path_gap}};
    bool all = true;
    for (const auto& ch : checks) all = all && ch.value("pass", false);
    j["checks"] = checks;
    j["pass"] = all;
    return j;
}

inline void cmd_sweep(const RunConfig& c, std::ostream& os) {
    SweepOptions so;
    so.dim = c.cloak.dim;
    so.eps_list = c.eps_list;
    so.k_list = c.k_list;
    so.c_star = c.c_star;
    so.law = law_of(c.law);
    so.R = c.R;
    so.compute_t_norm = c.t_norm;
    so.contraction_threshold = c.contraction_threshold;
    so.ls_every = c.ls_every;
    so.sigma_off = c.cloak.sigma_off;
    so.far_samples = std::max(c.far_samples, 2);
    const auto rows = run_sweep(so);
    write_metadata(os, c);
    os << "dim,eps,k,k_eps,norm_s,norm_s5,far_max,far_max_bi,t_norm,M,a,ls_rel_diff,flagged\n";
    using detail::num;
    for (const auto& r : rows)
        os << r.dim << ',' << num(r.eps) << ',' << num(r.k) << ',' << num(r.k_eps) << ',' << num(r.norm_s) << ','
           << num(r.norm_s5) << ',' << num(r.far_max) << ',' << num(r.far_max_bi) << ',' << num(r.t_norm) << ','
           << num(r.M) << ',' << num(r.a) << ',' << num(r.ls_rel_diff) << ',' << (r.flagged ? 1 : 0) << "\n";
    const json summary = sweep_summary(c, rows);
    if (!c.json_path.empty()) {
        std::ofstream f(c.json_path);
        if (!f) throw ValidationError("cannot open " + c.json_path);
        f << summary.dump(2) << "\n";
    }
    if (!c.manifest.empty()) {
        std::ofstream f(c.manifest);
        if (!f) throw ValidationError("cannot open " + c.manifest);
        json m = metadata_json(c);
        m["criteria"] = summary["checks"];
        m["pass"] = summary["pass"];
        f << m.dump(2) << "\n";
    }
}

// ---------------------------------------------------------------- selftest

struct SelfCheck {
    std::string name;
    bool pass = false;
    std::string detail;
};

inline std::vector<SelfCheck> selftest_checks() {
    std::vector<SelfCheck> out;
    auto add = [&](const std::string& name, auto&& fn) {
        SelfCheck c{name};
        try {
            const auto [ok, d] = fn();
            c.pass = ok;
            c.detail = d;
        } catch (const std::exception& e) {
            c.detail = std::string("threw: ") + e.what();
        }
        out.push_back(c);
    };
    auto fmt = [](const char* label, double v) { return std::string(label) + " " + detail::num(v); };

    add("wronskian_identities", [&] {
        const auto w = specfun::wronskian_suite(200, 20);
        return std::pair{std::max(w.max_cyl, w.max_sph) < 1e-10, fmt("max residual", std::max(w.max_cyl, w.max_sph))};
    });
    add("whittaker_vs_radial_ode", [&] {
        const double g = whittaker_ode_gap(0, 1.0, CloakParams{0.5, 2.0, 2});
        return std::pair{g < 1e-8, fmt("gap", g)};
    });
    add("soft_ball_reduction", [&] {
        double worst = 0.0;
        for (int d : {2, 3}) {
            CloakParams p{0.5, 2.0, d, true};
            const auto sol = solve(1.0, p);
            const auto ref = small_ball_scatter(1.0, p, incident_coeffs(1.0, sol.N, d));
            double scale = 0.0;
            for (const auto& m : ref.modes) scale = std::max(scale, std::abs(m.s));
            for (std::size_t i = 0; i < sol.modes.size(); ++i)
                worst = std::max(worst, std::abs(sol.modes[i].s - ref.modes[i].s) / scale);
        }
        return std::pair{worst < 1e-12, fmt("max coefficient gap", worst)};
    });
    add("sigma_off_operator_vanishes", [&] {
        const CloakParams p{0.25, 3.0, 2, true};
        const ModalOperator T(1.0, p, 8, ModalOptions{32, 16});
        const double v = t_norm_estimate(T).value;
        return std::pair{v == 0.0, fmt("norm", v)};
    });
    add("modesolver_vs_lippmann_schwinger", [&] {
        CloakParams p{0.25, 0.0, 2};
        p.k_eps = resonance_k_eps(p.eps, 2, 1.0);
        const auto sol = solve(1.0, p);
        LSOptions lo;
        lo.modal = ModalOptions{64, 32};
        const auto ls = ls_solve(1.0, p, incident_coeffs(1.0, sol.N, 2), lo);
        const double d = relative_l2_difference(sol, ls.scattered);
        return std::pair{d < 1e-6, fmt("relative L2 difference", d)};
    });
    add("far_field_paths_agree", [&] {
        const auto sol = solve(1.0, CloakParams{0.5, 2.0, 2});
        double worst = 0.0;
        for (double th : {0.0, 1.0, 2.5}) {
            const cplx a = far_field(sol, th);
            const cplx b = far_field_boundary_integral(sol, direction_at(th, 2));
            worst = std::max(worst, std::abs(a - b) / std::max(std::abs(a), 1e-300));
        }
        return std::pair{worst < 1e-6, fmt("relative gap", worst)};
    });
    add("determinant_mirror_symmetry", [&] {
        const CloakParams p{0.5, 2.0, 2};
        double worst = 0.0;
        for (cplx k : {cplx(1.3, -0.2), cplx(0.4, 0.7), cplx(2.6, -1.1)})
            for (int n : {0, 3}) {
                const double a = std::abs(det_f(n, k, p).f), b = std::abs(det_f(n, -std::conj(k), p).f);
                worst = std::max(worst, std::abs(a - b) / a);
            }
        return std::pair{worst < 1e-10, fmt("relative gap", worst)};
    });
    add("real_axis_no_zero", [&] {
        const auto rep = real_axis_certificate(0.25, 3.0, 4, CloakParams{0.5, 2.0, 2}, 2e-2);
        return std::pair{rep.pass, fmt("min |f|", rep.min_abs_f)};
    });
    add("region_classifier", [&] {
        const CloakParams p{0.5, 2.0, 2};
        const bool ok = classify_k({1.0, -0.25}, p).tag == Region::K_compact &&
                        classify_k({0.1, 2.0}, p).tag == Region::U_vertical &&
                        classify_k({3.0, -0.25}, p).tag == Region::R_right &&
                        classify_k({-3.0, -0.25}, p).tag == Region::L_left;
        return std::pair{ok, std::string("K, U, R, L sample points")};
    });
    return out;
}

inline int cmd_selftest(const RunConfig& c, std::ostream& os) {
    write_metadata(os, c);
    int failed = 0;
    for (const auto& chk : selftest_checks()) {
        os << (chk.pass ? "[PASS] " : "[FAIL] ") << chk.name << "  " << chk.detail << "\n";
        failed += !chk.pass;
    }
    os << (failed ? "selftest: " + std::to_string(failed) + " check(s) failed\n" : "selftest: all checks passed\n");
    return failed ? 2 : 0;
}

// ---------------------------------------------------------------- dispatch

/// Builds the option set. Options carry both dashed and underscored long
/// names so config files can use either spelling.
inline void add_options(CLI::App& app, RunConfig& c) {
    app.add_option("--eps", c.cloak.eps, "cloak parameter eps in (0, 1)");
    app.add_option("--k-eps,--k_eps", c.cloak.k_eps, "resonant frequency of sigma");
    app.add_option("--dim", c.cloak.dim, "2 or 3");
    app.add_flag("--sigma-off,--sigma_off", c.cloak.sigma_off, "force sigma = 0 (soft small ball only)");
    app.add_option("--k", c.k, "wave number");
    app.add_option("--R", c.R, "outer radius of the L2 norm annulus");
    app.add_option("--truncation", c.truncation, "mode truncation override (0 = automatic)");
    app.add_option("--incident", c.incident, "incident field type (plane)");
    app.add_option("--far-samples,--far_samples", c.far_samples, "far-field samples");
    app.add_option("--rtol", c.rtol, "radial ODE relative tolerance");
    app.add_option("--nodes", c.nodes, "radial quadrature nodes for the volume operator");
    app.add_option("--panel", c.panel, "Gauss panel size");
    app.add_option("--ls-tol,--ls_tol", c.ls_tol, "fixed-point stopping tolerance");
    app.add_option("--max-norm,--max_norm", c.max_norm, "refuse fixed-point iteration above this ||T||");
    app.add_option("--eps-list,--eps_list", c.eps_list, "sweep eps values")->delimiter(',');
    app.add_option("--k-list,--k_list", c.k_list, "sweep wave numbers")->delimiter(',');
    app.add_option("--c-star,--c_star", c.c_star, "resonance law constant");
    app.add_option("--law", c.law, "resonance law: auto, cubic, log");
    app.add_option("--ls-every,--ls_every", c.ls_every, "Lippmann-Schwinger cross-check every m-th row");
    app.add_option("--t-norm,--t_norm", c.t_norm, "measure ||T|| per sweep row");
    app.add_option("--contraction-threshold,--contraction_threshold", c.contraction_threshold);
    app.add_option("--slope-lo,--slope_lo", c.slope_lo);
    app.add_option("--slope-hi,--slope_hi", c.slope_hi);
    app.add_option("--band3", c.band3, "max/min band for three-dimensional and consistency checks");
    app.add_option("--band2", c.band2, "max/min band for the 1/|ln eps| check");
    app.add_option("--n", c.n, "mode indices")->delimiter(',');
    app.add_option("--line", c.line, "scan line: im=<v> or re=<v>");
    app.add_option("--re", c.re, "real-part range lo:hi");
    app.add_option("--im", c.im, "imaginary-part range lo:hi");
    app.add_option("--step", c.step, "grid step");
    app.add_option("--residual-tol,--residual_tol", c.residual_tol);
    app.add_option("--outer-half-width,--outer_half_width", c.outer_half_width);
    app.add_option("--guard", c.guard, "exclusion radius around the poles of sigma");
    app.add_option("--shrink", c.shrink, "ring shrink factor for the accumulation study");
    app.add_option("--workers", c.workers, "worker count (recorded; must be 1)");
    app.add_option("--out", c.out, "primary output file (default stdout)");
    app.add_option("--json", c.json_path, "sweep JSON summary file");
    app.add_option("--manifest", c.manifest, "sweep acceptance manifest file");
}

/// Keys of a flat `key = value` file that match no option. Blank lines and
/// `#` comments are skipped; section headers are rejected.
inline std::vector<std::string> unknown_config_keys(const std::string& path, CLI::App& app) {
    std::ifstream f(path);
    if (!f) throw ValidationError("cannot open config file " + path);
    std::vector<std::string> bad;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos || line[b] == '#') continue;
        if (line[b] == '[')
            throw ValidationError(path + ":" + std::to_string(lineno) + ": sections are not supported");
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ValidationError(path + ":" + std::to_string(lineno) + ": expected key = value");
        std::string key = line.substr(b, eq - b);
        key.erase(key.find_last_not_of(" \t") + 1);
        if (!app.get_option_no_throw("--" + key)) bad.push_back(key);
    }
    return bad;
}

/// Parses `args` (without the program name) and runs the command. Exit
/// status: 0 success, 1 validation error, 2 numerical failure.
inline int parse_and_dispatch(const std::vector<std::string>& args, std::ostream& out = std::cout,
                              std::ostream& err = std::cerr) {
    RunConfig c;
    CLI::App app{"cloaklab: dispersive approximate cloaking computations", "cloaklab"};
    app.set_config("--config", "", "flat key = value config file");
    app.allow_config_extras(CLI::config_extras_mode::capture);
    add_options(app, c);
    const std::pair<Command, const char*> cmds[] = {
        {Command::Scatter, "mode-solver scattering solution and far field (JSON)"},
        {Command::Sweep, "eps sweep (CSV rows; --json summary, --manifest)"},
        {Command::LsCheck, "Lippmann-Schwinger solve compared with the mode solver (JSON)"},
        {Command::TeigScan, "transmission determinant along a line (CSV)"},
        {Command::TeigRoots, "roots and mirror roots in a box (JSON)"},
        {Command::TeigAccum, "roots approaching kappa (JSON)"},
        {Command::RegionGrid, "region labels of the complex k plane (CSV)"},
        {Command::Selftest, "invariant suite"},
    };
    std::vector<std::pair<Command, CLI::App*>> subs;
    for (const auto& [cmd, help] : cmds) {
        auto* s = app.add_subcommand(command_name(cmd), help);
        s->fallthrough();
        subs.push_back({cmd, s});
    }
    app.require_subcommand(1);
    // Leftovers are collected and reported together below.
    app.allow_extras(true);
    for (auto& [cmd, sub] : subs) sub->allow_extras(true);

    // Config keys are checked up front so that every offending key is named.
    for (std::size_t i = 0; i < args.size(); ++i) {
        std::string path;
        if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
        if (path.empty()) continue;
        try {
            const auto bad = unknown_config_keys(path, app);
            if (!bad.empty()) {
                err << "cloaklab: validation error: unknown config key(s) in " << path << ":";
                for (const auto& b : bad) err << ' ' << b;
                err << "\n";
                return 1;
            }
        } catch (const ValidationError& e) {
            err << "cloaklab: validation error: " << e.what() << "\n";
            return 1;
        }
    }

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "cloaklab: validation error: " << e.what() << "\n";
        return 1;
    }
    std::vector<std::string> extras;
    for (const auto& [cmd, s] : subs)
        for (const auto& r : s->remaining()) extras.push_back(r);
    for (const auto& r : app.remaining()) extras.push_back(r);
    if (!extras.empty()) {
        err << "cloaklab: validation error: unexpected argument(s):";
        for (const auto& e : extras) err << ' ' << e;
        err << "\n";
        return 1;
    }
    for (const auto& [cmd, s] : subs)
        if (s->parsed()) c.command = cmd;

    try {
        c.resolve();
        c.validate();
        std::ofstream file;
        if (!c.out.empty() && c.out != "-") {
            file.open(c.out);
            if (!file) throw ValidationError("cannot open output file " + c.out);
        }
        std::ostream& os = file.is_open() ? static_cast<std::ostream&>(file) : out;
        switch (c.command) {
        case Command::Scatter: cmd_scatter(c, os); break;
        case Command::Sweep: cmd_sweep(c, os); break;
        case Command::LsCheck: cmd_ls_check(c, os); break;
        case Command::TeigScan: cmd_teig_scan(c, os); break;
        case Command::TeigRoots: cmd_teig_roots(c, os); break;
        case Command::TeigAccum: cmd_teig_accum(c, os); break;
        case Command::RegionGrid: cmd_region_grid(c, os); break;
        case Command::Selftest: return cmd_selftest(c, os);
        }
        return 0;
    } catch (const ValidationError& e) {
        err << "cloaklab: validation error: " << e.what() << "\n";
        return 1;
    } catch (const Error& e) {
        err << "cloaklab: numerical failure: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "cloaklab: failure: " << e.what() << "\n";
        return 2;
    }
}

} // namespace cloaklab::cli

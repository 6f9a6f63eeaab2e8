// Acceptance suite: one [PASS]/[FAIL] line per criterion, details indented
// below it. Exit status is the number of failed criteria (capped at 1).

#include <chrono>
#include <cstdio>
#include <array>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "cloaklab/cli.hpp"
#include "cloaklab/experiments.hpp"
#include "cloaklab/lippmann.hpp"
#include "cloaklab/modesolver.hpp"
#include "cloaklab/radial.hpp"
#include "cloaklab/specfun.hpp"
#include "cloaklab/teig.hpp"

using namespace cloaklab;

namespace {

struct Outcome {
    bool pass = true;
    std::vector<std::string> notes;

    void check(bool ok, const std::string& what) {
        notes.push_back(std::string(ok ? "ok   " : "FAIL ") + what);
        pass = pass && ok;
    }
};

std::string fmt(const char* f, double a) {
    char b[160];
    std::snprintf(b, sizeof b, f, a);
    return b;
}
std::string fmt(const char* f, double a, double c) {
    char b[160];
    std::snprintf(b, sizeof b, f, a, c);
    return b;
}
std::string fmt(const char* f, double a, double c, double d) {
    char b[200];
    std::snprintf(b, sizeof b, f, a, c, d);
    return b;
}

int failures = 0;

void criterion(int id, const std::string& name, double budget_s, const std::function<void(Outcome&)>& body) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        body(o);
    } catch (const std::exception& e) {
        o.check(false, std::string("exception: ") + e.what());
    }
    const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    o.check(t < budget_s, fmt("runtime %.1f s (budget %.0f s)", t, budget_s));
    std::printf("[%s] %d %s\n", o.pass ? "PASS" : "FAIL", id, name.c_str());
    for (const auto& n : o.notes) std::printf("       %s\n", n.c_str());
    std::fflush(stdout);
    failures += !o.pass;
}

CloakParams log_law(double eps) {
    CloakParams p{eps, 0.0, 2};
    p.k_eps = resonance_k_eps(eps, 2, 1.0);
    return p;
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream is(text);
    std::string line;
    bool header = true;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (header) {
            header = false;
            continue;
        }
        std::vector<std::string> f;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) f.push_back(cell);
        rows.push_back(f);
    }
    return rows;
}

std::string run_cli(const std::vector<std::string>& args, int& code) {
    std::ostringstream out, err;
    code = cli::parse_and_dispatch(args, out, err);
    if (code != 0) throw Error("cli " + args[0] + " failed: " + err.str());
    return out.str();
}

} // namespace

int main() {
    std::setvbuf(stdout, nullptr, _IONBF, 0);
    const CloakParams fig{0.5, 2.0, 2};

    criterion(1, "special functions: Wronskians and Whittaker vs radial ODE", 10.0, [&](Outcome& o) {
        const auto w = specfun::wronskian_suite(1000, 20);
        o.check(w.max_cyl < 1e-10, fmt("cylindrical Wronskian max residual %.2e over %g arguments", w.max_cyl, w.arguments));
        o.check(w.max_sph < 1e-10, fmt("spherical Wronskian max residual %.2e", w.max_sph));
        const double g = whittaker_ode_gap(0, 1.0, fig);
        o.check(g < 1e-8, fmt("Whittaker M vs ODE, eps=1/2 k_eps=2 k=1 n=0: %.2e", g));
    });

    criterion(2, "soft-ball reduction with sigma = 0", 5.0, [&](Outcome& o) {
        for (int d : {2, 3})
            for (double eps : {0.5, 0.1})
                for (double k : {1.0, 2.0}) {
                    CloakParams p{eps, 2.0, d, true};
                    const auto sol = solve(k, p);
                    const auto ref = small_ball_scatter(k, p, incident_coeffs(k, sol.N, d));
                    double worst = 0.0, scale = 0.0;
                    for (const auto& m : ref.modes) scale = std::max(scale, std::abs(m.s));
                    for (std::size_t i = 0; i < sol.modes.size(); ++i)
                        worst = std::max(worst, std::abs(sol.modes[i].s - ref.modes[i].s) / scale);
                    o.check(worst < 1e-12, fmt("d=%g eps=%g k=%g", d, eps, k) + fmt(": max gap %.2e", worst));
                }
    });

    criterion(3, "mode solver vs Lippmann-Schwinger, modal vs Nystrom T", 120.0, [&](Outcome& o) {
        const CloakParams p = log_law(0.1);
        const auto sol = solve(1.0, p);
        const auto ls = ls_solve(1.0, p, incident_coeffs(1.0, sol.N, 2));
        const double d = relative_l2_difference(sol, ls.scattered, 2.0, 3.0);
        o.check(d < 1e-3, fmt("relative L2 difference on 2<r<3: %.2e (||T|| = %.4f, %g iterations)", d, ls.t_norm,
                              ls.iterations));
        const double ny = nystrom_vs_modal(1.0, p, 128);
        o.check(ny < 1e-2, fmt("modal vs 128x128 Nystrom T application: %.2e", ny));
    });

    criterion(4, "contraction certificate and norm scaling", 120.0, [&](Outcome& o) {
        {
            const CloakParams p = log_law(0.05);
            const auto t = t_norm_estimate(ModalOperator(1.0, p, default_truncation(1.0, 3.0))).value;
            o.check(t < 0.5, fmt("d=2 eps=0.05 k=1: ||T|| = %.4f", t));
        }
        {
            CloakParams p{0.1, resonance_k_eps(0.1, 3, 1.0), 3};
            const auto t = t_norm_estimate(ModalOperator(1.0, p, default_truncation(1.0, 3.0))).value;
            o.check(t < 0.5, fmt("d=3 eps=0.1 k=1: ||T|| = %.4f", t));
        }
        std::vector<double> ratios;
        for (double eps : {0.1, 0.05, 0.025, 0.01}) {
            const CloakParams p = log_law(eps);
            const double t = t_norm_estimate(ModalOperator(1.0, p, default_truncation(1.0, 3.0))).value;
            const double r = t / (a_factor(1.0, 2) * m_eps_k(1.0, p));
            ratios.push_back(r);
            o.notes.push_back(fmt("     d=2 eps=%g: ||T|| = %.4e, ||T||/(k^2 a M) = %.4f", eps, t, r));
        }
        const double b = band(ratios);
        o.check(b < 4.0, fmt("band of ||T||/(k^2 a M) over eps in [0.01, 0.1]: %.2f (limit 4)", b));
    });

    criterion(5, "no real or imaginary transmission eigenvalues", 60.0, [&](Outcome& o) {
        const auto re = real_axis_certificate(0.25, 6.0, 15, fig, 1e-2, 1e-6);
        o.check(re.pass, fmt("real axis [0.25, 6], n <= 15: min |f| = %.2e at k = %.4f", re.min_abs_f,
                             re.k_at_min.real()) + " (n = " + std::to_string(re.n_at_min) + ")");
        const auto im = imag_axis_certificate(3.0, 15, fig, 1e-2, 1e-6, 0.25);
        o.check(im.pass, fmt("imaginary axis 0.25 <= |tau| <= 3, n <= 15: min |f| = %.2e at tau = %.4f",
                             im.min_abs_f, im.k_at_min.imag()));
        CloakParams off = fig;
        off.sigma_off = true;
        const double target = 2.404825557695773 / fig.eps;
        const auto ctl = line_certificate(target - 0.05, target + 0.05, 0, off, 1e-2, 1e-6);
        o.check(ctl.per_mode[0] < 1e-6,
                fmt("sigma = 0 control detects the real zero near j_{0,1}/eps = %.6f: |f| = %.2e", target,
                    ctl.per_mode[0]));
    });

    criterion(6, "eigenvalue symmetry k -> -conj(k)", 300.0, [&](Outcome& o) {
        struct Case {
            int n;
            Box box;
        };
        const Case cases[] = {
            {1, Box{{1.7, -0.6}, {1.88, -0.4}}},
            {1, Box{{0.6, -0.45}, {1.5, -0.05}}},
            {7, Box{{1.88, -0.55}, {1.93, -0.45}}},
            {12, Box{{1.915, -0.52}, {1.932, -0.48}}},
        };
        int total = 0;
        for (const auto& c : cases) {
            const auto rep = mirror_check(c.n, c.box, fig);
            total += static_cast<int>(rep.roots.size());
            o.check(rep.counts_match && rep.max_mismatch < 1e-8,
                    "n=" + std::to_string(c.n) + fmt(" box re [%.3f, %.3f]", c.box.lo.real(), c.box.hi.real()) +
                        fmt(" im [%.3f, %.3f]", c.box.lo.imag(), c.box.hi.imag()) + ": " +
                        std::to_string(rep.roots.size()) + " root(s), " + std::to_string(rep.mirror_roots.size()) +
                        fmt(" mirror root(s), max mismatch %.2e", rep.max_mismatch));
        }
        o.check(total >= 4, "roots found in the test boxes: " + std::to_string(total));
    });

    criterion(7, "accumulation of k_n at kappa", 300.0, [&](Outcome& o) {
        const cplx kp = kappa(fig);
        o.check(std::abs(kp - cplx(1.93649, -0.5)) < 1e-5, fmt("kappa = %.6f %+.6fi", kp.real(), kp.imag()));
        const auto t = accumulation_study({1, 7, 12}, fig);
        for (const auto& r : t.rows)
            o.check(r.found && std::abs(r.k_n.imag() + 0.5) < 0.1,
                    "n=" + std::to_string(r.n) +
                        fmt(": k_n = %.10f %+.10fi", r.k_n.real(), r.k_n.imag()) + fmt(", |k_n - kappa| = %.6f", r.distance));
        o.check(t.monotone && t.rows.size() == 3 && t.rows[2].distance < t.rows[1].distance &&
                    t.rows[1].distance < t.rows[0].distance,
                "|k_12 - kappa| < |k_7 - kappa| < |k_1 - kappa|");
    });

    std::vector<SweepRow> rows3;
    criterion(8, "broadband decay rates", 600.0, [&](Outcome& o) {
        SweepOptions s3;
        s3.dim = 3;
        rows3 = run_sweep(s3);
        for (double k : s3.k_list) {
            std::vector<SweepRow> sub;
            for (const auto& r : rows3)
                if (r.k == k) sub.push_back(r);
            const auto fn = fit_rate(sub, RateTransform::LogEps, RateQuantity::NormS);
            const auto ff = fit_rate(sub, RateTransform::LogEps, RateQuantity::FarMax);
            o.check(fn.slope >= 0.8 && fn.slope <= 1.2,
                    fmt("d=3 k=%g: slope of ||u^s|| vs eps %.4f (r^2 %.6f)", k, fn.slope, fn.r_squared));
            o.check(ff.slope >= 0.8 && ff.slope <= 1.2, fmt("d=3 k=%g: slope of max|u_inf| vs eps %.4f", k, ff.slope));
        }
        int flagged = 0;
        for (const auto& r : rows3) flagged += r.flagged;
        o.check(flagged == 0, "d=3 rows flagged by the contraction check: " + std::to_string(flagged));
        const auto cons = estimate_consistency_check(rows3, s3.R);
        o.check(cons.band < 10.0, fmt("d=3 C_row band max/min %.3f (limit 10)", cons.band));
        for (double k : s3.k_list) {
            std::vector<double> ck;
            for (std::size_t i = 0; i < rows3.size(); ++i)
                if (rows3[i].k == k) ck.push_back(cons.C[i]);
            o.notes.push_back(fmt("     C_row at k=%g: band %.3f, mean %.4e", k, band(ck),
                                  std::accumulate(ck.begin(), ck.end(), 0.0) / ck.size()));
        }

        SweepOptions s2;
        s2.dim = 2;
        const auto rows2 = run_sweep(s2);
        std::vector<double> sn, sf;
        for (const auto& r : rows2) {
            sn.push_back(r.norm_s * std::abs(std::log(r.eps)));
            sf.push_back(r.far_max * std::abs(std::log(r.eps)));
        }
        o.check(band(sn) < 3.0, fmt("d=2 ||u^s|| |ln eps| band %.3f (limit 3)", band(sn)));
        o.check(band(sf) < 3.0, fmt("d=2 max|u_inf| |ln eps| band %.3f (limit 3)", band(sf)));
        for (double k : s2.k_list) {
            std::vector<SweepRow> sub;
            for (const auto& r : rows2)
                if (r.k == k) sub.push_back(r);
            const auto f = fit_inverse_log(sub);
            o.check(f.max_relative_residual < 0.5,
                    fmt("d=2 k=%g: fit through origin in 1/|ln eps|, max relative residual %.3f", k,
                        f.max_relative_residual));
        }
    });

    criterion(9, "far-field machinery", 300.0, [&](Outcome& o) {
        double gap = 0.0;
        for (int d : {2, 3}) {
            const CloakParams p{0.1, resonance_k_eps(0.1, d, 1.0), d};
            const auto sol = solve(2.0, p, SolveOptions{.R_eval = 5.0});
            for (double th : {0.0, 0.7, 1.9, 3.0}) {
                const cplx a = far_field(sol, th), b = far_field_boundary_integral(sol, direction_at(th, d));
                gap = std::max(gap, std::abs(a - b) / std::abs(a));
            }
            const auto rem = far_field_remainder(sol, 0.7);
            o.check(std::abs(rem.exponent + (d + 1) / 2.0) <= 0.05,
                    fmt("d=%g remainder exponent on r in [50, 800]: %.4f (expected %.1f)", d, rem.exponent,
                        -(d + 1) / 2.0));
        }
        o.check(gap < 1e-6, fmt("modal vs S_4 boundary-integral far field, pointwise relative gap %.2e", gap));
        for (int d : {2, 3}) {
            SweepOptions s;
            s.dim = d;
            s.eps_list = {0.05};
            s.k_list = {0.5, 1.0, 2.0, 3.0, 4.0};
            s.compute_t_norm = false;
            const auto rows = run_sweep(s);
            const auto rep = far_field_bound_check(rows);
            std::string list;
            for (double r : rep.ratio) list += fmt(" %.3e", r);
            o.notes.push_back("     d=" + std::to_string(d) + " ratios over k = 0.5, 1, 2, 3, 4:" + list);
            o.check(rep.path_gap < 1e-6, fmt("d=%g ratio via modal vs boundary-integral path: gap %.2e", d, rep.path_gap));
            o.check(rep.band < 10.0, fmt("d=%g ratio |u_inf|/((1+k^3)||u^s||) band %.2f (limit 10)", d, rep.band));
        }
    });

    criterion(10, "region grid and determinant scans", 120.0, [&](Outcome& o) {
        int code = 0;
        const double step = 0.02, ke = 2.0;
        const auto grid = csv_rows(run_cli({"region-grid", "--eps", "0.5", "--k-eps", "2", "--re", "-3:3", "--im",
                                            "-3:1", "--step", "0.02"},
                                           code));
        const int nx = 301, ny = 201;
        o.check(static_cast<int>(grid.size()) == nx * ny, "region-grid rows: " + std::to_string(grid.size()));
        std::vector<char> inK(grid.size());
        std::vector<double> re(grid.size()), im(grid.size());
        for (std::size_t i = 0; i < grid.size(); ++i) {
            re[i] = std::stod(grid[i][0]);
            im[i] = std::stod(grid[i][1]);
            inK[i] = grid[i][2] == "K_compact";
        }
        // distance from a point to the boundary pieces of K
        auto curve_dist = [&](double a, double b) {
            const double aa = std::abs(a);
            double dline = std::abs(aa + b) / std::sqrt(2.0);
            double darc = std::abs(aa - std::sqrt(std::max(0.0, b * b + b + ke * ke)));
            double dflat = std::min(std::abs(b), std::abs(b + 0.5));
            return std::array<double, 3>{dline, darc, dflat};
        };
        int boundary = 0, on_line = 0, on_arc = 0, bad = 0;
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i) {
                const std::size_t idx = std::size_t(j) * nx + i;
                if (!inK[idx]) continue;
                bool edge = false;
                if (i > 0 && !inK[idx - 1]) edge = true;
                if (i + 1 < nx && !inK[idx + 1]) edge = true;
                if (!edge) continue;
                ++boundary;
                const auto dd = curve_dist(re[idx], im[idx]);
                const double best = std::min({dd[0], dd[1], dd[2]});
                if (best > step * 1.5) ++bad;
                if (dd[0] <= step) ++on_line;
                if (dd[1] <= step) ++on_arc;
            }
        o.check(boundary > 0 && bad == 0,
                "horizontal K boundary cells: " + std::to_string(boundary) + ", off both curves by more than a step: " +
                    std::to_string(bad));
        o.check(on_line > 0 && on_arc > 0, "cells on Im k = -|Re k|: " + std::to_string(on_line) +
                                               ", on Re k = sqrt(Im^2 + Im + k_eps^2): " + std::to_string(on_arc));

        for (int n : {1, 7, 12}) {
            const auto scan = csv_rows(run_cli({"teig-scan", "--n", std::to_string(n), "--line", "im=-0.47", "--re",
                                                "1.7:2.1", "--step", "0.002"},
                                               code));
            std::vector<double> re_x, im_x;
            for (std::size_t i = 1; i < scan.size(); ++i) {
                const double x0 = std::stod(scan[i - 1][1]), x1 = std::stod(scan[i][1]);
                const double a0 = std::stod(scan[i - 1][3]), a1 = std::stod(scan[i][3]);
                const double b0 = std::stod(scan[i - 1][4]), b1 = std::stod(scan[i][4]);
                if ((a0 > 0) != (a1 > 0)) re_x.push_back(x0 - a0 * (x1 - x0) / (a1 - a0));
                if ((b0 > 0) != (b1 > 0)) im_x.push_back(x0 - b0 * (x1 - x0) / (b1 - b0));
            }
            auto near = [](const std::vector<double>& v) {
                for (double x : v)
                    if (x > 1.8 && x < 2.0) return true;
                return false;
            };
            std::string where;
            for (double x : re_x) where += fmt(" Re f: %.4f", x);
            for (double x : im_x) where += fmt(" Im f: %.4f", x);
            o.check(near(re_x) && near(im_x),
                    "n=" + std::to_string(n) + " sign changes on Im k = -0.47 in 1.8 < Re k < 2.0:" + where);
        }
    });

    std::printf("%d criterion(s) failed\n", failures);
    return failures ? 1 : 0;
}

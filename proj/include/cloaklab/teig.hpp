#pragma once
// Transmission eigenvalues of the cloak. For mode n the interior transmission
// problem has a nontrivial solution exactly when
//   f(n, k) = det [[A(2), B(2), -J(2k)], [A'(2), B'(2), -k J'(2k)], [A(eps), B(eps), 0]]
// vanishes, with A, B the canonical radial pair (J, J' spherical for d = 3).
// A, B come from the ODE path, so f is analytic in k away from the two poles
// kappa and -conj(kappa) of sigma. Each column and then each row is divided
// by its largest entry; those are positive factors, so zeros and phase are
// untouched.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/tools/minima.hpp>

#include "cloaklab/cloak.hpp"
#include "cloaklab/radial.hpp"
#include "cloaklab/specfun.hpp"

namespace cloaklab {

struct DetSample {
    int n = 0;
    cplx k;
    cplx f;
    /// product of the column and row maxima removed by the normalisation
    double raw_scale = 1.0;
};

/// Normalised determinant f(n, k).
inline DetSample det_f(int n, cplx k, const CloakParams& p, const RadialOptions& opt = {}) {
    p.validate();
    const int an = n < 0 ? -n : n;
    if (!p.sigma_off) {
        const cplx kp = kappa(p);
        if (std::abs(k - kp) < 1e-12 || std::abs(k + std::conj(kp)) < 1e-12) {
            std::ostringstream msg;
            msg << "det_f: k = " << k << " is a pole of sigma (kappa = " << kp << ")";
            throw PoleError(msg.str());
        }
    }
    const RadialPair rp = radial_pair(an, k, p, {}, opt);
    cplx J, dJ;
    const cplx z = 2.0 * k;
    if (p.dim == 2) {
        const auto [Ja, dJa] = specfun::cyl_bessel_j_array(an, z);
        J = Ja[an];
        dJ = dJa[an];
    } else {
        if (z == cplx(0.0)) {
            J = an == 0 ? 1.0 : 0.0;
            dJ = an == 1 ? 1.0 / 3.0 : 0.0;
        } else {
            const auto a = specfun::sph_bessel_array(an, z);
            J = a.j[an];
            dJ = a.dj[an];
        }
    }
    Eigen::Matrix3cd M;
    M << rp.A_2.v, rp.B_2.v, -J,
         rp.A_2.dv, rp.B_2.dv, -k * dJ,
         rp.A_eps.v, rp.B_eps.v, 0.0;
    DetSample s;
    s.n = n;
    s.k = k;
    // Columns first: for large n the entries of A, B and J differ by many
    // orders of magnitude, and row scaling alone leaves f uniformly tiny.
    for (int j = 0; j < 3; ++j) {
        const double mx = M.col(j).cwiseAbs().maxCoeff();
        if (mx > 0.0) {
            M.col(j) /= mx;
            s.raw_scale *= mx;
        }
    }
    for (int i = 0; i < 3; ++i) {
        const double mx = M.row(i).cwiseAbs().maxCoeff();
        if (mx > 0.0) {
            M.row(i) /= mx;
            s.raw_scale *= mx;
        }
    }
    s.f = M.determinant();
    if (!std::isfinite(s.f.real()) || !std::isfinite(s.f.imag()))
        throw RangeError("det_f: non-finite determinant");
    return s;
}

/// f(n, k) at `samples` equispaced points of the segment from a to b.
inline std::vector<DetSample> scan_line(int n, cplx a, cplx b, int samples, const CloakParams& p,
                                        const RadialOptions& opt = {}) {
    if (samples < 2) throw ValidationError("scan_line: need at least two samples");
    std::vector<DetSample> out;
    out.reserve(samples);
    for (int i = 0; i < samples; ++i)
        out.push_back(det_f(n, a + (b - a) * (double(i) / (samples - 1)), p, opt));
    return out;
}

/// Number of sign changes of Re f and Im f along a scan.
inline std::pair<int, int> sign_changes(const std::vector<DetSample>& s) {
    int re = 0, im = 0;
    for (std::size_t i = 1; i < s.size(); ++i) {
        if ((s[i].f.real() > 0.0) != (s[i - 1].f.real() > 0.0)) ++re;
        if ((s[i].f.imag() > 0.0) != (s[i - 1].f.imag() > 0.0)) ++im;
    }
    return {re, im};
}

/// Axis-aligned rectangle [lo.re, hi.re] x [lo.im, hi.im].
struct Box {
    cplx lo, hi;
    cplx center() const { return 0.5 * (lo + hi); }
    double width() const { return hi.real() - lo.real(); }
    double height() const { return hi.imag() - lo.imag(); }
    bool contains(cplx z, double margin = 0.0) const {
        return z.real() > lo.real() + margin && z.real() < hi.real() - margin &&
               z.imag() > lo.imag() + margin && z.imag() < hi.imag() - margin;
    }
    /// -conj of the box
    Box mirrored() const { return {{-hi.real(), lo.imag()}, {-lo.real(), hi.imag()}}; }
    std::array<Box, 4> quadrants() const {
        const cplx c = center();
        return {Box{lo, c}, Box{{c.real(), lo.imag()}, {hi.real(), c.imag()}},
                Box{{lo.real(), c.imag()}, {c.real(), hi.imag()}}, Box{c, hi}};
    }
};

struct RootRecord {
    int n = 0;
    cplx k_root;
    double residual = 0.0;
    Box box;
    int newton_iters = 0;
    int multiplicity = 1;
};

struct RootOptions {
    RadialOptions radial;
    /// boundary samples per edge before refinement
    int edge_samples = 16;
    /// largest accepted phase step between neighbouring boundary samples
    double max_phase_step = pi / 4.0;
    int max_refine_depth = 24;
    int max_box_depth = 18;
    double residual_tol = 1e-10;
    int newton_max = 60;
    double pole_margin = 1e-3;
};

namespace detail {

using ScalarFn = std::function<cplx(cplx)>;

// Net phase change of fn from a to b, refining any step above max_step.
inline double phase_change(const ScalarFn& fn, cplx a, cplx fa, cplx b, cplx fb,
                           const RootOptions& opt, int depth) {
    const double d = std::arg(fb / fa);
    if (std::abs(d) <= opt.max_phase_step) return d;
    if (depth >= opt.max_refine_depth) {
        std::ostringstream msg;
        msg << "winding number: phase jump " << d << " between " << a << " and " << b
            << " persists after refinement";
        throw InconclusiveError(msg.str());
    }
    const cplx m = 0.5 * (a + b);
    const cplx fm = fn(m);
    if (fm == cplx(0.0)) throw InconclusiveError("winding number: zero on the contour");
    return phase_change(fn, a, fa, m, fm, opt, depth + 1) +
           phase_change(fn, m, fm, b, fb, opt, depth + 1);
}

} // namespace detail

/// Winding number of fn around the boundary of the box (counter-clockwise).
inline int winding_number(const detail::ScalarFn& fn, const Box& b, const RootOptions& opt = {}) {
    const cplx corners[5] = {b.lo, {b.hi.real(), b.lo.imag()}, b.hi, {b.lo.real(), b.hi.imag()}, b.lo};
    double total = 0.0;
    for (int e = 0; e < 4; ++e) {
        const cplx z0 = corners[e], z1 = corners[e + 1];
        cplx za = z0, fa = fn(za);
        if (fa == cplx(0.0)) throw InconclusiveError("winding number: zero on the contour");
        for (int j = 1; j <= opt.edge_samples; ++j) {
            const cplx zb = z0 + (z1 - z0) * (double(j) / opt.edge_samples);
            const cplx fb = fn(zb);
            if (fb == cplx(0.0)) throw InconclusiveError("winding number: zero on the contour");
            total += detail::phase_change(fn, za, fa, zb, fb, opt, 0);
            za = zb;
            fa = fb;
        }
    }
    const double w = total / (2.0 * pi);
    const double wr = std::round(w);
    if (std::abs(w - wr) > 1e-6) throw InconclusiveError("winding number: non-integer phase total");
    return static_cast<int>(wr);
}

inline int det_winding(int n, const Box& b, const CloakParams& p, const RootOptions& opt = {}) {
    return winding_number([&](cplx k) { return det_f(n, k, p, opt.radial).f; }, b, opt);
}

namespace detail {

inline void check_pole_margin(const Box& b, const CloakParams& p, double margin) {
    if (p.sigma_off) return;
    for (cplx pole : {kappa(p), -std::conj(kappa(p))}) {
        const double dx = std::max({b.lo.real() - pole.real(), 0.0, pole.real() - b.hi.real()});
        const double dy = std::max({b.lo.imag() - pole.imag(), 0.0, pole.imag() - b.hi.imag()});
        if (std::hypot(dx, dy) < margin) {
            std::ostringstream msg;
            msg << "find_roots: box comes within " << margin << " of the pole " << pole;
            throw ValidationError(msg.str());
        }
    }
}

// Newton with central finite differences; returns false if the iterate leaves
// the box or stalls.
inline bool newton(const ScalarFn& fn, cplx& z, const Box& box, const RootOptions& opt,
                   int& iters, double& res) {
    cplx f = fn(z);
    for (iters = 0; iters < opt.newton_max; ++iters) {
        res = std::abs(f);
        const double h = 1e-6 * (1.0 + std::abs(z));
        const cplx df = (fn(z + h) - fn(z - h)) / (2.0 * h);
        if (df == cplx(0.0)) return false;
        const cplx step = f / df;
        z -= step;
        if (!box.contains(z)) return false;
        f = fn(z);
        res = std::abs(f);
        if (res < opt.residual_tol && std::abs(step) < 1e-9 * (1.0 + std::abs(z))) {
            ++iters;
            return true;
        }
    }
    return res < opt.residual_tol;
}

inline void isolate(const ScalarFn& fn, int n, const Box& b, int w, int depth,
                    const RootOptions& opt, std::vector<RootRecord>& out) {
    if (w == 0) return;
    if (w == 1 || depth >= opt.max_box_depth) {
        cplx z = b.center();
        int it = 0;
        double res = 0.0;
        const bool ok = newton(fn, z, b, opt, it, res);
        if (ok || depth >= opt.max_box_depth) {
            if (!ok) throw InconclusiveError("find_roots: Newton failed in a box at the depth cap");
            out.push_back({n, z, res, b, it, w});
            return;
        }
    }
    const auto q = b.quadrants();
    int wq[4], sum = 0;
    for (int i = 0; i < 4; ++i) {
        wq[i] = winding_number(fn, q[i], opt);
        sum += wq[i];
    }
    if (sum != w) {
        std::ostringstream msg;
        msg << "find_roots: winding " << w << " over " << b.lo << ".." << b.hi
            << " but quadrants sum to " << sum;
        throw InconclusiveError(msg.str());
    }
    for (int i = 0; i < 4; ++i) isolate(fn, n, q[i], wq[i], depth + 1, opt, out);
}

} // namespace detail

/// All zeros of f(n, .) inside the box, by argument principle, quadrisection
/// and Newton polishing. The count always matches the top-level winding number.
inline std::vector<RootRecord> find_roots(int n, const Box& box, const CloakParams& p,
                                          const RootOptions& opt = {}) {
    p.validate();
    if (!(box.width() > 0.0 && box.height() > 0.0)) throw ValidationError("find_roots: empty box");
    detail::check_pole_margin(box, p, opt.pole_margin);
    const detail::ScalarFn fn = [&](cplx k) { return det_f(n, k, p, opt.radial).f; };
    const int w = winding_number(fn, box, opt);
    if (w < 0) throw InconclusiveError("find_roots: negative winding number (pole inside the box)");
    std::vector<RootRecord> out;
    detail::isolate(fn, n, box, w, 0, opt, out);
    std::sort(out.begin(), out.end(), [](const RootRecord& a, const RootRecord& b) {
        return a.k_root.real() != b.k_root.real() ? a.k_root.real() < b.k_root.real()
                                                  : a.k_root.imag() < b.k_root.imag();
    });
    return out;
}

struct MirrorReport {
    std::vector<RootRecord> roots, mirror_roots;
    /// |k' - (-conj k)| for the nearest independently found mirror root
    std::vector<double> mismatch;
    double max_mismatch = 0.0;
    bool counts_match = false;
};

/// Roots in `box` and, by a separate search, in its mirror -conj(box).
inline MirrorReport mirror_check(int n, const Box& box, const CloakParams& p, const RootOptions& opt = {}) {
    MirrorReport rep;
    rep.roots = find_roots(n, box, p, opt);
    rep.mirror_roots = find_roots(n, box.mirrored(), p, opt);
    rep.counts_match = rep.roots.size() == rep.mirror_roots.size();
    for (const auto& r : rep.roots) {
        const cplx target = -std::conj(r.k_root);
        double best = std::numeric_limits<double>::infinity();
        for (const auto& m : rep.mirror_roots) best = std::min(best, std::abs(m.k_root - target));
        rep.mismatch.push_back(best);
        rep.max_mismatch = std::max(rep.max_mismatch, best);
    }
    if (!rep.counts_match) rep.max_mismatch = std::numeric_limits<double>::infinity();
    return rep;
}

struct CertificateReport {
    double min_abs_f = 0.0;
    cplx k_at_min;
    int n_at_min = 0;
    double threshold = 1e-6;
    bool pass = false;
    long samples = 0;
    /// per-mode minimum of |f| and where it occurs
    std::vector<double> per_mode;
    std::vector<cplx> per_mode_k;
};

/// Dense scan of |f(n, k)| along the segment from a to b for n = 0..n_max,
/// with golden-section refinement around every local minimum of the grid.
/// `skip_radius` excludes a neighbourhood of k = 0 on lines through it.
inline CertificateReport line_certificate(cplx a, cplx b, int n_max, const CloakParams& p,
                                          double step = 1e-2, double threshold = 1e-6,
                                          double skip_radius = 0.0,
                                          const RadialOptions& opt = {}) {
    p.validate();
    CertificateReport rep;
    rep.threshold = threshold;
    rep.min_abs_f = std::numeric_limits<double>::infinity();
    const double L = std::abs(b - a);
    const int m = std::max(2, static_cast<int>(std::ceil(L / step)) + 1);
    auto point = [&](double t) { return a + (b - a) * t; };
    for (int n = 0; n <= n_max; ++n) {
        std::vector<double> t, v;
        for (int i = 0; i < m; ++i) {
            const double ti = double(i) / (m - 1);
            if (std::abs(point(ti)) < skip_radius) continue;
            t.push_back(ti);
            v.push_back(std::abs(det_f(n, point(ti), p, opt).f));
            ++rep.samples;
        }
        double best = std::numeric_limits<double>::infinity();
        double tbest = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (v[i] < best) {
                best = v[i];
                tbest = t[i];
            }
            const bool left = i == 0 || v[i] <= v[i - 1];
            const bool right = i + 1 == v.size() || v[i] <= v[i + 1];
            if (!(left && right)) continue;
            // neighbours across the excluded gap around 0 do not bracket
            const double gap = 1.5 / (m - 1);
            const double lo = (i == 0 || t[i] - t[i - 1] > gap) ? t[i] : t[i - 1];
            const double hi = (i + 1 == v.size() || t[i + 1] - t[i] > gap) ? t[i] : t[i + 1];
            if (hi <= lo) continue;
            boost::uintmax_t iters = 80;
            const auto r = boost::math::tools::brent_find_minima(
                [&](double s) { ++rep.samples; return std::abs(det_f(n, point(s), p, opt).f); },
                lo, hi, 40, iters);
            if (r.second < best) {
                best = r.second;
                tbest = r.first;
            }
        }
        rep.per_mode.push_back(best);
        rep.per_mode_k.push_back(point(tbest));
        if (best < rep.min_abs_f) {
            rep.min_abs_f = best;
            rep.k_at_min = point(tbest);
            rep.n_at_min = n;
        }
    }
    rep.pass = rep.min_abs_f >= threshold;
    return rep;
}

/// Certificate on the real segment [k_min, k_max].
inline CertificateReport real_axis_certificate(double k_min, double k_max, int n_max,
                                               const CloakParams& p, double step = 1e-2,
                                               double threshold = 1e-6) {
    if (!(k_min > 0.0 && k_max > k_min))
        throw ValidationError("real_axis_certificate: need 0 < k_min < k_max");
    return line_certificate(k_min, k_max, n_max, p, step, threshold);
}

/// Certificate on k = i tau, skip <= |tau| <= tau_max. k = 0 itself is a
/// trivial zero (the J column vanishes) and |f| ~ |k|^2 near it, so a gap
/// is needed; the default mirrors the lower end of the real-axis range.
inline CertificateReport imag_axis_certificate(double tau_max, int n_max, const CloakParams& p,
                                               double step = 1e-2, double threshold = 1e-6,
                                               double skip = 0.25) {
    if (!(tau_max > 0.0)) throw ValidationError("imag_axis_certificate: tau_max must be positive");
    return line_certificate(cplx(0.0, -tau_max), cplx(0.0, tau_max), n_max, p, step, threshold,
                            skip);
}

struct AccumulationRow {
    int n = 0;
    bool found = false;
    cplx k_n;
    double distance = 0.0;
    double residual = 0.0;
    /// roots seen in the shells searched before stopping
    int roots_seen = 0;
};

struct AccumulationTable {
    cplx kappa;
    std::vector<AccumulationRow> rows;
    /// distances strictly decrease along n_list (absent rows break it)
    bool monotone = false;
};

struct AccumulationOptions {
    RootOptions roots;
    double outer_half_width = 0.4;
    double guard = 1e-3;
    double shrink = 0.5;
};

/// Four rectangles covering the square ring h_in <= |k - c|_inf <= h_out.
inline std::array<Box, 4> square_ring(cplx c, double h_in, double h_out) {
    const double x = c.real(), y = c.imag();
    return {Box{{x - h_out, y - h_out}, {x + h_out, y - h_in}},
            Box{{x - h_out, y + h_in}, {x + h_out, y + h_out}},
            Box{{x - h_out, y - h_in}, {x - h_in, y + h_in}},
            Box{{x + h_in, y - h_in}, {x + h_out, y + h_in}}};
}

/// For every n, the root of f(n, .) farthest from kappa inside the box of
/// half-width outer_half_width around kappa. The zeros of each mode cluster
/// at kappa, so the search walks inward through square rings of shrinking
/// size (never entering the guard square) and stops one ring after the
/// first hit.
inline AccumulationTable accumulation_study(const std::vector<int>& n_list, const CloakParams& p,
                                            const AccumulationOptions& opt = {}) {
    p.validate();
    if (p.sigma_off) throw ValidationError("accumulation_study: sigma must be active");
    AccumulationTable tab;
    tab.kappa = kappa(p);
    for (int n : n_list) {
        AccumulationRow row;
        row.n = n;
        int after_hit = -1;
        for (double h = opt.outer_half_width; h * opt.shrink >= opt.guard && after_hit < 1;
             h *= opt.shrink) {
            if (after_hit >= 0) ++after_hit;
            for (const Box& b : square_ring(tab.kappa, h * opt.shrink, h)) {
                RootOptions ro = opt.roots;
                ro.pole_margin = std::min(ro.pole_margin, opt.guard);
                for (const auto& r : find_roots(n, b, p, ro)) {
                    ++row.roots_seen;
                    const double d = std::abs(r.k_root - tab.kappa);
                    if (!row.found || d > row.distance) {
                        row.found = true;
                        row.k_n = r.k_root;
                        row.distance = d;
                        row.residual = r.residual;
                    }
                }
            }
            if (row.found && after_hit < 0) after_hit = 0;
        }
        tab.rows.push_back(row);
    }
    tab.monotone = !tab.rows.empty();
    for (std::size_t i = 0; i < tab.rows.size(); ++i) {
        if (!tab.rows[i].found) tab.monotone = false;
        if (i > 0 && !(tab.rows[i].distance < tab.rows[i - 1].distance)) tab.monotone = false;
    }
    return tab;
}

} // namespace cloaklab

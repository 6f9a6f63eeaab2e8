#pragma once
// Verification campaigns: eps-sweeps of the scattered field at a fixed
// resonance law k_eps(eps), least-squares rate fits, the far-field bound and
// the shape of the two-term scattering estimate. The estimates being tested
// carry unspecified constants, so everything here reports bands (max / min)
// rather than absolute thresholds.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <boost/math/tools/minima.hpp>

#include "cloaklab/lippmann.hpp"
#include "cloaklab/modesolver.hpp"
#include "cloaklab/specfun.hpp"

namespace cloaklab {

struct SweepRow {
    int dim = 2;
    double eps = 0.0, k = 0.0, k_eps = 0.0;
    /// ||u^s||_{L^2(B_R \ B_2)}
    double norm_s = 0.0;
    /// ||u^s||_{L^2(B_5 \ B_2)}, the norm the far-field bound is stated with
    double norm_s5 = 0.0;
    /// max over directions of |u_inf| (modal series)
    double far_max = 0.0;
    /// the same maximum through the boundary integral over S_4
    double far_max_bi = 0.0;
    double t_norm = 0.0;
    double M = 0.0;
    double a = 0.0;
    /// relative L^2 difference to the Lippmann-Schwinger solve; negative if not run
    double ls_rel_diff = -1.0;
    /// measured ||T|| not below the contraction threshold
    bool flagged = false;
};

enum class ResonanceLaw { Auto, Cubic, Log };

struct SweepOptions {
    int dim = 3;
    std::vector<double> eps_list{0.1, 0.05, 0.025, 0.0125};
    std::vector<double> k_list{0.5, 1.0, 2.0};
    /// k_eps^2 = c_star eps^-3 (d = 3) or c_star |ln eps| / eps (d = 2)
    double c_star = 1.0;
    ResonanceLaw law = ResonanceLaw::Auto;
    double R = 3.0;
    bool compute_t_norm = true;
    double contraction_threshold = 0.5;
    /// Lippmann-Schwinger cross-check on every m-th row (0 disables)
    int ls_every = 0;
    bool sigma_off = false;
    int far_samples = 361;
};

inline double resonance_k_eps(double eps, int dim, double c_star, ResonanceLaw law = ResonanceLaw::Auto) {
    if (!(eps > 0.0 && eps < 1.0)) throw ValidationError("resonance law: eps must lie in (0, 1)");
    if (!(c_star > 0.0)) throw ValidationError("resonance law: c_star must be positive");
    if (law == ResonanceLaw::Auto) law = dim == 3 ? ResonanceLaw::Cubic : ResonanceLaw::Log;
    const double k2 = law == ResonanceLaw::Cubic ? c_star / (eps * eps * eps)
                                                 : c_star * std::abs(std::log(eps)) / eps;
    return std::sqrt(k2);
}

/// max_theta |g(theta)| over [0, pi] (the patterns are symmetric about the
/// incidence axis) by sampling and a Brent polish around the best sample.
inline double max_over_angle(const std::function<double(double)>& g, int samples) {
    samples = std::max(samples, 3);
    const double h = pi / (samples - 1);
    double best = -1.0, tb = 0.0;
    for (int i = 0; i < samples; ++i) {
        const double v = g(i * h);
        if (v > best) {
            best = v;
            tb = i * h;
        }
    }
    const double lo = std::max(0.0, tb - h), hi = std::min(pi, tb + h);
    boost::uintmax_t it = 60;
    const auto r = boost::math::tools::brent_find_minima([&](double t) { return -g(t); }, lo, hi, 40, it);
    return std::max(best, -r.second);
}

inline double far_field_max(const ScatteringSolution& sol, int samples = 361) {
    return max_over_angle([&](double t) { return std::abs(far_field(sol, t)); }, samples);
}

inline Point direction_at(double theta, int dim) {
    return dim == 2 ? Point::polar(1.0, theta) : Point::spherical(1.0, theta, 0.0);
}

inline double far_field_max_boundary(const ScatteringSolution& sol, int samples = 61) {
    return max_over_angle(
        [&](double t) {
            return std::abs(far_field_boundary_integral(sol, direction_at(t, sol.params.dim)));
        },
        samples);
}

/// One row per (eps, k), eps outer.
inline std::vector<SweepRow> run_sweep(const SweepOptions& opt) {
    if (opt.eps_list.empty() || opt.k_list.empty()) throw ValidationError("run_sweep: empty grid");
    if (!(opt.R > 2.0)) throw ValidationError("run_sweep: R must exceed 2");
    std::vector<SweepRow> rows;
    int index = 0;
    for (double eps : opt.eps_list) {
        for (double k : opt.k_list) {
            CloakParams p;
            p.eps = eps;
            p.dim = opt.dim;
            p.k_eps = resonance_k_eps(eps, opt.dim, opt.c_star, opt.law);
            p.sigma_off = opt.sigma_off;
            p.validate();
            SolveOptions so;
            so.R_eval = std::max(opt.R, 5.0);
            const ScatteringSolution sol = solve(k, p, so);
            SweepRow r;
            r.dim = opt.dim;
            r.eps = eps;
            r.k = k;
            r.k_eps = p.k_eps;
            r.norm_s = l2_scattered_norm(sol, 2.0, opt.R);
            r.norm_s5 = l2_scattered_norm(sol, 2.0, 5.0);
            r.far_max = far_field_max(sol, opt.far_samples);
            r.far_max_bi = far_field_max_boundary(sol);
            r.M = opt.sigma_off ? 0.0 : m_eps_k(k, p);
            r.a = a_factor(k, opt.dim);
            if (opt.compute_t_norm) {
                const ModalOperator T(k, p, sol.N);
                r.t_norm = t_norm_estimate(T, opt.R).value;
                r.flagged = r.t_norm >= opt.contraction_threshold;
            }
            if (opt.ls_every > 0 && index % opt.ls_every == 0 && !r.flagged) {
                const auto ls = ls_solve(k, p, incident_coeffs(k, sol.N, opt.dim));
                r.ls_rel_diff = relative_l2_difference(sol, ls.scattered, 2.0, opt.R);
            }
            rows.push_back(r);
            ++index;
        }
    }
    return rows;
}

struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    int points_used = 0;
};

enum class RateTransform { LogEps, LogLogInvEps };
enum class RateQuantity { NormS, FarMax };

inline double row_value(const SweepRow& r, RateQuantity q) {
    return q == RateQuantity::NormS ? r.norm_s : r.far_max;
}

/// Ordinary least squares of log(value) against log eps (slope ~ 1 for an
/// O(eps) decay) or against log |ln eps| (slope ~ -1 for 1/|ln eps|).
inline RateFit fit_rate(const std::vector<SweepRow>& rows, RateTransform tr,
                        RateQuantity q = RateQuantity::NormS) {
    std::vector<double> x, y;
    for (const auto& r : rows) {
        if (r.flagged) continue;
        const double v = row_value(r, q);
        if (!(v > 0.0)) continue;
        x.push_back(tr == RateTransform::LogEps ? std::log(r.eps) : std::log(std::abs(std::log(r.eps))));
        y.push_back(std::log(v));
    }
    if (x.size() < 4) throw ValidationError("fit_rate: at least 4 unflagged rows are required");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0) throw ValidationError("fit_rate: all rows share one eps");
    RateFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    f.r_squared = syy > 0.0 ? std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0) : 1.0;
    f.points_used = static_cast<int>(x.size());
    return f;
}

struct OriginFit {
    double coefficient = 0.0;
    double max_relative_residual = 0.0;
    int points_used = 0;
};

/// value ~ c / |ln eps| through the origin.
inline OriginFit fit_inverse_log(const std::vector<SweepRow>& rows, RateQuantity q = RateQuantity::NormS) {
    double sxy = 0.0, sxx = 0.0;
    std::vector<std::pair<double, double>> pts;
    for (const auto& r : rows) {
        if (r.flagged) continue;
        const double x = 1.0 / std::abs(std::log(r.eps));
        pts.push_back({x, row_value(r, q)});
        sxy += x * pts.back().second;
        sxx += x * x;
    }
    if (pts.size() < 4) throw ValidationError("fit_inverse_log: at least 4 unflagged rows are required");
    OriginFit f;
    f.coefficient = sxy / sxx;
    f.points_used = static_cast<int>(pts.size());
    for (const auto& [x, y] : pts)
        f.max_relative_residual = std::max(f.max_relative_residual, std::abs(y - f.coefficient * x) / std::abs(y));
    return f;
}

/// max / min of positive values; 1 for fewer than two, infinity if any is 0.
inline double band(const std::vector<double>& v) {
    if (v.size() < 2) return 1.0;
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    if (*lo <= 0.0) return std::numeric_limits<double>::infinity();
    return *hi / *lo;
}

struct FarFieldBoundReport {
    std::vector<double> ratio, ratio_bi;
    double max_ratio = 0.0;
    double band = 1.0;
    /// largest relative gap between the two evaluation paths' ratios
    double path_gap = 0.0;
};

/// max|u_inf| / ((1 + k^3) ||u^s||_{L^2(B_5 \ B_2)} (k^{-1/2} if d = 2)).
inline FarFieldBoundReport far_field_bound_check(const std::vector<SweepRow>& rows) {
    FarFieldBoundReport rep;
    for (const auto& r : rows) {
        const double den = (1.0 + r.k * r.k * r.k) * r.norm_s5 * (r.dim == 2 ? 1.0 / std::sqrt(r.k) : 1.0);
        const double a = den > 0.0 ? r.far_max / den : 0.0;
        const double b = den > 0.0 ? r.far_max_bi / den : 0.0;
        rep.ratio.push_back(a);
        rep.ratio_bi.push_back(b);
        rep.max_ratio = std::max(rep.max_ratio, a);
        if (a > 0.0) rep.path_gap = std::max(rep.path_gap, std::abs(a - b) / a);
    }
    rep.band = band(rep.ratio);
    return rep;
}

struct ConsistencyReport {
    /// norm_s divided by the right-hand side of the scattering estimate
    std::vector<double> C;
    /// |H_0(k)| / |H_0(eps k)| (two dimensions; 0 otherwise)
    std::vector<double> hankel_ratio;
    double band = 1.0;
};

/// C_row = norm_s / (eps + k^2 a M ||u^i||_{L^2(B_R)}) in three dimensions,
/// norm_s / (|H_0(k)|/|H_0(eps k)| + k^2 a M (1 + ||u^i||_{L^2(B_R)})) in two.
inline ConsistencyReport estimate_consistency_check(const std::vector<SweepRow>& rows, double R = 3.0) {
    ConsistencyReport rep;
    for (const auto& r : rows) {
        if (r.flagged) continue;
        const double ui = plane_wave_norm(R, r.dim);
        const double contrast = r.k * r.k * r.a * r.M;
        double rhs, hr = 0.0;
        if (r.dim == 3) {
            rhs = r.eps + contrast * ui;
        } else {
            hr = std::abs(specfun::cyl_bessel(0, r.k).H) / std::abs(specfun::cyl_bessel(0, r.eps * r.k).H);
            rhs = hr + contrast * (1.0 + ui);
        }
        rep.C.push_back(r.norm_s / rhs);
        rep.hankel_ratio.push_back(hr);
    }
    rep.band = band(rep.C);
    return rep;
}

struct RemainderFit {
    double exponent = 0.0;
    double r_squared = 0.0;
    std::vector<double> r, remainder;
};

/// |u^s(r xhat) - e^{ikr} r^{-(d-1)/2} u_inf(xhat)| on log-spaced radii,
/// with the fitted power of r.
inline RemainderFit far_field_remainder(const ScatteringSolution& sol, double theta,
                                        double r_min = 50.0, double r_max = 800.0, int samples = 17) {
    const int d = sol.params.dim;
    const Point dir = direction_at(theta, d);
    const cplx uinf = far_field(sol, theta);
    RemainderFit f;
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (int i = 0; i < samples; ++i) {
        const double r = r_min * std::pow(r_max / r_min, double(i) / (samples - 1));
        const Point x{dir[0] * r, dir[1] * r, dir[2] * r};
        const cplx us = scattered_exterior(sol, x).first;
        const cplx lead = std::exp(I * (sol.k * r)) * std::pow(r, -0.5 * (d - 1)) * uinf;
        const double rem = std::abs(us - lead);
        f.r.push_back(r);
        f.remainder.push_back(rem);
        const double lx = std::log(r), ly = std::log(rem);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        syy += ly * ly;
    }
    const double n = samples;
    const double cxx = sxx - sx * sx / n, cxy = sxy - sx * sy / n, cyy = syy - sy * sy / n;
    f.exponent = cxy / cxx;
    f.r_squared = cyy > 0.0 ? cxy * cxy / (cxx * cyy) : 1.0;
    return f;
}

} // namespace cloaklab

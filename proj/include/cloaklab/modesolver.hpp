#pragma once
// Separation-of-variables solver for the transformed scattering problem
//   Delta u + k^2 q u = 0 outside B_eps,  u = 0 on S_eps,
// with u = u^i + u^s outside B_2 and u^s radiating. Incidence is a plane wave
// along the first axis in two dimensions and along the third axis in three
// (azimuthal symmetry, Legendre modes only); arbitrary coefficient lists are
// accepted too.
//
// Conventions: u^s(x) ~ e^{ikr} r^{-(d-1)/2} u_inf(xhat). The Colton-Kress
// far field F_CK relates to it by u_inf = e^{i pi/4} F_CK / sqrt(8 pi k) in
// two dimensions and u_inf = F_CK / (4 pi) in three.

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "cloaklab/cloak.hpp"
#include "cloaklab/quadrature.hpp"
#include "cloaklab/radial.hpp"
#include "cloaklab/specfun.hpp"

namespace cloaklab {

struct ModeSolution {
    int index = 0;
    cplx gamma, alpha, beta, s;
    double condition_number = 1.0;
    /// max interface-equation residual relative to the coefficient scale
    double residual = 0.0;
    bool near_resonance = false;
};

enum class SolutionKind { Cloak, SmallBall };

struct ScatteringSolution {
    CloakParams params;
    double k = 1.0;
    SolutionKind kind = SolutionKind::Cloak;
    /// d = 2: modes n = -N..N in order; d = 3: l = 0..N.
    std::vector<ModeSolution> modes;
    int N = 0;
    double tail_estimate = 0.0;

    const ModeSolution& mode(int n) const {
        return params.dim == 2 ? modes.at(n + N) : modes.at(n);
    }
};

struct SolveOptions {
    RadialOptions radial;
    /// Truncation override; 0 selects ceil(k max(R_eval, 2)) + 12.
    int N = 0;
    double R_eval = 3.0;
    double tail_tol = 1e-12;
};

inline int default_truncation(double k, double R_eval) {
    return static_cast<int>(std::ceil(k * std::max(R_eval, 2.0))) + 12;
}

/// Plane-wave coefficients: d = 2 gives i^n for n = -N..N, d = 3 gives
/// i^l (2l+1) for l = 0..N.
inline std::vector<cplx> incident_coeffs(double k, int N, int dim) {
    if (!(k > 0.0)) throw ValidationError("incident_coeffs: k must be positive");
    if (N < 0) throw ValidationError("incident_coeffs: N must be non-negative");
    std::vector<cplx> g;
    if (dim == 2) {
        for (int n = -N; n <= N; ++n) g.push_back(ipow(n));
    } else if (dim == 3) {
        for (int l = 0; l <= N; ++l) g.push_back(ipow(l) * (2.0 * l + 1.0));
    } else {
        throw ValidationError("incident_coeffs: dim must be 2 or 3");
    }
    return g;
}

/// Legendre polynomials P_0..P_L at t.
inline std::vector<double> legendre_p(int L, double t) {
    std::vector<double> P(L + 1);
    P[0] = 1.0;
    if (L >= 1) P[1] = t;
    for (int l = 1; l < L; ++l) P[l + 1] = ((2.0 * l + 1.0) * t * P[l] - l * P[l - 1]) / (l + 1.0);
    return P;
}

namespace detail {

struct ExteriorValues {
    cplx J, dJ, H, dH;
};

inline ExteriorValues exterior(int n, cplx z, int dim) {
    if (dim == 2) {
        const auto c = specfun::cyl_bessel(n, z);
        return {c.J, c.dJ, c.H, c.dH};
    }
    const auto s = specfun::sph_bessel(n, z);
    return {s.j, s.dj, s.h, s.dh};
}

} // namespace detail

/// Interface matching for one mode, given the radial pair at this k.
inline ModeSolution solve_mode(int n, double k, const CloakParams& p, cplx gamma,
                               const RadialPair& rp) {
    ModeSolution m;
    m.index = n;
    m.gamma = gamma;
    const int an = n < 0 ? -n : n;
    const double sgn = (p.dim == 2 && n < 0 && (an % 2)) ? -1.0 : 1.0;
    auto ev = detail::exterior(an, 2.0 * k, p.dim);
    ev.J *= sgn;
    ev.dJ *= sgn;
    ev.H *= sgn;
    ev.dH *= sgn;

    Eigen::Matrix3cd A;
    A << rp.A_2.v, rp.B_2.v, -ev.H,
         rp.A_2.dv, rp.B_2.dv, -k * ev.dH,
         rp.A_eps.v, rp.B_eps.v, 0.0;
    Eigen::Vector3cd b(gamma * ev.J, gamma * k * ev.dJ, 0.0);

    const Eigen::JacobiSVD<Eigen::Matrix3cd> svd(A);
    const auto sv = svd.singularValues();
    m.condition_number = sv(0) / sv(2);
    m.near_resonance = m.condition_number > 1e12;
    if (gamma == cplx(0.0)) return m;

    const Eigen::Vector3cd x = A.colPivHouseholderQr().solve(b);
    m.alpha = x(0);
    m.beta = x(1);
    m.s = x(2);
    const Eigen::Vector3cd res = A * x - b;
    const double scale = std::max({std::abs(gamma * ev.J), std::abs(gamma * k * ev.dJ),
                                   A.cwiseAbs().maxCoeff() * x.cwiseAbs().maxCoeff()});
    m.residual = res.cwiseAbs().maxCoeff() / scale;
    return m;
}

inline ModeSolution solve_mode(int n, double k, const CloakParams& p, cplx gamma,
                               const RadialOptions& opt = {}) {
    const int an = n < 0 ? -n : n;
    return solve_mode(n, k, p, gamma, radial_pair(an, k, p, {}, opt));
}

namespace detail {

inline double tail_of(const ScatteringSolution& sol) {
    double mx = 0.0;
    for (const auto& m : sol.modes) mx = std::max(mx, std::abs(m.s));
    if (mx == 0.0) return 0.0;
    double last = 0.0;
    const int d = sol.params.dim;
    for (int j : {sol.N, sol.N - 1}) {
        if (j < 0) continue;
        last = std::max(last, std::abs(sol.mode(j).s));
        if (d == 2) last = std::max(last, std::abs(sol.mode(-j).s));
    }
    return last / mx;
}

} // namespace detail

/// Solves all modes for the given coefficient list (layout as incident_coeffs).
inline ScatteringSolution solve_with(double k, const CloakParams& p,
                                     const std::vector<cplx>& gamma,
                                     const RadialOptions& opt = {}) {
    p.validate();
    if (!(k > 0.0)) throw ValidationError("solve: k must be positive");
    ScatteringSolution sol;
    sol.params = p;
    sol.k = k;
    const int sz = static_cast<int>(gamma.size());
    sol.N = (p.dim == 2) ? (sz - 1) / 2 : sz - 1;
    if (p.dim == 2 && sz % 2 == 0)
        throw ValidationError("solve: two-dimensional coefficient list must have odd length");
    sol.modes.resize(sz);
    for (int an = 0; an <= sol.N; ++an) {
        const RadialPair rp = radial_pair(an, k, p, {}, opt);
        if (p.dim == 2) {
            sol.modes[sol.N + an] = solve_mode(an, k, p, gamma[sol.N + an], rp);
            if (an > 0) sol.modes[sol.N - an] = solve_mode(-an, k, p, gamma[sol.N - an], rp);
        } else {
            sol.modes[an] = solve_mode(an, k, p, gamma[an], rp);
        }
    }
    sol.tail_estimate = detail::tail_of(sol);
    return sol;
}

/// Plane-wave scattering with a posteriori truncation check: N grows until
/// the last two modes are below tail_tol relative to the largest.
inline ScatteringSolution solve(double k, const CloakParams& p, const SolveOptions& opt = {}) {
    int N = opt.N > 0 ? opt.N : default_truncation(k, opt.R_eval);
    ScatteringSolution sol;
    for (int attempt = 0; attempt < 6; ++attempt) {
        sol = solve_with(k, p, incident_coeffs(k, N, p.dim), opt.radial);
        if (opt.N > 0 || sol.tail_estimate < opt.tail_tol) break;
        N += 8;
    }
    return sol;
}

/// Closed-form scattered field of the sound-soft ball B_eps alone.
inline ScatteringSolution small_ball_scatter(double k, const CloakParams& p,
                                             const std::vector<cplx>& gamma) {
    p.validate();
    if (!(k > 0.0)) throw ValidationError("small_ball_scatter: k must be positive");
    ScatteringSolution sol;
    sol.params = p;
    sol.k = k;
    sol.kind = SolutionKind::SmallBall;
    const int sz = static_cast<int>(gamma.size());
    sol.N = (p.dim == 2) ? (sz - 1) / 2 : sz - 1;
    sol.modes.resize(sz);
    const cplx z = k * p.eps;
    if (p.dim == 2) {
        const auto a = specfun::cyl_bessel_array(sol.N, z);
        for (int n = -sol.N; n <= sol.N; ++n) {
            auto& m = sol.modes[n + sol.N];
            m.index = n;
            m.gamma = gamma[n + sol.N];
            const auto c = a.at(n);
            m.s = -m.gamma * c.J / c.H;
        }
    } else {
        const auto a = specfun::sph_bessel_array(sol.N, z);
        for (int l = 0; l <= sol.N; ++l) {
            auto& m = sol.modes[l];
            m.index = l;
            m.gamma = gamma[l];
            m.s = -m.gamma * a.j[l] / a.h[l];
        }
    }
    sol.tail_estimate = detail::tail_of(sol);
    return sol;
}

namespace detail {

// Angle used by the modal sums: polar angle in the plane (d = 2), angle from
// the third axis (d = 3).
inline double mode_angle(const Point& x, int dim) {
    if (dim == 2) return std::atan2(x[1], x[0]);
    const double r = x.norm();
    return std::acos(std::clamp(x[2] / r, -1.0, 1.0));
}

// Angular factor of mode n at angle th.
inline cplx angular(const ScatteringSolution& sol, int n, double th,
                    const std::vector<double>& P) {
    if (sol.params.dim == 2) return std::exp(I * (double(n) * th));
    return P[n];
}

} // namespace detail

/// Radial derivative of u^s as well as its value, |x| > 2 (or > eps for the
/// small-ball field).
inline std::pair<cplx, cplx> scattered_exterior(const ScatteringSolution& sol, const Point& x) {
    const int d = sol.params.dim;
    const double r = x.norm();
    const double th = detail::mode_angle(x, d);
    const cplx z = sol.k * r;
    cplx u = 0.0, ur = 0.0;
    if (d == 2) {
        const auto a = specfun::cyl_bessel_array(sol.N, z);
        for (int n = -sol.N; n <= sol.N; ++n) {
            const auto c = a.at(n);
            const cplx e = std::exp(I * (double(n) * th));
            u += sol.mode(n).s * c.H * e;
            ur += sol.mode(n).s * sol.k * c.dH * e;
        }
    } else {
        const auto a = specfun::sph_bessel_array(sol.N, z);
        const auto P = legendre_p(sol.N, std::cos(th));
        for (int l = 0; l <= sol.N; ++l) {
            u += sol.mode(l).s * a.h[l] * P[l];
            ur += sol.mode(l).s * sol.k * a.dh[l] * P[l];
        }
    }
    return {u, ur};
}

/// Incident plane wave (or coefficient-defined field) at x.
inline cplx incident_field(const ScatteringSolution& sol, const Point& x) {
    const int d = sol.params.dim;
    const double r = x.norm();
    const double th = detail::mode_angle(x, d);
    if (r == 0.0) return sol.mode(0).gamma;
    cplx u = 0.0;
    if (d == 2) {
        const auto [J, dJ] = specfun::cyl_bessel_j_array(sol.N, sol.k * r);
        for (int n = -sol.N; n <= sol.N; ++n) {
            const int an = n < 0 ? -n : n;
            const double sg = (n < 0 && (an % 2)) ? -1.0 : 1.0;
            u += sol.mode(n).gamma * sg * J[an] * std::exp(I * (double(n) * th));
        }
    } else {
        const auto a = specfun::sph_bessel_array(sol.N, sol.k * r);
        const auto P = legendre_p(sol.N, std::cos(th));
        for (int l = 0; l <= sol.N; ++l) u += sol.mode(l).gamma * a.j[l] * P[l];
    }
    return u;
}

/// u^s for |x| > 2; the total transformed field u^t for eps < |x| <= 2.
/// For a small-ball solution the exterior series is used for all |x| > eps.
inline cplx scattered_field(const ScatteringSolution& sol, const Point& x,
                            const RadialOptions& opt = {}) {
    const CloakParams& p = sol.params;
    const double r = x.norm();
    if (r < p.eps - 1e-14) throw DomainError("scattered_field: |x| < eps (cloaked region)");
    if (sol.kind == SolutionKind::SmallBall) {
        if (r <= p.eps) {
            // On S_eps the total field vanishes; report u^s = -u^i there.
            return -incident_field(sol, x);
        }
        return scattered_exterior(sol, x).first;
    }
    if (r > 2.0) return scattered_exterior(sol, x).first;
    const double rr = std::clamp(r, p.eps, 2.0);
    const double th = detail::mode_angle(x, p.dim);
    std::vector<double> P;
    if (p.dim == 3) P = legendre_p(sol.N, std::cos(th));
    cplx u = 0.0;
    for (int an = 0; an <= sol.N; ++an) {
        const RadialPair rp = radial_pair(an, sol.k, p, {rr}, opt);
        const cplx A = rp.A.at(0).v, B = rp.B.at(0).v;
        if (p.dim == 2) {
            for (int n : {an, -an}) {
                const auto& m = sol.mode(n);
                u += (m.alpha * A + m.beta * B) * detail::angular(sol, n, th, P);
                if (an == 0) break;
            }
        } else {
            const auto& m = sol.mode(an);
            u += (m.alpha * A + m.beta * B) * P[an];
        }
    }
    return u;
}

/// Total field: u^i + u^s outside B_2, u^t inside.
inline cplx total_field(const ScatteringSolution& sol, const Point& x,
                        const RadialOptions& opt = {}) {
    if (sol.kind == SolutionKind::Cloak && x.norm() <= 2.0) return scattered_field(sol, x, opt);
    return incident_field(sol, x) + scattered_field(sol, x, opt);
}

/// ||u^s||_{L^2(B_R2 \ B_R1)} by modal Parseval and adaptive quadrature.
inline double l2_scattered_norm(const ScatteringSolution& sol, double R1, double R2,
                                double tol = 1e-11) {
    const int d = sol.params.dim;
    const double rmin = sol.kind == SolutionKind::SmallBall ? sol.params.eps : 2.0;
    if (!(R1 >= rmin - 1e-14 && R2 > R1))
        throw ValidationError("l2_scattered_norm: need 2 <= R1 < R2");
    bool any = false;
    for (const auto& m : sol.modes) any = any || m.s != cplx(0.0);
    if (!any) return 0.0;
    auto f = [&](double r) {
        double acc = 0.0;
        if (d == 2) {
            const auto a = specfun::cyl_bessel_array(sol.N, sol.k * r);
            for (int n = -sol.N; n <= sol.N; ++n)
                acc += std::norm(sol.mode(n).s) * std::norm(a.at(n).H);
            return 2.0 * pi * acc * r;
        }
        const auto a = specfun::sph_bessel_array(sol.N, sol.k * r);
        for (int l = 0; l <= sol.N; ++l)
            acc += std::norm(sol.mode(l).s) * std::norm(a.h[l]) * 4.0 * pi / (2.0 * l + 1.0);
        return acc * r * r;
    };
    // Panels of about one wavelength keep the adaptive rule well conditioned.
    const int panels = std::max(1, static_cast<int>(std::ceil((R2 - R1) * sol.k / pi)));
    double total = 0.0;
    for (int i = 0; i < panels; ++i) {
        const double a = R1 + (R2 - R1) * i / panels, b = R1 + (R2 - R1) * (i + 1) / panels;
        total += quad::integrate(f, a, b, tol);
    }
    return std::sqrt(total);
}

/// Far-field pattern in the convention u^s ~ e^{ikr} r^{-(d-1)/2} u_inf.
/// `theta` is the polar angle (d = 2) or the angle from the incidence axis
/// (d = 3).
inline cplx far_field(const ScatteringSolution& sol, double theta) {
    const double k = sol.k;
    cplx acc = 0.0;
    if (sol.params.dim == 2) {
        for (int n = -sol.N; n <= sol.N; ++n)
            acc += sol.mode(n).s * ipow(-n) * std::exp(I * (double(n) * theta));
        return std::sqrt(2.0 / (pi * k)) * std::exp(-I * (pi / 4.0)) * acc;
    }
    const auto P = legendre_p(sol.N, std::cos(theta));
    for (int l = 0; l <= sol.N; ++l) acc += sol.mode(l).s * ipow(-(l + 1)) * P[l];
    return acc / k;
}

inline cplx far_field(const ScatteringSolution& sol, const Point& direction) {
    return far_field(sol, detail::mode_angle(direction, sol.params.dim));
}

/// Far field from the boundary representation over the sphere S_rho:
///   I = int_{S_rho} (u^s d_nu e^{-ik xhat.y} - d_nu u^s e^{-ik xhat.y}) ds,
/// u_inf = e^{i pi/4} I / sqrt(8 pi k) (d = 2) or I / (4 pi) (d = 3).
inline cplx far_field_boundary_integral(const ScatteringSolution& sol, const Point& direction,
                                        double rho = 4.0, int nquad = 0) {
    const int d = sol.params.dim;
    const double k = sol.k;
    const double dn = direction.norm();
    const Point xh{direction[0] / dn, direction[1] / dn, direction[2] / dn};
    if (nquad <= 0) nquad = 2 * (sol.N + static_cast<int>(std::ceil(k * rho))) + 64;
    cplx acc = 0.0;
    auto contrib = [&](const Point& y, double w) {
        const auto [u, ur] = scattered_exterior(sol, y);
        const double xy = xh[0] * y[0] + xh[1] * y[1] + xh[2] * y[2];
        const cplx e = std::exp(-I * (k * xy));
        const cplx de = -I * k * (xy / rho) * e; // normal derivative, nu = y / rho
        acc += w * (u * de - ur * e);
    };
    if (d == 2) {
        const double h = 2.0 * pi / nquad;
        for (int j = 0; j < nquad; ++j) contrib(Point::polar(rho, j * h), h * rho);
        return std::exp(I * (pi / 4.0)) * acc / std::sqrt(8.0 * pi * k);
    }
    const auto gl = quad::gauss_legendre(nquad / 2 + 8);
    const int nphi = nquad;
    for (std::size_t i = 0; i < gl.x.size(); ++i) {
        const double th = std::acos(gl.x[i]);
        for (int j = 0; j < nphi; ++j) {
            const double ph = 2.0 * pi * j / nphi;
            contrib(Point::spherical(rho, th, ph), gl.w[i] * (2.0 * pi / nphi) * rho * rho);
        }
    }
    return acc / (4.0 * pi);
}

/// ||u^i||_{L^2(B_R)} of a unit plane wave: the square root of |B_R|.
inline double plane_wave_norm(double R, int dim) {
    return dim == 2 ? std::sqrt(pi * R * R) : std::sqrt(4.0 / 3.0 * pi * R * R * R);
}

} // namespace cloaklab

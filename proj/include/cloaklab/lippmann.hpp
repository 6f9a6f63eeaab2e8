#pragma once
// Volume integral-equation oracle. Phi_k is the outgoing fundamental
// solution, Psi_k the image correction that makes Phi_k^0 = Phi_k + Psi_k
// vanish on S_eps, and
//   T u(x) = k^2 int_{B_2 \ B_eps} (q(y) - 1) u(y) Phi_k^0(x, y) dy.
// The total field of the transformed problem solves u - Tu = u^i + u^is,
// with u^is the field scattered by the sound-soft ball B_eps alone.
//
// The primary discretisation diagonalises T over angular modes: for each n a
// radial kernel g_n(r, rho) = J_n(k r_<) H_n(k r_>) - c_n H_n(kr) H_n(k rho),
// c_n = J_n(k eps)/H_n(k eps), integrated with Gauss-Legendre panels split at
// the target radius. A coarse full-grid Nystrom rule on a polar grid (two
// dimensions only) serves as a structurally independent check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "cloaklab/cloak.hpp"
#include "cloaklab/modesolver.hpp"
#include "cloaklab/quadrature.hpp"
#include "cloaklab/specfun.hpp"

namespace cloaklab {

/// Outgoing fundamental solution of Delta + k^2.
inline cplx phi_k(const Point& x, const Point& y, double k, int dim) {
    const double d = distance(x, y);
    if (d == 0.0) throw SingularArgumentError("phi_k: coincident points");
    if (dim == 2) return 0.25 * I * specfun::cyl_bessel(0, k * d).H;
    return std::exp(I * (k * d)) / (4.0 * pi * d);
}

namespace detail {

// Largest order whose Hankel function at |z| stays well inside double range.
inline int safe_order(double az, int dim) {
    int n = 1;
    for (; n < 4000; ++n) {
        double lg;
        if (dim == 2)
            lg = std::lgamma(double(n)) + n * std::log(2.0 / az);
        else
            lg = std::lgamma(2.0 * n) - std::lgamma(double(n)) - (n - 1) * std::log(2.0) -
                 (n + 1) * std::log(az);
        if (lg > 600.0) break;
    }
    return std::max(1, n - 1);
}

struct ExtArrays {
    std::vector<cplx> J, H;
};

inline ExtArrays ext_arrays(int nmax, cplx z, int dim) {
    if (dim == 2) {
        auto a = specfun::cyl_bessel_array(nmax, z);
        return {a.J, a.H};
    }
    auto a = specfun::sph_bessel_array(nmax, z);
    return {a.j, a.h};
}

} // namespace detail

/// Image-series coefficients c_n H_n(k r) H_n(k rho) for n = 0, 1, ... until
/// they fall below `tol` relative to the largest, computed without overflow
/// (ratio recurrences beyond the safe order). Throws PrecisionError if
/// `nmax_cap` terms do not suffice (points too close to S_eps).
inline std::vector<cplx> image_coeffs(double k, double eps, double r, double rho, int dim,
                                      double tol = 1e-16, int nmax_cap = 4000) {
    const double rmin = std::min(r, rho);
    if (rmin < eps * (1.0 - 1e-14)) throw DomainError("image series: point inside B_eps");
    const cplx z0 = k * eps, z1 = k * r, z2 = k * rho;
    const int n_turn = static_cast<int>(k * std::max(r, rho)) + 8;
    const int na = std::min({detail::safe_order(std::abs(z0), dim), detail::safe_order(std::abs(z1), dim),
                             detail::safe_order(std::abs(z2), dim), nmax_cap});
    std::vector<cplx> out;
    const int first = std::min(na, std::max(n_turn, 32));
    const auto A0 = detail::ext_arrays(first, z0, dim);
    const auto A1 = detail::ext_arrays(first, z1, dim);
    const auto A2 = detail::ext_arrays(first, z2, dim);
    double mx = 0.0;
    int small_run = 0;
    for (int n = 0; n <= first; ++n) {
        const cplx v = (A0.J[n] * A1.H[n]) * (A2.H[n] / A0.H[n]);
        out.push_back(v);
        mx = std::max(mx, std::abs(v));
        small_run = (std::abs(v) < tol * mx) ? small_run + 1 : 0;
        if (n > n_turn && small_run >= 3) return out;
    }
    // Continue with ratios H_n/H_{n-1} (upward) and J_n/J_{n-1} (downward).
    auto lin = [dim](int n) { return dim == 2 ? 2.0 * n : 2.0 * n + 1.0; };
    cplx R0 = A0.H[first] / A0.H[first - 1], R1 = A1.H[first] / A1.H[first - 1],
         R2 = A2.H[first] / A2.H[first - 1];
    const int top = nmax_cap + 40;
    std::vector<cplx> t(top + 2, 0.0); // t[n] = J_n(z0) / J_{n-1}(z0)
    for (int n = top; n > first; --n) t[n] = 1.0 / (lin(n) / z0 - t[n + 1]);
    cplx v = out.back();
    for (int n = first + 1; n <= nmax_cap; ++n) {
        // lin(n-1) is the recurrence coefficient linking orders n-2, n-1, n
        R0 = lin(n - 1) / z0 - 1.0 / R0;
        R1 = lin(n - 1) / z1 - 1.0 / R1;
        R2 = lin(n - 1) / z2 - 1.0 / R2;
        v *= t[n] / R0 * R1 * R2;
        out.push_back(v);
        small_run = (std::abs(v) < tol * mx) ? small_run + 1 : 0;
        if (small_run >= 3) return out;
    }
    throw PrecisionError("image series: no convergence within " + std::to_string(nmax_cap) +
                         " terms (point too close to S_eps)");
}

/// Dirichlet image correction Psi_k(x, y) for the exterior of B_eps.
inline cplx psi_k(const Point& x, const Point& y, double k, const CloakParams& p) {
    const double r = x.norm(), rho = y.norm();
    if (r < p.eps * (1.0 - 1e-14) || rho < p.eps * (1.0 - 1e-14))
        throw DomainError("psi_k: points must lie outside B_eps");
    const auto c = image_coeffs(k, p.eps, r, rho, p.dim, 1e-17);
    cplx acc = 0.0;
    if (p.dim == 2) {
        const double dth = std::atan2(x[1], x[0]) - std::atan2(y[1], y[0]);
        for (std::size_t n = 0; n < c.size(); ++n)
            acc += (n == 0 ? 1.0 : 2.0) * c[n] * std::cos(double(n) * dth);
        return -0.25 * I * acc;
    }
    const double cg = std::clamp((x[0] * y[0] + x[1] * y[1] + x[2] * y[2]) / (r * rho), -1.0, 1.0);
    const auto P = legendre_p(static_cast<int>(c.size()) - 1, cg);
    for (std::size_t l = 0; l < c.size(); ++l) acc += (2.0 * l + 1.0) * c[l] * P[l];
    return -I * k / (4.0 * pi) * acc;
}

struct GreenEval {
    Point x, y;
    cplx phi, psi, phi0;
};

inline GreenEval green_eval(const Point& x, const Point& y, double k, const CloakParams& p) {
    GreenEval g{x, y, phi_k(x, y, k, p.dim), psi_k(x, y, k, p), 0.0};
    g.phi0 = g.phi + g.psi;
    return g;
}

/// Mode-resolved field on a set of radii: d = 2 modes n = -N..N (stored at
/// index n + N), d = 3 modes l = 0..N.
struct ModeField {
    int dim = 2;
    int N = 0;
    std::vector<double> r;
    std::vector<std::vector<cplx>> u;

    int count() const { return dim == 2 ? 2 * N + 1 : N + 1; }
    int order(int idx) const { return dim == 2 ? idx - N : idx; }
    std::vector<cplx>& at(int n) { return u[dim == 2 ? n + N : n]; }
    const std::vector<cplx>& at(int n) const { return u[dim == 2 ? n + N : n]; }
};

struct ModalOptions {
    int nodes = 128;
    int panel = 32;
};

/// Per-mode discretisation of T on Gauss-Legendre nodes of [eps, 2].
class ModalOperator {
public:
    ModalOperator(double k, const CloakParams& p, int N, const ModalOptions& opt = {})
        : k_(k), p_(p), N_(N), opt_(opt) {
        p.validate();
        if (!(k > 0.0)) throw ValidationError("ModalOperator: k must be positive");
        ref_ = quad::gauss_legendre(opt.nodes);
        nodes_ = quad::gauss_legendre(opt.nodes, p.eps, 2.0);
        interp_ = quad::Barycentric(ref_, p.eps, 2.0);
        sub_ = quad::gauss_legendre(opt.panel);
        w_.resize(opt.nodes);
        for (int j = 0; j < opt.nodes; ++j) w_[j] = q_index(nodes_.x[j], k, p) - 1.0;
        pref_ = (p.dim == 2) ? cplx(0.0, pi * k * k / 2.0) : cplx(0.0, k * k * k);
        const auto a0 = detail::ext_arrays(N, k * p.eps, p.dim);
        c_.resize(N + 1);
        for (int n = 0; n <= N; ++n) c_[n] = a0.J[n] / a0.H[n];
        a0_ = a0;
    }

    double k() const { return k_; }
    int N() const { return N_; }
    const CloakParams& params() const { return p_; }
    const quad::Rule& nodes() const { return nodes_; }
    const std::vector<cplx>& contrast() const { return w_; }
    cplx prefactor() const { return pref_; }
    /// c_n = J_n(k eps) / H_n(k eps) (spherical analogue for d = 3).
    cplx image_ratio(int n) const { return c_.at(n < 0 ? -n : n); }

    /// Kernel g_n(r, rho) for n = 0..N at one pair of radii, given the
    /// function arrays at k r and k rho.
    void kernel(double r, double rho, const detail::ExtArrays& ar, const detail::ExtArrays& ap,
                std::vector<cplx>& g) const {
        g.resize(N_ + 1);
        const bool rho_inner = rho <= r;
        for (int n = 0; n <= N_; ++n) {
            const cplx direct = rho_inner ? ap.J[n] * ar.H[n] : ar.J[n] * ap.H[n];
            const cplx image = (a0_.J[n] * ar.H[n]) * (ap.H[n] / a0_.H[n]);
            g[n] = direct - image;
        }
    }

    /// Matrices M_n (n = 0..N) mapping node values of u_n to (T u)_n at the
    /// given target radii (each >= eps).
    std::vector<Eigen::MatrixXcd> matrices(const std::vector<double>& targets) const {
        const int m = opt_.nodes;
        const int nt = static_cast<int>(targets.size());
        std::vector<Eigen::MatrixXcd> M(N_ + 1, Eigen::MatrixXcd::Zero(nt, m));
        if (p_.sigma_off) return M;
        const double e = p_.eps;
        std::vector<cplx> g;
        for (int i = 0; i < nt; ++i) {
            const double r = targets[i];
            if (r < e - 1e-14) throw DomainError("apply_T: target inside B_eps");
            const auto ar = detail::ext_arrays(N_, k_ * r, p_.dim);
            const double split = std::clamp(r, e, 2.0);
            for (int piece = 0; piece < 2; ++piece) {
                const double a = piece == 0 ? e : split, b = piece == 0 ? split : 2.0;
                if (b - a <= 0.0) continue;
                for (std::size_t q = 0; q < sub_.x.size(); ++q) {
                    const double rho = 0.5 * (a + b) + 0.5 * (b - a) * sub_.x[q];
                    const double wq = 0.5 * (b - a) * sub_.w[q];
                    const auto ap = detail::ext_arrays(N_, k_ * rho, p_.dim);
                    kernel(r, rho, ar, ap, g);
                    const cplx fac = pref_ * wq * (q_index(rho, k_, p_) - 1.0) *
                                     std::pow(rho, p_.dim - 1);
                    const auto row = interp_.row(rho);
                    for (int n = 0; n <= N_; ++n) {
                        const cplx c = fac * g[n];
                        for (int j = 0; j < m; ++j) M[n](i, j) += c * row[j];
                    }
                }
            }
        }
        return M;
    }

    /// Node-to-node matrices, built on first use.
    const std::vector<Eigen::MatrixXcd>& node_matrices() const {
        if (node_M_.empty()) node_M_ = matrices(nodes_.x);
        return node_M_;
    }

private:
    double k_;
    CloakParams p_;
    int N_;
    ModalOptions opt_;
    quad::Rule ref_, nodes_, sub_;
    quad::Barycentric interp_;
    std::vector<cplx> w_;
    cplx pref_;
    std::vector<cplx> c_;
    detail::ExtArrays a0_;
    mutable std::vector<Eigen::MatrixXcd> node_M_;
};

/// Applies T to a mode-resolved field given on the operator's nodes; result
/// on the same nodes.
inline ModeField apply_T(const ModalOperator& T, const ModeField& u) {
    const auto& M = T.node_matrices();
    if (u.N > T.N()) throw ValidationError("apply_T: field has more modes than the operator");
    ModeField out = u;
    for (int idx = 0; idx < u.count(); ++idx) {
        const int n = u.order(idx);
        const auto& Mn = M[n < 0 ? -n : n];
        const Eigen::Map<const Eigen::VectorXcd> x(u.u[idx].data(), u.u[idx].size());
        const Eigen::VectorXcd y = Mn * x;
        out.u[idx].assign(y.data(), y.data() + y.size());
    }
    return out;
}

/// (T u)_n at arbitrary radii >= eps.
inline ModeField apply_T_at(const ModalOperator& T, const ModeField& u,
                            const std::vector<double>& targets) {
    const auto M = T.matrices(targets);
    ModeField out;
    out.dim = u.dim;
    out.N = u.N;
    out.r = targets;
    out.u.resize(u.count());
    for (int idx = 0; idx < u.count(); ++idx) {
        const int n = u.order(idx);
        const Eigen::Map<const Eigen::VectorXcd> x(u.u[idx].data(), u.u[idx].size());
        const Eigen::VectorXcd y = M[n < 0 ? -n : n] * x;
        out.u[idx].assign(y.data(), y.data() + y.size());
    }
    return out;
}

/// Plane-wave incident field and small-ball scattered field, mode by mode,
/// at the operator's nodes.
inline ModeField incident_plus_ball(const ModalOperator& T, const std::vector<cplx>& gamma) {
    const CloakParams& p = T.params();
    ModeField f;
    f.dim = p.dim;
    f.N = p.dim == 2 ? (static_cast<int>(gamma.size()) - 1) / 2 : static_cast<int>(gamma.size()) - 1;
    f.r = T.nodes().x;
    f.u.assign(f.count(), std::vector<cplx>(f.r.size()));
    for (std::size_t j = 0; j < f.r.size(); ++j) {
        const auto a = detail::ext_arrays(f.N, T.k() * f.r[j], p.dim);
        for (int idx = 0; idx < f.count(); ++idx) {
            const int n = f.order(idx), an = n < 0 ? -n : n;
            const double sg = (p.dim == 2 && n < 0 && (an % 2)) ? -1.0 : 1.0;
            f.u[idx][j] = gamma[idx] * sg * (a.J[an] - T.image_ratio(an) * a.H[an]);
        }
    }
    return f;
}

/// Scattered coefficients s_n of u^s = T u + u^is outside B_2.
inline std::vector<cplx> scattered_coeffs(const ModalOperator& T, const ModeField& u,
                                          const std::vector<cplx>& gamma) {
    const CloakParams& p = T.params();
    const auto& nd = T.nodes();
    std::vector<cplx> s(u.count());
    std::vector<detail::ExtArrays> arr;
    arr.reserve(nd.x.size());
    for (double r : nd.x) arr.push_back(detail::ext_arrays(u.N, T.k() * r, p.dim));
    for (int idx = 0; idx < u.count(); ++idx) {
        const int n = u.order(idx), an = n < 0 ? -n : n;
        const double sg = (p.dim == 2 && n < 0 && (an % 2)) ? -1.0 : 1.0;
        const cplx c = T.image_ratio(an);
        cplx acc = 0.0;
        for (std::size_t j = 0; j < nd.x.size(); ++j)
            acc += nd.w[j] * T.contrast()[j] * std::pow(nd.x[j], p.dim - 1) *
                   (arr[j].J[an] - c * arr[j].H[an]) * u.u[idx][j];
        s[idx] = -gamma[idx] * c + T.prefactor() * sg * acc;
    }
    return s;
}

struct TNormEstimate {
    double value = 0.0;
    int worst_mode = 0;
    std::vector<double> per_mode;
    int iterations = 0;
    bool converged = true;
};

/// Largest singular value of T on L^2(B_R \ B_eps) by power iteration on
/// T*T, mode by mode (the modes are orthogonal).
inline TNormEstimate t_norm_estimate(const ModalOperator& T, double R = 3.0, double tol = 1e-6,
                                     int max_iter = 2000) {
    const CloakParams& p = T.params();
    TNormEstimate est;
    est.per_mode.assign(T.N() + 1, 0.0);
    if (p.sigma_off) return est;
    const auto& nd = T.nodes();
    const int m = static_cast<int>(nd.x.size());
    std::vector<double> tgt = nd.x, wout(m);
    for (int j = 0; j < m; ++j) wout[j] = nd.w[j] * std::pow(nd.x[j], p.dim - 1);
    if (R > 2.0) {
        const auto outer = quad::gauss_legendre(32, 2.0, R);
        for (std::size_t j = 0; j < outer.x.size(); ++j) {
            tgt.push_back(outer.x[j]);
            wout.push_back(outer.w[j] * std::pow(outer.x[j], p.dim - 1));
        }
    }
    const auto M = T.matrices(tgt);
    for (int n = 0; n <= T.N(); ++n) {
        Eigen::MatrixXcd B = M[n];
        for (int i = 0; i < B.rows(); ++i) B.row(i) *= std::sqrt(wout[i]);
        for (int j = 0; j < m; ++j) B.col(j) /= std::sqrt(nd.w[j] * std::pow(nd.x[j], p.dim - 1));
        Eigen::VectorXcd v(m);
        for (int j = 0; j < m; ++j) v(j) = 1.0 + 0.01 * j;
        v.normalize();
        double sig = 0.0;
        bool conv = false;
        int it = 0;
        for (; it < max_iter && !conv; ++it) {
            const Eigen::VectorXcd w = B.adjoint() * (B * v);
            const double lam = w.norm();
            if (lam == 0.0) {
                sig = 0.0;
                conv = true;
                break;
            }
            const double s_new = std::sqrt(lam);
            conv = std::abs(s_new - sig) <= tol * s_new;
            sig = s_new;
            v = w / lam;
        }
        est.per_mode[n] = sig;
        est.iterations = std::max(est.iterations, it);
        est.converged = est.converged && conv;
        if (sig > est.value) {
            est.value = sig;
            est.worst_mode = n;
        }
    }
    return est;
}

struct LSResult {
    double t_norm = 0.0;
    int iterations = 0;
    /// relative update size ||u_{m+1} - u_m|| / ||u_{m+1}|| per iteration
    std::vector<double> residuals;
    ModeField u;
    /// Scattered field outside B_2 in the same layout as the mode solver.
    ScatteringSolution scattered;
};

struct LSOptions {
    ModalOptions modal;
    double tol = 1e-9;
    int max_iter = 1000;
    /// Fixed-point iteration is refused when the measured norm reaches this.
    double max_norm = 0.9;
    double R = 3.0;
};

namespace detail {

inline double field_norm2(const ModeField& f, const quad::Rule& nd) {
    double acc = 0.0;
    for (const auto& un : f.u)
        for (std::size_t j = 0; j < un.size(); ++j)
            acc += nd.w[j] * std::pow(nd.x[j], f.dim - 1) * std::norm(un[j]);
    return acc;
}

} // namespace detail

/// Fixed-point solution of u - T u = u^i + u^is on the annulus.
inline LSResult ls_solve(double k, const CloakParams& p, const std::vector<cplx>& gamma,
                         const LSOptions& opt = {}) {
    const int N = p.dim == 2 ? (static_cast<int>(gamma.size()) - 1) / 2
                             : static_cast<int>(gamma.size()) - 1;
    ModalOperator T(k, p, N, opt.modal);
    LSResult res;
    res.t_norm = t_norm_estimate(T, opt.R).value;
    if (res.t_norm >= opt.max_norm)
        throw DomainError("ls_solve: measured ||T|| = " + std::to_string(res.t_norm) +
                          " is not below " + std::to_string(opt.max_norm) +
                          "; the fixed-point iteration is not certified to converge");
    const ModeField f = incident_plus_ball(T, gamma);
    const auto& nd = T.nodes();
    ModeField u = f;
    for (int it = 1; it <= opt.max_iter; ++it) {
        ModeField tu = apply_T(T, u);
        double diff = 0.0;
        for (int idx = 0; idx < u.count(); ++idx)
            for (std::size_t j = 0; j < nd.x.size(); ++j) {
                const cplx nv = f.u[idx][j] + tu.u[idx][j];
                diff += nd.w[j] * std::pow(nd.x[j], p.dim - 1) * std::norm(nv - u.u[idx][j]);
                tu.u[idx][j] = nv;
            }
        u = std::move(tu);
        const double nrm = std::sqrt(detail::field_norm2(u, nd));
        const double rel = nrm > 0.0 ? std::sqrt(diff) / nrm : 0.0;
        res.residuals.push_back(rel);
        res.iterations = it;
        if (rel < opt.tol) break;
    }
    if (res.residuals.empty() || res.residuals.back() >= opt.tol)
        throw PrecisionError("ls_solve: no convergence within the iteration cap");
    res.u = u;
    const auto s = scattered_coeffs(T, u, gamma);
    res.scattered.params = p;
    res.scattered.k = k;
    res.scattered.N = N;
    res.scattered.modes.resize(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        res.scattered.modes[i].index = u.order(static_cast<int>(i));
        res.scattered.modes[i].gamma = gamma[i];
        res.scattered.modes[i].s = s[i];
    }
    res.scattered.tail_estimate = detail::tail_of(res.scattered);
    return res;
}

/// Relative L^2(B_R2 \ B_R1) distance between two scattered fields with the
/// same mode layout.
inline double relative_l2_difference(const ScatteringSolution& a, const ScatteringSolution& b,
                                     double R1 = 2.0, double R2 = 3.0) {
    if (a.N != b.N || a.params.dim != b.params.dim)
        throw ValidationError("relative_l2_difference: mode layouts differ");
    ScatteringSolution d = a;
    for (std::size_t i = 0; i < d.modes.size(); ++i) d.modes[i].s = a.modes[i].s - b.modes[i].s;
    const double na = l2_scattered_norm(a, R1, R2);
    return na > 0.0 ? l2_scattered_norm(d, R1, R2) / na : l2_scattered_norm(d, R1, R2);
}

/// Values of T u on a polar grid (midpoint radii, equispaced angles).
struct PolarGridField {
    std::vector<double> r, theta;
    /// values[i * theta.size() + m]
    std::vector<cplx> values;
};

/// Full-grid Nystrom application of T in two dimensions: midpoint rule in r,
/// trapezoidal rule in theta, and subtraction of f(x) times the exact
/// integral of Phi_k over the annulus to tame the logarithmic singularity.
/// Real-argument Bessel functions come from the standard library here, so
/// this path shares no special-function code with the modal one except for
/// the image series Psi_k.
inline PolarGridField apply_T_nystrom(double k, const CloakParams& p, int Nr, int Nth,
                                      const std::function<cplx(const Point&)>& u) {
    p.validate();
    if (p.dim != 2) throw ValidationError("apply_T_nystrom: two-dimensional only");
    if (Nr < 2 || Nth < 4) throw ValidationError("apply_T_nystrom: grid too coarse");
    PolarGridField out;
    const double e = p.eps, hr = (2.0 - e) / Nr, ht = 2.0 * pi / Nth;
    for (int i = 0; i < Nr; ++i) out.r.push_back(e + (i + 0.5) * hr);
    for (int m = 0; m < Nth; ++m) out.theta.push_back(m * ht);
    out.values.assign(std::size_t(Nr) * Nth, 0.0);
    if (p.sigma_off) return out;

    auto H0 = [](double x) { return cplx(std::cyl_bessel_j(0.0, x), std::cyl_neumann(0.0, x)); };
    auto H1 = [](double x) { return cplx(std::cyl_bessel_j(1.0, x), std::cyl_neumann(1.0, x)); };
    auto J0 = [](double x) { return std::cyl_bessel_j(0.0, x); };
    auto J1 = [](double x) { return std::cyl_bessel_j(1.0, x); };

    std::vector<cplx> f(out.values.size());
    for (int i = 0; i < Nr; ++i) {
        const cplx w = q_index(out.r[i], k, p) - 1.0;
        for (int m = 0; m < Nth; ++m) f[i * Nth + m] = w * u(Point::polar(out.r[i], out.theta[m]));
    }

    // Phi and Psi depend on (target radius, source radius, angle offset) only.
    const int half = Nth / 2;
    const std::size_t stride = half + 1;
    std::vector<cplx> Ph(std::size_t(Nr) * Nr * stride), Ps(Ph.size());
    for (int i = 0; i < Nr; ++i)
        for (int j = 0; j < Nr; ++j) {
            const double r = out.r[i], rho = out.r[j];
            const auto c = image_coeffs(k, e, r, rho, 2, 1e-16);
            for (int m = 0; m <= half; ++m) {
                const double dth = m * ht;
                cplx psi = 0.0;
                for (std::size_t n = 0; n < c.size(); ++n)
                    psi += (n == 0 ? 1.0 : 2.0) * c[n] * std::cos(double(n) * dth);
                const std::size_t at = (std::size_t(i) * Nr + j) * stride + m;
                Ps[at] = -0.25 * I * psi;
                const double d2 = r * r + rho * rho - 2.0 * r * rho * std::cos(dth);
                Ph[at] = (i == j && m == 0) ? cplx(0.0)
                                            : 0.25 * I * H0(k * std::sqrt(std::max(d2, 0.0)));
            }
        }

    const double k2 = k * k;
    for (int i = 0; i < Nr; ++i) {
        const double r = out.r[i];
        const cplx int_phi = (I * pi / (2.0 * k)) *
                             (H0(k * r) * (r * J1(k * r) - e * J1(k * e)) +
                              J0(k * r) * (2.0 * H1(2.0 * k) - r * H1(k * r)));
        for (int mt = 0; mt < Nth; ++mt) {
            const cplx fx = f[i * Nth + mt];
            cplx acc = fx * int_phi;
            for (int j = 0; j < Nr; ++j) {
                const double dA = out.r[j] * hr * ht;
                const std::size_t base = (std::size_t(i) * Nr + j) * stride;
                cplx row = 0.0;
                for (int ms = 0; ms < Nth; ++ms) {
                    int m = std::abs(mt - ms);
                    if (m > half) m = Nth - m;
                    const cplx fy = f[j * Nth + ms];
                    row += (fy - fx) * Ph[base + m] + fy * Ps[base + m];
                }
                acc += dA * row;
            }
            out.values[i * Nth + mt] = k2 * acc;
        }
    }
    return out;
}

/// Quadrature estimate of sup_{|x| <= R} int_{B_r} |Phi_k(x, y)|^2 dy in two
/// dimensions, divided by min{1 + ln^2 k, 1/k}.
/// Relative discrete L^2 gap between the modal and the full-grid Nystrom
/// application of T to the plane wave e^{ikx_1} (two dimensions), measured on
/// the Nystrom grid.
inline double nystrom_vs_modal(double k, const CloakParams& p, int grid, int N = 30,
                               const ModalOptions& mopt = {}) {
    const ModalOperator T(k, p, N, mopt);
    ModeField u;
    u.dim = 2;
    u.N = N;
    u.r = T.nodes().x;
    u.u.assign(2 * N + 1, std::vector<cplx>(u.r.size()));
    for (std::size_t j = 0; j < u.r.size(); ++j) {
        const auto J = specfun::cyl_bessel_j_array(N, k * u.r[j]).first;
        for (int n = -N; n <= N; ++n)
            u.at(n)[j] = ipow(n) * ((n < 0 && (-n % 2)) ? -J[-n] : J[n < 0 ? -n : n]);
    }
    const auto ny = apply_T_nystrom(k, p, grid, grid, [&](const Point& x) { return std::exp(I * (k * x[0])); });
    const auto tu = apply_T_at(T, u, ny.r);
    double num = 0.0, den = 0.0;
    for (int i = 0; i < grid; ++i)
        for (int m = 0; m < grid; ++m) {
            cplx v = 0.0;
            for (int n = -N; n <= N; ++n) v += tu.at(n)[i] * std::exp(I * (n * ny.theta[m]));
            num += std::norm(v - ny.values[std::size_t(i) * grid + m]) * ny.r[i];
            den += std::norm(v) * ny.r[i];
        }
    return std::sqrt(num / den);
}

struct KernelBound {
    double k = 0.0;
    double sup_integral = 0.0;
    double argmax = 0.0;
    double ratio = 0.0;
};

inline KernelBound kernel_bound_check(double k, double R = 3.0, double r = 2.0, int samples = 31) {
    if (!(k > 0.0 && R > 0.0 && r > 0.0)) throw ValidationError("kernel_bound_check: bad arguments");
    auto absH0sq = [k](double s) {
        const double x = k * s;
        const double j = std::cyl_bessel_j(0.0, x), y = std::cyl_neumann(0.0, x);
        return (j * j + y * y) / 16.0;
    };
    KernelBound kb;
    kb.k = k;
    boost::math::quadrature::tanh_sinh<double> ts;
    // Polar coordinates centred at x: the angular extent of B_r at distance s
    // from x is a closed-form arc, and the log singularity at s = 0 is
    // integrable against the Jacobian s.
    for (int i = 0; i < samples; ++i) {
        const double c = R * i / (samples - 1);
        auto arc = [&](double s) {
            if (c == 0.0) return s < r ? 2.0 * pi : 0.0;
            if (s <= r - c) return 2.0 * pi;
            if (s >= r + c) return 0.0;
            const double t = std::clamp((c * c + s * s - r * r) / (2.0 * c * s), -1.0, 1.0);
            return 2.0 * (pi - std::acos(t));
        };
        const double smax = r + c;
        std::vector<double> cuts{0.0};
        if (c > 0.0 && std::abs(r - c) > 0.0) cuts.push_back(std::abs(r - c));
        cuts.push_back(smax);
        std::sort(cuts.begin(), cuts.end());
        double v = 0.0;
        for (std::size_t q = 0; q + 1 < cuts.size(); ++q) {
            const double a = cuts[q], b = cuts[q + 1];
            if (b <= a) continue;
            // tanh-sinh copes with the log singularity at s = 0 and the
            // square-root edges of the arc length
            v += ts.integrate([&](double s) { return s <= 0.0 ? 0.0 : absH0sq(s) * arc(s) * s; },
                              a, b);
        }
        if (v > kb.sup_integral) {
            kb.sup_integral = v;
            kb.argmax = c;
        }
    }
    kb.ratio = kb.sup_integral / std::min(1.0 + std::pow(std::log(k), 2), 1.0 / k);
    return kb;
}

} // namespace cloaklab

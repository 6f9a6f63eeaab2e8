#pragma once
// Radial equation of the transformed problem on the annulus eps <= r <= 2:
//   R'' + ((d-1)/r) R' + (k^2 q(r) - nu/r^2) R = 0,
// nu = n^2 (d = 2) or l(l+1) (d = 3). Two solutions are carried together:
// the canonical Cauchy pair N (N = 1, N' = 0 at eps) and D (D = 0, D' = 1 at
// eps). Both are entire in k away from the poles of sigma, so determinants
// built from them have no spurious branch cuts.

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include <boost/numeric/odeint/stepper/runge_kutta_fehlberg78.hpp>

#include "cloaklab/cloak.hpp"
#include "cloaklab/specfun.hpp"

namespace cloaklab {

struct RadialOptions {
    double rtol = 1e-13;
    double atol = 1e-300;
    long max_steps = 200000;
};

/// Value and derivative of one radial solution at one radius.
struct RadialValue {
    cplx v, dv;
};

struct RadialPair {
    int index = 0;
    cplx k;
    /// Solutions at r = eps (the Cauchy data) and at r = 2.
    RadialValue A_eps{1.0, 0.0}, B_eps{0.0, 1.0};
    RadialValue A_2, B_2;
    /// Dense samples at the radii requested by the caller.
    std::vector<double> r;
    std::vector<RadialValue> A, B;
    /// max deviation of r^{d-1} W(A,B) from its value at eps, relative to
    /// max(eps^{d-1}, r^{d-1}(|A B'| + |A' B|)).
    double wronskian_residual = 0.0;
    long steps = 0;
};

namespace detail {

using State8 = std::array<double, 8>;

struct RadialSystem {
    cplx k2;        // k^2
    cplx k2sigma;   // k^2 sigma
    double nu;      // n^2 or l(l+1)
    double dm1;     // d - 1
    const CloakParams* p;

    // Annulus formula on the closed interval [eps, 2]: the end stages of a
    // step land exactly on r = 2, where det_DF already switches to 1.
    double det(double r) const {
        const double e = p->eps;
        const int d = p->dim;
        return std::pow(2.0 - 2.0 * e + r, d - 1) / (std::pow(2.0 - e, d) * std::pow(r, d - 1));
    }

    void operator()(const State8& x, State8& dxdt, double r) const {
        const cplx kq = k2 + k2sigma * det(r);
        const cplx c = kq - nu / (r * r);
        for (int s = 0; s < 2; ++s) {
            const cplx u{x[4 * s], x[4 * s + 1]};
            const cplx du{x[4 * s + 2], x[4 * s + 3]};
            const cplx d2u = -(dm1 / r) * du - c * u;
            dxdt[4 * s] = du.real();
            dxdt[4 * s + 1] = du.imag();
            dxdt[4 * s + 2] = d2u.real();
            dxdt[4 * s + 3] = d2u.imag();
        }
    }
};

inline double sub_norm(const State8& x, int s) {
    double a = 0.0;
    for (int i = 0; i < 4; ++i) a += x[4 * s + i] * x[4 * s + i];
    return std::sqrt(a);
}

inline RadialValue unpack(const State8& x, int s) {
    return {{x[4 * s], x[4 * s + 1]}, {x[4 * s + 2], x[4 * s + 3]}};
}

} // namespace detail

/// Integrates N and D from eps to 2 (and records them at `samples`, which
/// must lie in [eps, 2]). Throws IntegrationError if the step size underflows.
inline RadialPair radial_pair(int n, cplx k, const CloakParams& p,
                              std::vector<double> samples = {},
                              const RadialOptions& opt = {}) {
    using detail::State8;
    if (n < 0) throw DomainError("radial_pair: index must be non-negative");
    const double nu = (p.dim == 2) ? double(n) * n : double(n) * (n + 1.0);
    detail::RadialSystem sys{k * k, k * k * sigma(k, p), nu, double(p.dim - 1), &p};

    std::sort(samples.begin(), samples.end());
    for (double s : samples)
        if (s < p.eps - 1e-14 || s > 2.0 + 1e-14)
            throw DomainError("radial_pair: sample radius outside [eps, 2]");

    RadialPair out;
    out.index = n;
    out.k = k;
    out.r = samples;
    out.A.reserve(samples.size());
    out.B.reserve(samples.size());

    boost::numeric::odeint::runge_kutta_fehlberg78<State8> stepper;
    State8 x{1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0};
    State8 xn{}, xerr{};
    double t = p.eps;
    const double tend = 2.0;
    double h = (tend - t) / 32.0;
    const double w0 = std::pow(p.eps, p.dim - 1); // r^{d-1} W at eps
    double wres = 0.0;
    std::size_t next = 0;

    auto record = [&](const State8& s, double r) {
        const auto a = detail::unpack(s, 0), b = detail::unpack(s, 1);
        // Relative to the size of the two products, so that cancellation
        // between growing solutions is not mistaken for integration error.
        const double rd = std::pow(r, p.dim - 1);
        const cplx w = (a.v * b.dv - a.dv * b.v) * rd;
        const double scale = std::max(w0, rd * (std::abs(a.v * b.dv) + std::abs(a.dv * b.v)));
        wres = std::max(wres, std::abs(w - w0) / scale);
    };
    while (next < samples.size() && samples[next] <= t + 1e-15) {
        out.A.push_back(detail::unpack(x, 0));
        out.B.push_back(detail::unpack(x, 1));
        ++next;
    }

    long steps = 0;
    while (t < tend) {
        if (++steps > opt.max_steps)
            throw IntegrationError("radial_pair: step budget exhausted (n = " + std::to_string(n) +
                                   ", r = " + std::to_string(t) + ")");
        const double stop = (next < samples.size()) ? std::min(samples[next], tend) : tend;
        double dt = std::min(h, stop - t);
        const bool clipped = dt < h;
        stepper.do_step(sys, x, t, xn, dt, xerr);
        double errn = 0.0;
        for (int s = 0; s < 2; ++s) {
            const double scale = opt.atol + opt.rtol * std::max(detail::sub_norm(x, s),
                                                                detail::sub_norm(xn, s));
            errn = std::max(errn, detail::sub_norm(xerr, s) / scale);
        }
        if (!std::isfinite(errn)) errn = 1e10;
        if (errn <= 1.0) {
            t = (dt == stop - t) ? stop : t + dt;
            x = xn;
            record(x, t);
            while (next < samples.size() && samples[next] <= t + 1e-15) {
                out.A.push_back(detail::unpack(x, 0));
                out.B.push_back(detail::unpack(x, 1));
                ++next;
            }
            if (!clipped)
                h = dt * std::min(4.0, 0.9 * std::pow(std::max(errn, 1e-12), -1.0 / 8.0));
        } else {
            h = dt * std::max(0.2, 0.9 * std::pow(errn, -1.0 / 8.0));
        }
        if (h < 1e-13 * (tend - p.eps))
            throw IntegrationError("radial_pair: step size underflow at r = " + std::to_string(t) +
                                   " (n = " + std::to_string(n) + ")");
    }
    out.A_2 = detail::unpack(x, 0);
    out.B_2 = detail::unpack(x, 1);
    out.wronskian_residual = wres;
    out.steps = steps;
    return out;
}

/// Regular Frobenius solution r^{|n|} sum a_m r^m of the two-dimensional
/// radial equation (continued analytically through the annulus), with its
/// derivative. Independent of the ODE integrator; used for validation.
inline RadialValue frobenius_regular(int n, cplx k, const CloakParams& p, double r) {
    if (p.dim != 2) throw DomainError("frobenius_regular: two-dimensional only");
    const int m0 = n < 0 ? -n : n;
    const double e = p.eps;
    const cplx c = k * k * sigma(k, p) / ((2.0 - e) * (2.0 - e));
    const cplx p1 = c * (2.0 - 2.0 * e), p2 = k * k + c;
    cplx am2 = 0.0, am1 = 1.0; // a_{-1}, a_0
    cplx sum = 1.0, dsum = double(m0) / r;
    double rp = 1.0;
    double prev = 1.0;
    for (int m = 1; m < 2000; ++m) {
        const cplx am = -(p1 * am1 + p2 * am2) / (double(m) * (m + 2.0 * m0));
        rp *= r;
        const cplx term = am * rp;
        sum += term;
        dsum += (m + double(m0)) / r * term;
        am2 = am1;
        am1 = am;
        const double t = std::abs(term);
        if (m > 4 && t < 1e-18 * std::abs(sum) && prev < 1e-18 * std::abs(sum)) break;
        prev = t;
    }
    const double lead = std::pow(r, m0);
    return {lead * sum, lead * dsum};
}

/// Closed-form regular solution r^{-1/2} M_{lambda,n}(zeta r) of the
/// two-dimensional radial equation, valid because q - 1 is a multiple of
/// (2 - 2 eps + r) / r on the annulus.
inline RadialValue whittaker_regular(int n, cplx k, const CloakParams& p, double r) {
    if (p.dim != 2) throw DomainError("whittaker_regular: two-dimensional only");
    const double e = p.eps;
    const cplx s = sigma(k, p);
    const cplx rt = std::sqrt(s + (2.0 - e) * (2.0 - e));
    const cplx zeta = 2.0 * I * k * rt / (e - 2.0);
    const cplx lam = I * k * s * (1.0 - e) / ((2.0 - e) * rt);
    const auto [m, dm] = specfun::whittaker_m_deriv(lam, n < 0 ? -n : n, zeta * r);
    return {m / std::sqrt(r), -0.5 * m / std::pow(r, 1.5) + zeta * dm / std::sqrt(r)};
}

/// Largest relative gap between the integrated solution with Whittaker
/// Cauchy data at eps and the closed form, over `samples` radii in [eps, 2].
inline double whittaker_ode_gap(int n, cplx k, const CloakParams& p, int samples = 16,
                                const RadialOptions& opt = {}) {
    std::vector<double> rs;
    for (int i = 0; i < samples; ++i) rs.push_back(p.eps + (2.0 - p.eps) * i / (samples - 1));
    const auto rp = radial_pair(n, k, p, rs, opt);
    const auto w0 = whittaker_regular(n, k, p, p.eps);
    double worst = 0.0;
    for (std::size_t i = 0; i < rs.size(); ++i) {
        const cplx ode = w0.v * rp.A[i].v + w0.dv * rp.B[i].v;
        const cplx ref = whittaker_regular(n, k, p, rs[i]).v;
        worst = std::max(worst, std::abs(ode - ref) / std::abs(ref));
    }
    return worst;
}

} // namespace cloaklab

#pragma once
// Complex-argument Bessel, Hankel and Whittaker functions of integer order.
//
// Cylindrical functions: J_n by Miller's backward recurrence normalised with
// the Jacobi-Anger sum for e^{-iz} (Im z >= 0) or e^{iz} (Im z < 0); Y_0, Y_1
// by Neumann series for |z| <= 17, H_0, H_1 by the Hankel asymptotic series
// above that, and by a trapezoidal K_nu integral when Im z > 1 inside the
// series disc (where J + iY would cancel). Higher orders of H come from upward
// recurrence in the closed upper half-plane and from H^{(1)} = 2J - H^{(2)}
// below it. Branch cut of Y and H: negative real axis.

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>
#include <utility>
#include <vector>

#include "cloaklab/types.hpp"

namespace cloaklab::specfun {

struct CylPair {
    int n = 0;
    cplx z;
    cplx J, dJ;
    cplx H, dH;
};

struct SphPair {
    int l = 0;
    cplx z;
    cplx j, dj;
    cplx h, dh;
};

/// Values and derivatives of J_n, H_n^{(1)} for n = 0..nmax at one argument.
struct CylArray {
    cplx z;
    std::vector<cplx> J, dJ, H, dH;

    int nmax() const { return static_cast<int>(J.size()) - 1; }
    /// Signed order, using J_{-n} = (-1)^n J_n (same for H).
    CylPair at(int n) const {
        const int m = n < 0 ? -n : n;
        const double s = (n < 0 && (m % 2)) ? -1.0 : 1.0;
        return {n, z, s * J[m], s * dJ[m], s * H[m], s * dH[m]};
    }
};

struct SphArray {
    cplx z;
    std::vector<cplx> j, dj, h, dh;

    int lmax() const { return static_cast<int>(j.size()) - 1; }
    SphPair at(int l) const { return {l, z, j[l], dj[l], h[l], dh[l]}; }
};

namespace detail {

inline constexpr double kSeriesRadius = 17.0;
inline constexpr double kIntegralImag = 1.0;
inline constexpr double kEulerGamma = 0.57721566490153286061;
inline constexpr double kRescale = 1e250;
inline constexpr double kMaxImag = 700.0;

// log10 magnitude envelope of J_n(x) for n > x.
inline double envj(double n, double x) {
    return 0.5 * std::log10(6.28 * n) - n * std::log10(1.36 * x / n);
}

// Backward-recurrence starting order such that J_0..J_n carry `digits`
// significant digits (Zhang & Jin style secant search on the envelope).
inline int miller_start(double az, int n, double digits) {
    auto solve = [&](int n0, double obj) {
        double f0 = envj(n0, az) - obj;
        int n1 = n0 + 5;
        double f1 = envj(n1, az) - obj;
        int nn = n1;
        for (int it = 0; it < 40; ++it) {
            if (f1 == f0) break;
            nn = static_cast<int>(n1 - (n1 - n0) / (1.0 - f0 / f1));
            const double f = envj(nn, az) - obj;
            if (std::abs(nn - n1) < 1) break;
            n0 = n1;
            f0 = f1;
            n1 = nn;
            f1 = f;
        }
        return nn;
    };
    const double half = 0.5 * digits;
    const double ejn = envj(std::max(n, 1), az);
    int start;
    if (ejn <= half)
        start = solve(static_cast<int>(1.1 * az) + 1, digits);
    else
        start = solve(std::max(n, 1), half + ejn);
    return std::max(start + 10, n + 10);
}

// J_0..J_m by Miller's algorithm; returns m+1 values where m >= nmax is the
// highest order that was carried (callers may use the surplus).
inline std::vector<cplx> miller_j(int nmax, cplx z) {
    const double az = std::abs(z);
    if (az == 0.0) {
        std::vector<cplx> out(nmax + 1, 0.0);
        out[0] = 1.0;
        return out;
    }
    const int m = miller_start(az, nmax, 17.0);
    std::vector<cplx> f(m + 2, 0.0);
    f[m + 1] = 0.0;
    f[m] = 1e-200;
    // Jacobi-Anger: e^{-iz} = J0 + 2 sum (-i)^k J_k   (Im z >= 0)
    //               e^{+iz} = J0 + 2 sum (+i)^k J_k   (Im z <  0)
    const bool upper = z.imag() >= 0.0;
    auto cpow = [&](int k) { return upper ? ipow(-k) : ipow(k); };
    cplx sum = 2.0 * cpow(m) * f[m];
    for (int k = m; k >= 1; --k) {
        f[k - 1] = (2.0 * k / z) * f[k] - f[k + 1];
        if (k - 1 >= 1)
            sum += 2.0 * cpow(k - 1) * f[k - 1];
        else
            sum += f[0];
        if (std::abs(f[k - 1]) > kRescale) {
            for (int i = k - 1; i <= m + 1; ++i) f[i] /= kRescale;
            sum /= kRescale;
        }
    }
    const cplx target = upper ? std::exp(-I * z) : std::exp(I * z);
    const cplx scale = target / sum;
    f.pop_back();
    for (auto& v : f) v *= scale;
    return f;
}

// Hankel asymptotic series for H^{(1)}_nu, nu in {0,1}; valid for |z| large,
// -pi < arg z < 2pi.
inline cplx hankel_asymptotic(int nu, cplx z) {
    const double mu = 4.0 * nu * nu;
    cplx sum = 1.0, term = 1.0;
    double prev = 1.0;
    for (int k = 1; k < 200; ++k) {
        term *= I * (mu - (2.0 * k - 1) * (2.0 * k - 1)) / (8.0 * k * z);
        const double t = std::abs(term);
        if (t > prev) break;
        sum += term;
        prev = t;
        if (t < 1e-17 * std::abs(sum)) break;
    }
    const cplx omega = z - (nu * 0.5 + 0.25) * pi;
    return std::sqrt(2.0 / (pi * z)) * std::exp(I * omega) * sum;
}

// K_nu(w) = int_0^inf e^{-w cosh t} cosh(nu t) dt for Re w > 0, nu in {0,1},
// trapezoidal rule; exponentially convergent in the analyticity strip.
inline cplx bessel_k_integral(int nu, cplx w) {
    const double re = w.real(), im = std::abs(w.imag());
    const double strip = std::min(0.8 * std::atan2(re, im), 1.2);
    const double h = 2.0 * pi * strip / 44.0;
    cplx sum = 0.5 * std::exp(-w);
    for (int j = 1; j < 200000; ++j) {
        const double t = j * h;
        const double ch = std::cosh(t);
        if (re * ch > 745.0) break;
        const cplx v = std::exp(-w * ch) * std::cosh(nu * t);
        sum += v;
        if (std::abs(v) < 1e-18 * std::abs(sum) && re * ch > 40.0) break;
    }
    return h * sum;
}

// H_0..H_need at z with Im z >= 0, given J_0..J_m (m > need) at z.
inline std::vector<cplx> hankel_upper(int need, cplx z, const std::vector<cplx>& jall) {
    const double az = std::abs(z);
    cplx h0, h1;
    if (az <= kSeriesRadius && z.imag() > kIntegralImag) {
        const cplx w = -I * z;
        h0 = (2.0 / (pi * I)) * bessel_k_integral(0, w);
        h1 = -(2.0 / pi) * bessel_k_integral(1, w);
    } else if (az <= kSeriesRadius) {
        const cplx ec = std::log(z / 2.0) + kEulerGamma;
        cplx s0 = 0.0, s1 = 0.0;
        const int m = static_cast<int>(jall.size()) - 1;
        for (int k = 1; 2 * k <= m; ++k) {
            const double sg = (k % 2) ? -1.0 : 1.0;
            s0 += sg * jall[2 * k] / static_cast<double>(k);
            if (2 * k + 1 <= m)
                s1 += sg * (2.0 * k + 1.0) / (k * (k + 1.0)) * jall[2 * k + 1];
        }
        const cplx y0 = (2.0 / pi) * (ec * jall[0] - 2.0 * s0);
        const cplx y1 = (2.0 / pi) * ((ec - 1.0) * jall[1] - jall[0] / z - s1);
        h0 = jall[0] + I * y0;
        h1 = jall[1] + I * y1;
    } else {
        h0 = hankel_asymptotic(0, z);
        h1 = hankel_asymptotic(1, z);
    }
    std::vector<cplx> H(need + 1);
    H[0] = h0;
    if (need >= 1) H[1] = h1;
    for (int n = 1; n < need; ++n) {
        H[n + 1] = (2.0 * n / z) * H[n] - H[n - 1];
        if (!std::isfinite(std::abs(H[n + 1])))
            throw RangeError("cyl_bessel: Hankel function overflows at order " +
                             std::to_string(n + 1));
    }
    return H;
}

} // namespace detail

/// J_n, J_n', H_n^{(1)}, H_n^{(1)'} for n = 0..nmax.
/// Throws SingularArgumentError for z = 0 and RangeError on overflow.
inline CylArray cyl_bessel_array(int nmax, cplx z) {
    if (nmax < 0) throw DomainError("cyl_bessel_array: nmax < 0");
    if (z == cplx(0.0)) throw SingularArgumentError("cyl_bessel: Hankel function at z = 0");
    if (std::abs(z.imag()) > detail::kMaxImag)
        throw RangeError("cyl_bessel: |Im z| too large, result overflows");

    const int need = nmax + 1; // derivatives use one extra order
    std::vector<cplx> jall = detail::miller_j(need, z);
    std::vector<cplx> H;
    if (z.imag() >= 0.0) {
        H = detail::hankel_upper(need, z, jall);
    } else {
        // Upward recurrence for H^{(1)} loses accuracy below the real axis,
        // where H^{(2)} is the dominant solution: use H^{(1)} = 2J - H^{(2)}
        // with H^{(2)}(z) = conj H^{(1)}(conj z).
        std::vector<cplx> jc(jall.size());
        for (std::size_t i = 0; i < jall.size(); ++i) jc[i] = std::conj(jall[i]);
        H = detail::hankel_upper(need, std::conj(z), jc);
        for (int n = 0; n <= need; ++n) H[n] = 2.0 * jall[n] - std::conj(H[n]);
    }

    CylArray out;
    out.z = z;
    out.J.assign(jall.begin(), jall.begin() + nmax + 1);
    out.H.assign(H.begin(), H.begin() + nmax + 1);
    out.dJ.resize(nmax + 1);
    out.dH.resize(nmax + 1);
    out.dJ[0] = -jall[1];
    out.dH[0] = -H[1];
    for (int n = 1; n <= nmax; ++n) {
        out.dJ[n] = jall[n - 1] - (double(n) / z) * jall[n];
        out.dH[n] = H[n - 1] - (double(n) / z) * H[n];
    }
    for (int n = 0; n <= nmax; ++n) {
        require_finite(out.J[n], "cyl_bessel J");
        require_finite(out.H[n], "cyl_bessel H");
    }
    return out;
}

/// J_n(z) alone; defined at z = 0.
inline cplx cyl_bessel_j(int n, cplx z) {
    const int m = n < 0 ? -n : n;
    if (std::abs(z.imag()) > detail::kMaxImag) throw RangeError("cyl_bessel_j: overflow");
    const auto j = detail::miller_j(m, z);
    const double s = (n < 0 && (m % 2)) ? -1.0 : 1.0;
    return s * j[m];
}

/// J_n and J_n' for n = 0..nmax; defined at z = 0.
inline std::pair<std::vector<cplx>, std::vector<cplx>> cyl_bessel_j_array(int nmax, cplx z) {
    if (std::abs(z.imag()) > detail::kMaxImag) throw RangeError("cyl_bessel_j: overflow");
    auto j = detail::miller_j(nmax + 1, z);
    std::vector<cplx> J(j.begin(), j.begin() + nmax + 1), dJ(nmax + 1);
    dJ[0] = -j[1];
    for (int n = 1; n <= nmax; ++n)
        dJ[n] = (z == cplx(0.0)) ? (n == 1 ? cplx(0.5) : cplx(0.0))
                                 : j[n - 1] - (double(n) / z) * j[n];
    return {J, dJ};
}

/// Single-order convenience wrapper (negative n allowed).
inline CylPair cyl_bessel(int n, cplx z) {
    const int m = n < 0 ? -n : n;
    return cyl_bessel_array(m, z).at(n);
}

/// Y_n from the Hankel and J values of a CylPair.
inline cplx neumann_y(const CylPair& p) { return (p.H - p.J) / I; }

/// Spherical j_l, h_l^{(1)} and derivatives for l = 0..lmax.
inline SphArray sph_bessel_array(int lmax, cplx z) {
    if (lmax < 0) throw DomainError("sph_bessel_array: lmax < 0");
    if (z == cplx(0.0)) throw SingularArgumentError("sph_bessel: Hankel function at z = 0");
    if (std::abs(z.imag()) > detail::kMaxImag)
        throw RangeError("sph_bessel: |Im z| too large, result overflows");

    const int need = lmax + 1;
    const double az = std::abs(z);
    const int m = detail::miller_start(az, need, 17.0);
    std::vector<cplx> f(m + 2, 0.0);
    f[m] = 1e-200;
    for (int l = m; l >= 1; --l) {
        f[l - 1] = ((2.0 * l + 1.0) / z) * f[l] - f[l + 1];
        if (std::abs(f[l - 1]) > detail::kRescale)
            for (int i = l - 1; i <= m + 1; ++i) f[i] /= detail::kRescale;
    }
    cplx j0 = std::sin(z) / z, j1;
    if (az < 0.5) {
        // j_1 series; the closed form cancels for small z
        const cplx z2 = z * z;
        cplx term = z / 3.0, sum = term;
        for (int k = 1; k < 30; ++k) {
            term *= -z2 / (2.0 * k * (2.0 * k + 3.0));
            sum += term;
            if (std::abs(term) < 1e-18 * std::abs(sum)) break;
        }
        j1 = sum;
    } else {
        j1 = std::sin(z) / (z * z) - std::cos(z) / z;
    }
    const double fm = std::max(std::abs(f[0]), std::abs(f[1]));
    const cplx g0 = f[0] / fm, g1 = f[1] / fm;
    const cplx scale = (j0 * std::conj(g0) + j1 * std::conj(g1)) /
                       (std::norm(g0) + std::norm(g1)) / fm;

    std::vector<cplx> j(need + 1), h(need + 1);
    for (int l = 0; l <= need; ++l) j[l] = f[l] * scale;
    // Same stability issue as the cylindrical case: recur on the upper
    // half-plane and use h^{(1)} = 2j - conj h^{(1)}(conj z) below it.
    const bool lower = z.imag() < 0.0;
    const cplx zu = lower ? std::conj(z) : z;
    const cplx e = std::exp(I * zu);
    h[0] = -I * e / zu;
    h[1] = -e * (zu + I) / (zu * zu);
    for (int l = 1; l < need; ++l) {
        h[l + 1] = ((2.0 * l + 1.0) / zu) * h[l] - h[l - 1];
        if (!std::isfinite(std::abs(h[l + 1])))
            throw RangeError("sph_bessel: Hankel function overflows at degree " +
                             std::to_string(l + 1));
    }
    if (lower)
        for (int l = 0; l <= need; ++l) h[l] = 2.0 * j[l] - std::conj(h[l]);

    SphArray out;
    out.z = z;
    out.j.assign(j.begin(), j.begin() + lmax + 1);
    out.h.assign(h.begin(), h.begin() + lmax + 1);
    out.dj.resize(lmax + 1);
    out.dh.resize(lmax + 1);
    out.dj[0] = -j[1];
    out.dh[0] = -h[1];
    for (int l = 1; l <= lmax; ++l) {
        out.dj[l] = j[l - 1] - ((l + 1.0) / z) * j[l];
        out.dh[l] = h[l - 1] - ((l + 1.0) / z) * h[l];
    }
    for (int l = 0; l <= lmax; ++l) {
        require_finite(out.j[l], "sph_bessel j");
        require_finite(out.h[l], "sph_bessel h");
    }
    return out;
}

inline SphPair sph_bessel(int l, cplx z) {
    if (l < 0) throw DomainError("sph_bessel: negative degree");
    return sph_bessel_array(l, z).at(l);
}

/// Kummer's confluent hypergeometric function M(a, b, z) by its power series,
/// with Kummer's transformation for Re z < 0. Throws PrecisionError if the
/// tail bound does not fall below `rtol` within the iteration cap.
inline cplx kummer_m(cplx a, cplx b, cplx z, double rtol = 1e-15, int cap = 20000) {
    if (z.real() < 0.0) return std::exp(z) * kummer_m(b - a, b, -z, rtol, cap);
    cplx term = 1.0, sum = 1.0;
    const double az = std::abs(z);
    for (int m = 0; m < cap; ++m) {
        const cplx ratio = (a + double(m)) / (b + double(m)) * z / double(m + 1);
        term *= ratio;
        sum += term;
        const double r = std::abs((a + double(m + 1)) / (b + double(m + 1))) * az / (m + 2);
        if (m + 2 > az && r < 1.0) {
            const double tail = std::abs(term) * r / (1.0 - r);
            if (tail <= rtol * std::abs(sum)) return sum;
        }
        if (term == cplx(0.0)) return sum;
    }
    throw PrecisionError("kummer_m: series did not converge within iteration cap");
}

/// Whittaker function M_{lambda,mu}(z) for integer mu >= 0, principal branch
/// of z^{mu+1/2}.
inline cplx whittaker_m(cplx lambda, int mu, cplx z) {
    if (mu < 0) throw DomainError("whittaker_m: mu must be a non-negative integer");
    if (z == cplx(0.0)) throw SingularArgumentError("whittaker_m: z = 0");
    const cplx a = double(mu) - lambda + 0.5;
    const cplx b = 1.0 + 2.0 * mu;
    return std::exp(-z / 2.0 + (mu + 0.5) * std::log(z)) * kummer_m(a, b, z, 1e-14);
}

/// M_{lambda,mu}(z) together with its z-derivative, from
/// d/dz M(a, b, z) = (a / b) M(a + 1, b + 1, z).
inline std::pair<cplx, cplx> whittaker_m_deriv(cplx lambda, int mu, cplx z) {
    if (mu < 0) throw DomainError("whittaker_m: mu must be a non-negative integer");
    if (z == cplx(0.0)) throw SingularArgumentError("whittaker_m: z = 0");
    const cplx a = double(mu) - lambda + 0.5;
    const cplx b = 1.0 + 2.0 * mu;
    const cplx pre = std::exp(-z / 2.0 + (mu + 0.5) * std::log(z));
    const cplx m0 = kummer_m(a, b, z, 1e-14);
    const cplx m1 = kummer_m(a + 1.0, b + 1.0, z, 1e-14);
    const cplx w = pre * m0;
    const cplx dw = w * (-0.5 + (mu + 0.5) / z) + pre * (a / b) * m1;
    return {w, dw};
}

struct WronskianReport {
    int arguments = 0;
    double max_cyl = 0.0, max_sph = 0.0;
    cplx worst_cyl, worst_sph;
};

/// Checks J H' - J' H = 2i/(pi z) and j h' - j' h = i/z^2 for orders 0..nmax
/// at `count` arguments with log-spaced modulus in [r_min, r_max] and
/// arguments cycling through both half-planes. Residuals are relative to
/// max(|W|, |J H'| + |J' H|): in the lower half-plane both products grow
/// like e^{2|Im z|} and the identity cannot hold to better than that.
inline WronskianReport wronskian_suite(int count = 1000, int nmax = 20, double r_min = 1e-2,
                                       double r_max = 1e2) {
    WronskianReport rep;
    const double angles[] = {0.0, 0.3, 0.8, 1.3, pi / 2, 2.2, 2.9, -0.4, -1.0, -2.5, pi};
    for (int i = 0; i < count; ++i) {
        const double r = r_min * std::pow(r_max / r_min, double(i) / std::max(1, count - 1));
        cplx z = std::polar(r, angles[i % 11]);
        if (std::abs(z.imag()) > 40.0) z = {z.real(), std::copysign(40.0, z.imag())};
        const auto c = cyl_bessel_array(nmax, z);
        const cplx wc = 2.0 * I / (pi * z);
        for (int n = 0; n <= nmax; ++n) {
            const double scale = std::max(std::abs(wc), std::abs(c.J[n] * c.dH[n]) + std::abs(c.dJ[n] * c.H[n]));
            const double e = std::abs(c.J[n] * c.dH[n] - c.dJ[n] * c.H[n] - wc) / scale;
            if (e > rep.max_cyl) { rep.max_cyl = e; rep.worst_cyl = z; }
        }
        const auto sp = sph_bessel_array(nmax, z);
        const cplx ws = I / (z * z);
        for (int l = 0; l <= nmax; ++l) {
            const double scale = std::max(std::abs(ws), std::abs(sp.j[l] * sp.dh[l]) + std::abs(sp.dj[l] * sp.h[l]));
            const double e = std::abs(sp.j[l] * sp.dh[l] - sp.dj[l] * sp.h[l] - ws) / scale;
            if (e > rep.max_sph) { rep.max_sph = e; rep.worst_sph = z; }
        }
        ++rep.arguments;
    }
    return rep;
}

} // namespace cloaklab::specfun

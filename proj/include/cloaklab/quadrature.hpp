#pragma once
// Gauss-Legendre rules, barycentric Lagrange interpolation on their nodes,
// and a thin adaptive wrapper over Boost's Gauss-Kronrod integrator.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "cloaklab/types.hpp"

namespace cloaklab::quad {

struct Rule {
    std::vector<double> x, w;
};

/// n-point Gauss-Legendre rule on [-1, 1], ascending nodes.
inline Rule gauss_legendre(int n) {
    if (n < 1) throw DomainError("gauss_legendre: n < 1");
    Rule r;
    r.x.resize(n);
    r.w.resize(n);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        // recompute derivative at the converged node
        double p0 = 1.0, p1 = x;
        for (int k = 2; k <= n; ++k) {
            const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
            p0 = p1;
            p1 = p2;
        }
        dp = n * (x * p1 - p0) / (x * x - 1.0);
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        r.x[i] = -x;
        r.x[n - 1 - i] = x;
        r.w[i] = w;
        r.w[n - 1 - i] = w;
    }
    if (n % 2 == 1) r.x[n / 2] = 0.0;
    return r;
}

/// Gauss-Legendre rule mapped to [a, b].
inline Rule gauss_legendre(int n, double a, double b) {
    Rule r = gauss_legendre(n);
    const double h = 0.5 * (b - a), c = 0.5 * (a + b);
    for (int i = 0; i < n; ++i) {
        r.x[i] = c + h * r.x[i];
        r.w[i] *= h;
    }
    return r;
}

/// Barycentric interpolant through values at the nodes of a Gauss-Legendre
/// rule; weights (-1)^j sqrt((1 - x_j^2) w_j) are invariant under affine maps
/// up to a common factor.
class Barycentric {
public:
    Barycentric() = default;
    Barycentric(const Rule& ref, double a, double b) {
        const int n = static_cast<int>(ref.x.size());
        nodes_.resize(n);
        bw_.resize(n);
        for (int j = 0; j < n; ++j) {
            nodes_[j] = 0.5 * (a + b) + 0.5 * (b - a) * ref.x[j];
            bw_[j] = ((j % 2) ? -1.0 : 1.0) * std::sqrt((1.0 - ref.x[j] * ref.x[j]) * ref.w[j]);
        }
    }

    const std::vector<double>& nodes() const { return nodes_; }

    /// Row of interpolation weights: f(t) = sum_j row[j] f_j.
    std::vector<double> row(double t) const {
        const std::size_t n = nodes_.size();
        std::vector<double> out(n, 0.0);
        double den = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double d = t - nodes_[j];
            if (d == 0.0) {
                std::fill(out.begin(), out.end(), 0.0);
                out[j] = 1.0;
                return out;
            }
            out[j] = bw_[j] / d;
            den += out[j];
        }
        for (auto& v : out) v /= den;
        return out;
    }

    cplx operator()(double t, const std::vector<cplx>& f) const {
        const auto r = row(t);
        cplx s = 0.0;
        for (std::size_t j = 0; j < r.size(); ++j) s += r[j] * f[j];
        return s;
    }

private:
    std::vector<double> nodes_, bw_;
};

/// Adaptive 61-point Gauss-Kronrod on [a, b] to relative tolerance `tol`.
/// Throws PrecisionError when the error estimate stays above tolerance.
inline double integrate(const std::function<double(double)>& f, double a, double b,
                        double tol = 1e-12, unsigned max_depth = 18) {
    double err = 0.0, l1 = 0.0;
    const double v = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
        f, a, b, max_depth, tol, &err, &l1);
    if (err > 100.0 * tol * std::max(l1, 1e-300))
        throw PrecisionError("integrate: adaptive quadrature did not reach tolerance");
    return v;
}

} // namespace cloaklab::quad

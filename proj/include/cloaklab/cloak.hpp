#pragma once
// Geometry and materials of the regularised cloak: the radial blow-up map F of
// B_2 \ B_eps onto B_2 \ B_1, its Jacobian, push-forwards, the Drude-Lorentz
// coefficient sigma(k) = 1/(k_eps^2 - k^2 - ik), the transformed index
// q = 1 + sigma det DF on the annulus, the contrast bound M_{eps,k}, and a
// classifier for the complex-k regions where transmission eigenvalues are
// known to be discrete.

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include <Eigen/Dense>

#include "cloaklab/types.hpp"

namespace cloaklab {

struct CloakParams {
    double eps = 0.5;
    double k_eps = 2.0;
    int dim = 2;
    /// Validation mode: sigma forced to zero, so q = 1 everywhere.
    bool sigma_off = false;

    void validate() const {
        std::ostringstream msg;
        if (!(eps > 0.0 && eps < 1.0)) msg << " eps must lie in (0, 1) (got " << eps << ");";
        if (!(k_eps > 0.5)) msg << " k_eps must exceed 1/2 (got " << k_eps << ");";
        if (dim != 2 && dim != 3) msg << " dim must be 2 or 3 (got " << dim << ");";
        if (!msg.str().empty()) throw ValidationError("CloakParams:" + msg.str());
    }
};

/// The pole sqrt(k_eps^2 - 1/4) - i/2 of sigma; the other pole is -conj(kappa).
inline cplx kappa(const CloakParams& p) {
    return {std::sqrt(p.k_eps * p.k_eps - 0.25), -0.5};
}

/// |F(x)| as a function of |x| = r, for r >= eps.
inline double map_radius(double r, const CloakParams& p) {
    if (r < p.eps) throw DomainError("map_F: |x| < eps, outside the domain of F");
    if (r >= 2.0) return r;
    return (2.0 - 2.0 * p.eps + r) / (2.0 - p.eps);
}

/// Inverse of map_radius on [1, inf).
inline double map_radius_inverse(double s, const CloakParams& p) {
    if (s < 1.0) throw DomainError("map_F inverse: |y| < 1, outside the image of F");
    if (s >= 2.0) return s;
    return (2.0 - p.eps) * s - 2.0 + 2.0 * p.eps;
}

inline Point map_F(const Point& x, const CloakParams& p) {
    const double r = x.norm();
    const double s = map_radius(r, p) / r;
    return {x[0] * s, x[1] * s, x[2] * s};
}

/// det DF as a function of r = |x|, including the constant branches.
inline double det_DF(double r, const CloakParams& p) {
    if (!(r > 0.0)) throw DomainError("det_DF: r must be positive");
    const int d = p.dim;
    if (r >= 2.0) return 1.0;
    if (r < p.eps) return 1.0 / std::pow(p.eps, d);
    return std::pow(2.0 - 2.0 * p.eps + r, d - 1) / (std::pow(2.0 - p.eps, d) * std::pow(r, d - 1));
}

/// DF(x) = (1/(2-eps)) [I + ((2-2eps)/|x|)(I - xhat xhat^T)] on the annulus,
/// identity outside B_2. Returned as a dim x dim matrix.
inline Eigen::MatrixXd jacobian_DF(const Point& x, const CloakParams& p) {
    const int d = p.dim;
    const double r = x.norm();
    if (r < p.eps) throw DomainError("jacobian_DF: |x| < eps");
    Eigen::MatrixXd id = Eigen::MatrixXd::Identity(d, d);
    if (r >= 2.0) return id;
    Eigen::VectorXd xh(d);
    for (int i = 0; i < d; ++i) xh(i) = x[i] / r;
    const Eigen::MatrixXd proj = id - xh * xh.transpose();
    return (id + ((2.0 - 2.0 * p.eps) / r) * proj) / (2.0 - p.eps);
}

inline cplx sigma(cplx k, const CloakParams& p) {
    if (p.sigma_off) return 0.0;
    const cplx den = p.k_eps * p.k_eps - k * k - I * k;
    if (std::abs(den) < 1e-14) {
        std::ostringstream msg;
        const cplx kp = kappa(p);
        msg << "sigma: k = " << k << " is a pole (kappa = " << kp << ", -conj(kappa) = "
            << -std::conj(kp) << ")";
        throw PoleError(msg.str());
    }
    return 1.0 / den;
}

struct MaterialSample {
    double r = 0.0;
    double detDF = 1.0;
    cplx q_value{1.0, 0.0};
    cplx sigma{0.0, 0.0};
};

/// Transformed index: 1 outside B_2, 1 + sigma det DF on the annulus.
inline cplx q_index(double r, cplx k, const CloakParams& p) {
    if (!(r > 0.0)) throw DomainError("q_index: r must be positive");
    if (r >= 2.0 || p.sigma_off) return 1.0;
    return 1.0 + sigma(k, p) * det_DF(r, p);
}

inline MaterialSample material_sample(double r, cplx k, const CloakParams& p) {
    MaterialSample m;
    m.r = r;
    m.detDF = det_DF(r, p);
    m.sigma = (r < 2.0) ? sigma(k, p) : cplx(0.0);
    m.q_value = q_index(r, k, p);
    return m;
}

/// F_* A = DF A DF^T / det DF, evaluated at F(x). With `inverse`, `x` is a
/// point y of the image annulus and the result is (F^{-1})_* A at F^{-1}(y).
inline Eigen::MatrixXd push_forward(const Eigen::MatrixXd& A, const Point& x,
                                    const CloakParams& p, bool inverse = false) {
    if (A.rows() != p.dim || A.cols() != p.dim)
        throw ValidationError("push_forward: matrix size does not match dim");
    if (!inverse) {
        const Eigen::MatrixXd J = jacobian_DF(x, p);
        return J * A * J.transpose() / det_DF(x.norm(), p);
    }
    const double s = x.norm();
    const double r = map_radius_inverse(s, p);
    const Point xp{x[0] * r / s, x[1] * r / s, x[2] * r / s};
    const Eigen::MatrixXd J = jacobian_DF(xp, p);
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(J);
    if (!lu.isInvertible()) throw Error("push_forward: singular DF");
    const Eigen::MatrixXd Ji = lu.inverse();
    return Ji * A * Ji.transpose() * det_DF(r, p);
}

/// Scalar push-forward q / det DF (or q det DF with `inverse`, y in the image).
inline cplx push_forward(cplx q, const Point& x, const CloakParams& p, bool inverse = false) {
    if (!inverse) return q / det_DF(x.norm(), p);
    return q * det_DF(map_radius_inverse(x.norm(), p), p);
}

/// M_{eps,k} = |sigma(k)| / ((2 - eps) eps^{d-1}).
inline double m_eps_k(double k, const CloakParams& p) {
    if (!(k > 0.0)) throw DomainError("m_eps_k: k must be positive");
    return std::abs(sigma(k, p)) / ((2.0 - p.eps) * std::pow(p.eps, p.dim - 1));
}

/// a(k) = 1 in three dimensions, min{1 + |ln k|, k^{-1/4}} in two.
inline double a_factor(double k, int dim) {
    if (!(k > 0.0)) throw DomainError("a_factor: k must be positive");
    if (dim == 3) return 1.0;
    return std::min(1.0 + std::abs(std::log(k)), std::pow(k, -0.25));
}

enum class Region { K_compact, R_right, L_left, U_vertical, G_other, RealAxis, ImagAxis };

inline const char* region_name(Region r) {
    switch (r) {
    case Region::K_compact: return "K_compact";
    case Region::R_right: return "R_right";
    case Region::L_left: return "L_left";
    case Region::U_vertical: return "U_vertical";
    case Region::G_other: return "G_other";
    case Region::RealAxis: return "RealAxis";
    case Region::ImagAxis: return "ImagAxis";
    }
    return "?";
}

struct RegionLabel {
    Region tag = Region::G_other;
    /// Set when the point lies in none of the sets covered by the
    /// discreteness argument (and not in K): coverage is not claimed there.
    bool uncovered = false;
};

namespace detail {

inline double arc(double b, double ke) { return std::sqrt(b * b + b + ke * ke); }

inline bool in_K(double a, double b, double ke) {
    const double aa = std::abs(a);
    return b >= -0.5 && b <= 0.0 && aa >= -b && aa <= arc(b, ke);
}

// Right-half-plane membership in R or the mirror of L.
inline bool in_R_right(double a, double b, double ke) {
    if (a <= 0.0) return false;
    if (b > 0.0) return true;
    if (b < -0.5) return true;
    return a > std::max(std::abs(b), arc(b, ke));
}

inline bool in_U(double a, double b, double ke) {
    return std::abs(b) > std::abs(a) && b > -0.5 * (ke * ke + 0.5);
}

} // namespace detail

/// Priority: K (closed, boundary included), then U, then R / L, then the
/// axes, and G_other with the `uncovered` flag for anything left over.
inline RegionLabel classify_k(cplx k, const CloakParams& p) {
    if (!(std::sqrt(2.0) * p.k_eps > 1.0))
        throw ValidationError("classify_k: requires sqrt(2) k_eps > 1");
    const double a = k.real(), b = k.imag(), ke = p.k_eps;
    if (detail::in_K(a, b, ke)) return {Region::K_compact, false};
    if (detail::in_U(a, b, ke)) return {Region::U_vertical, false};
    if (detail::in_R_right(a, b, ke)) return {Region::R_right, false};
    if (detail::in_R_right(-a, b, ke)) return {Region::L_left, false};
    if (b == 0.0) return {Region::RealAxis, false};
    if (a == 0.0) return {Region::ImagAxis, false};
    return {Region::G_other, true};
}

} // namespace cloaklab

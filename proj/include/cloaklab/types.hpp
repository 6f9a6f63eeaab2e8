#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <numbers>

#include "cloaklab/errors.hpp"

namespace cloaklab {

using cplx = std::complex<double>;

inline constexpr double pi = std::numbers::pi;
inline constexpr cplx I{0.0, 1.0};

/// Throws if either component is NaN or infinite.
inline void require_finite(cplx z, const char* what) {
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag()))
        throw RangeError(std::string(what) + ": non-finite value");
}

/// Point in R^2 or R^3; the third component is ignored in two dimensions.
struct Point {
    std::array<double, 3> c{0.0, 0.0, 0.0};

    Point() = default;
    Point(double x, double y, double z = 0.0) : c{x, y, z} {}

    double operator[](std::size_t i) const { return c[i]; }
    double& operator[](std::size_t i) { return c[i]; }

    double norm() const { return std::sqrt(c[0] * c[0] + c[1] * c[1] + c[2] * c[2]); }

    static Point polar(double r, double theta) {
        return {r * std::cos(theta), r * std::sin(theta), 0.0};
    }
    static Point spherical(double r, double theta, double phi = 0.0) {
        return {r * std::sin(theta) * std::cos(phi), r * std::sin(theta) * std::sin(phi),
                r * std::cos(theta)};
    }
};

inline double distance(const Point& a, const Point& b) {
    const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

/// Powers of i for integer exponents, exact.
inline cplx ipow(int n) {
    switch (((n % 4) + 4) % 4) {
    case 0: return {1.0, 0.0};
    case 1: return {0.0, 1.0};
    case 2: return {-1.0, 0.0};
    default: return {0.0, -1.0};
    }
}

} // namespace cloaklab

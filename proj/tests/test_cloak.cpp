#include <catch_amalgamated.hpp>

#include "cloaklab/cloak.hpp"

using namespace cloaklab;

TEST_CASE("parameter validation rejects bad cloaks", "[cloak]") {
    CHECK_NOTHROW(CloakParams{0.5, 2.0, 2}.validate());
    CHECK_THROWS_AS((CloakParams{0.0, 2.0, 2}.validate()), ValidationError);
    CHECK_THROWS_AS((CloakParams{1.0, 2.0, 2}.validate()), ValidationError);
    CHECK_THROWS_AS((CloakParams{0.5, 0.4, 2}.validate()), ValidationError);
    CHECK_THROWS_AS((CloakParams{0.5, 2.0, 4}.validate()), ValidationError);
}

TEST_CASE("F maps the annulus onto 1 < |y| < 2 and fixes the exterior", "[cloak]") {
    const CloakParams p{0.1, 3.0, 3};
    CHECK(map_radius(0.1, p) == Catch::Approx(1.0).epsilon(1e-15));
    CHECK(map_radius(2.0, p) == 2.0);
    CHECK(map_radius(3.5, p) == 3.5);
    CHECK(map_radius_inverse(map_radius(0.7, p), p) == Catch::Approx(0.7).epsilon(1e-15));
    CHECK_THROWS_AS(map_radius(0.05, p), DomainError);
    CHECK_THROWS_AS(map_radius_inverse(0.5, p), DomainError);
    const Point y = map_F({0.3, -0.4, 0.0}, p);
    CHECK(y.norm() == Catch::Approx(map_radius(0.5, p)).epsilon(1e-15));
    CHECK(y[0] / y[1] == Catch::Approx(0.3 / -0.4));
}

TEST_CASE("det DF equals the determinant of the Jacobian and a difference quotient", "[cloak]") {
    for (int d : {2, 3}) {
        const CloakParams p{0.25, 2.0, d};
        for (double r : {0.3, 0.6, 1.3, 1.99}) {
            const Point x = d == 2 ? Point::polar(r, 0.7) : Point::spherical(r, 0.7, 1.1);
            CHECK(jacobian_DF(x, p).determinant() == Catch::Approx(det_DF(r, p)).epsilon(1e-13));
            // radial derivative times (s/r)^{d-1}
            const double h = 1e-6;
            const double ds = (map_radius(r + h, p) - map_radius(r - h, p)) / (2 * h);
            const double fd = ds * std::pow(map_radius(r, p) / r, d - 1);
            CHECK(fd == Catch::Approx(det_DF(r, p)).epsilon(1e-8));
        }
        CHECK(det_DF(2.5, p) == 1.0);
        CHECK(det_DF(0.1, p) == Catch::Approx(std::pow(0.25, -d)));
    }
}

TEST_CASE("sigma, its poles and the contrast magnitude", "[cloak]") {
    const CloakParams p{0.5, 2.0, 2};
    const cplx k{1.0, 0.0};
    CHECK(std::abs(sigma(k, p) - 1.0 / cplx(3.0, -1.0)) < 1e-16);
    const cplx kp = kappa(p);
    CHECK(kp.real() == Catch::Approx(std::sqrt(3.75)));
    CHECK(kp.imag() == -0.5);
    CHECK_THROWS_AS(sigma(kp, p), PoleError);
    CHECK_THROWS_AS(sigma(-std::conj(kp), p), PoleError);
    CHECK(m_eps_k(1.0, p) == Catch::Approx(std::abs(sigma(k, p)) / (1.5 * 0.5)));
    CloakParams off = p;
    off.sigma_off = true;
    CHECK(sigma(k, off) == cplx(0.0));
    CHECK(q_index(1.0, k, off) == cplx(1.0));
    CHECK(std::abs(q_index(1.0, k, p) - (1.0 + sigma(k, p) * det_DF(1.0, p))) < 1e-16);
    CHECK(q_index(2.0, k, p) == cplx(1.0));
}

TEST_CASE("a(k) follows the two- and three-dimensional definitions", "[cloak]") {
    CHECK(a_factor(2.0, 3) == 1.0);
    CHECK(a_factor(0.5, 2) == Catch::Approx(std::min(1.0 + std::log(2.0), std::pow(0.5, -0.25))));
    CHECK(a_factor(16.0, 2) == Catch::Approx(0.5));
    CHECK_THROWS_AS(a_factor(0.0, 2), DomainError);
}

TEST_CASE("push-forward and its inverse are mutually inverse", "[cloak]") {
    const CloakParams p{0.2, 2.0, 3};
    const Point x = Point::spherical(0.9, 0.4, 2.0);
    const Eigen::MatrixXd A = Eigen::MatrixXd::Identity(3, 3);
    const Eigen::MatrixXd B = push_forward(A, x, p);
    const Eigen::MatrixXd back = push_forward(B, map_F(x, p), p, true);
    CHECK((back - A).norm() < 1e-12);
    CHECK((B - B.transpose()).norm() < 1e-14);
    const cplx q{1.5, -0.2};
    CHECK(std::abs(push_forward(push_forward(q, x, p), map_F(x, p), p, true) - q) < 1e-14);
    CHECK_THROWS_AS(push_forward(Eigen::MatrixXd::Identity(2, 2), x, p), ValidationError);
}

TEST_CASE("region classifier reproduces the shaded compact set and its boundary", "[cloak]") {
    const CloakParams p{0.5, 2.0, 2};
    const double ke = 2.0;
    CHECK(classify_k({1.0, -0.25}, p).tag == Region::K_compact);
    CHECK(classify_k({-1.0, -0.25}, p).tag == Region::K_compact);
    // boundary pieces belong to K (closed set)
    CHECK(classify_k({0.3, -0.3}, p).tag == Region::K_compact);
    CHECK(classify_k({std::sqrt(0.09 - 0.3 + ke * ke), -0.3}, p).tag == Region::K_compact);
    CHECK(classify_k({0.0, 0.0}, p).tag == Region::K_compact);
    CHECK(classify_k({0.1, 2.0}, p).tag == Region::U_vertical);
    CHECK(classify_k({3.0, -0.25}, p).tag == Region::R_right);
    CHECK(classify_k({-3.0, -0.25}, p).tag == Region::L_left);
    CHECK(classify_k({1.0, 1.0}, p).tag == Region::R_right);
    CHECK_THROWS_AS(classify_k({1.0, 0.0}, CloakParams{0.5, 0.6, 2}), ValidationError);
    int uncovered = 0;
    for (int i = -60; i <= 60; ++i)
        for (int j = -60; j <= 20; ++j) uncovered += classify_k({0.05 * i, 0.05 * j}, p).uncovered;
    CHECK(uncovered == 0);
}

#include <doctest.h>

#include <random>

#include "fusedgroup/losses.hpp"
#include "support.hpp"

using namespace fusedgroup;

TEST_CASE("check_value examples")
{
    CHECK(check_value(2.0, 0.3) == doctest::Approx(0.6));
    CHECK(check_value(-2.0, 0.3) == doctest::Approx(1.4));
    CHECK(check_value(0.0, 0.5) == 0.0);
}

TEST_CASE("check_value equals tau u+ + (1-tau) u-")
{
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-50, 50), t(0.01, 0.99);
    for (int i = 0; i < 10000; ++i) {
        const double x = u(rng), tau = t(rng);
        const double alt = tau * std::max(x, 0.0) + (1 - tau) * std::max(-x, 0.0);
        CHECK(check_value(x, tau) == doctest::Approx(alt).epsilon(1e-14));
        CHECK(check_value(x, tau) >= 0.0);
    }
}

TEST_CASE("knight identity examples")
{
    CHECK(knight_identity_gap(1.0, 0.5, 0.5) <= 1e-15);
    CHECK(knight_identity_gap(-0.3, 2.0, 0.25) <= 1e-15);
    CHECK(knight_identity_gap(0.0, 0.0, 0.7) == 0.0);
}

TEST_CASE("knight integral agrees with adaptive quadrature")
{
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-3, 3);
    for (int i = 0; i < 300; ++i) {
        const double x = u(rng), y = u(rng);
        const auto integrand = [x](double v) { return (x <= v ? 1.0 : 0.0) - (x <= 0.0 ? 1.0 : 0.0); };
        const double quad = testsupport::adaptive_simpson(integrand, 0.0, y, 1e-13, 50);
        CHECK(knight_integral(x, y) == doctest::Approx(quad).epsilon(1e-8).scale(1.0));
    }
    // orderings with coincident points
    CHECK(knight_integral(0.0, 1.0) == 0.0);
    CHECK(knight_integral(1.0, 1.0) == 0.0);
    CHECK(knight_integral(-1.0, -1.0) == 0.0);
    CHECK(knight_integral(1.0, 3.0) == doctest::Approx(2.0));
    CHECK(knight_integral(-1.0, -3.0) == doctest::Approx(2.0));
}

TEST_CASE("knight gap stays at round-off on random triples")
{
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-10, 10), t(0.001, 0.999);
    double worst = 0.0;
    for (int i = 0; i < 20000; ++i) worst = std::max(worst, knight_identity_gap(u(rng), u(rng), t(rng)));
    CHECK(worst <= 1e-12);
}

TEST_CASE("prox_check examples against a ternary-search oracle")
{
    const auto oracle = [](double v, double a, double tau) {
        return testsupport::ternary_min_ld(
            [&](long double z) {
                const long double rho = z * (tau - (z < 0 ? 1.0L : 0.0L));
                return rho + (z - v) * (z - v) / (2.0L * a);
            },
            -100, 100, 1e-13);
    };
    CHECK(prox_check(2, 1, 0.5) == doctest::Approx(1.5));
    CHECK(prox_check(-2, 1, 0.5) == doctest::Approx(-1.5));
    CHECK(prox_check(0.3, 1, 0.5) == 0.0);
    CHECK(std::abs(oracle(2, 1, 0.5) - 1.5) < 1e-8);
    CHECK(std::abs(oracle(-2, 1, 0.5) + 1.5) < 1e-8);
    CHECK(std::abs(oracle(0.3, 1, 0.5)) < 1e-8);

    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-5, 5), a(0.01, 3), t(0.05, 0.95);
    for (int i = 0; i < 500; ++i) {
        const double v = u(rng), al = a(rng), tau = t(rng);
        CHECK(std::abs(prox_check(v, al, tau) - oracle(v, al, tau)) < 1e-7);
    }
    // closed dead zone
    CHECK(prox_check(0.5, 1, 0.5) == 0.0);
    CHECK(prox_check(-0.5, 1, 0.5) == 0.0);
}

TEST_CASE("prox_check is monotone and 1-Lipschitz")
{
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-5, 5), a(0.01, 3), t(0.05, 0.95);
    for (int i = 0; i < 5000; ++i) {
        const double v1 = u(rng), v2 = u(rng), al = a(rng), tau = t(rng);
        const double p1 = prox_check(v1, al, tau), p2 = prox_check(v2, al, tau);
        CHECK(std::abs(p1 - p2) <= std::abs(v1 - v2) + 1e-15);
        CHECK((p1 - p2) * (v1 - v2) >= -1e-15);
    }
}

TEST_CASE("prox_square minimizes z^2 + (z-v)^2/(2a)")
{
    const double z = testsupport::ternary_min([](double z) { return z * z + (z - 3) * (z - 3) / (2 * 0.7); }, -10, 10);
    CHECK(prox_square(3, 0.7) == doctest::Approx(z).epsilon(1e-8));
}

TEST_CASE("ls_residual_gradient")
{
    SUBCASE("zero at an exact fit")
    {
        std::mt19937_64 rng(6);
        Eigen::MatrixXd X = testsupport::gaussian_matrix(7, 6, rng);
        GroupedCoefficients b(testsupport::gaussian_matrix(6, 1, rng).col(0), 3, 2);
        GroupedDesign d(X, X * b.flat(), 3, 2);
        CHECK(ls_residual_gradient(d, b).norm() < 1e-12);
    }
    SUBCASE("scalar example")
    {
        GroupedDesign d(Eigen::MatrixXd::Constant(1, 1, 2.0), Eigen::VectorXd::Constant(1, 3.0), 1, 1);
        CHECK(ls_residual_gradient(d, GroupedCoefficients(1, 1))(0) == doctest::Approx(-12.0));
    }
    SUBCASE("central finite differences")
    {
        std::mt19937_64 rng(7);
        for (int rep = 0; rep < 20; ++rep) {
            const GroupedDesign d = testsupport::random_design(9, 3, 2, rng);
            const Eigen::VectorXd b = testsupport::gaussian_matrix(6, 1, rng).col(0);
            const auto f = [&](const Eigen::VectorXd& v) { return (d.y() - d.X() * v).squaredNorm(); };
            const Eigen::VectorXd fd = testsupport::fd_gradient(f, b);
            const Eigen::VectorXd g = ls_residual_gradient(d, GroupedCoefficients(b, 3, 2));
            CHECK((g - fd).norm() <= 1e-6 * (1.0 + g.norm()));
        }
    }
    SUBCASE("shape mismatch")
    {
        std::mt19937_64 rng(8);
        const GroupedDesign d = testsupport::random_design(4, 2, 1, rng);
        CHECK_THROWS_AS(ls_residual_gradient(d, GroupedCoefficients(3, 1)), DimensionError);
    }
}

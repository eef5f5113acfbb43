#include <doctest.h>

#include <cmath>
#include <random>

#include "qhydro/errors.hpp"
#include "qhydro/lattice.hpp"
#include "support.hpp"

using namespace qhydro;

TEST_CASE("make_grid spacing and enumeration") {
    const auto g1 = make_grid(1, -10.0, 10.0, 21);
    CHECK(g1.spacing(0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(g1.size() == 21);

    const auto g2 = make_grid(2, -5.0, 5.0, 16);
    CHECK(g2.spacing(0) == doctest::Approx(10.0 / 15.0).epsilon(1e-15));
    CHECK(g2.spacing(1) == doctest::Approx(10.0 / 15.0).epsilon(1e-15));
    CHECK(g2.size() == 256);
    // row-major: axis 0 slowest
    CHECK(g2.coord(1, 0) == -5.0);
    CHECK(g2.coord(1, 1) == doctest::Approx(-5.0 + 10.0 / 15.0));
    CHECK(g2.coord(16, 0) == doctest::Approx(-5.0 + 10.0 / 15.0));
    for (std::size_t p = 0; p < g2.size(); ++p) {
        const auto m = g2.multi_index(p);
        CHECK(g2.index(std::span<const int>(m.data(), 2)) == p);
    }
}

TEST_CASE("make_grid rejects bad input") {
    CHECK_THROWS_AS(make_grid(1, -1.0, 1.0, 3), ConfigError);
    CHECK_THROWS_AS(make_grid(1, 1.0, 1.0, 32), ConfigError);
    CHECK_THROWS_AS(make_grid(4, -1.0, 1.0, 32), ConfigError);
    CHECK_THROWS_AS(make_grid(0, -1.0, 1.0, 32), ConfigError);
}

TEST_CASE("derivatives of polynomials are exact") {
    const auto g = make_grid(1, -2.0, 3.0, 41);
    Field a2(g.size()), a4(g.size());
    for (std::size_t p = 0; p < g.size(); ++p) {
        const double a = g.coord(p, 0);
        a2[p] = a * a;
        a4[p] = a * a * a * a;
    }
    const auto d1 = derivative(g, a2, 1, 0);
    for (std::size_t p = 0; p < g.size(); ++p) CHECK(std::abs(d1[p] - 2.0 * g.coord(p, 0)) < 1e-12);
    const auto d4 = derivative(g, a4, 4, 0);
    for (std::size_t p = 0; p < g.size(); ++p) CHECK(std::abs(d4[p] - 24.0) < 24.0 * 1e-8);
}

TEST_CASE("stencils reproduce random polynomials up to their accuracy order") {
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> coef(-1.0, 1.0);
    const auto g = make_grid(1, -1.0, 1.5, 33);
    for (int order = 1; order <= 4; ++order) {
        const int acc = default_accuracy(order);
        const int degree = order + acc - 1;
        for (int trial = 0; trial < 5; ++trial) {
            std::vector<double> c(degree + 1);
            for (auto& x : c) x = coef(rng);
            Field f(g.size()), exact(g.size());
            for (std::size_t p = 0; p < g.size(); ++p) {
                const double a = g.coord(p, 0);
                for (int k = 0; k <= degree; ++k) {
                    f[p] += c[k] * std::pow(a, k);
                    if (k >= order) {
                        double fall = 1.0;
                        for (int j = 0; j < order; ++j) fall *= k - j;
                        exact[p] += c[k] * fall * std::pow(a, k - order);
                    }
                }
            }
            const auto d = derivative(g, f, order, 0);
            double scale = 0.0;
            for (double v : exact) scale = std::max(scale, std::abs(v));
            for (std::size_t p = 0; p < g.size(); ++p)
                CHECK(std::abs(d[p] - exact[p]) <= 1e-10 * std::max(scale, 1.0) * 100.0);
        }
    }
}

TEST_CASE("derivative operators annihilate constants") {
    const auto g = make_grid(2, -3.0, 3.0, 24);
    const Field c(g.size(), 3.7);
    for (int order = 1; order <= 4; ++order)
        for (int axis = 0; axis < 2; ++axis)
            for (double v : derivative(g, c, order, axis)) CHECK(std::abs(v) <= 1e-12);
    for (double v : mixed_derivative(g, c, 0, 1)) CHECK(std::abs(v) <= 1e-12);
}

TEST_CASE("sin derivative error is bounded by da^4") {
    const double h = 0.05;
    const int n = static_cast<int>(std::round(2.0 * qhydro::test::kPi / h)) + 1;
    const auto g = make_grid(1, 0.0, (n - 1) * h, n);
    Field f(g.size());
    for (std::size_t p = 0; p < g.size(); ++p) f[p] = std::sin(g.coord(p, 0));
    const auto d = derivative(g, f, 1, 0, 4);
    double err = 0.0;
    for (std::size_t p = 0; p < g.size(); ++p) err = std::max(err, std::abs(d[p] - std::cos(g.coord(p, 0))));
    CHECK(err <= std::pow(h, 4));
}

namespace {
double sin_derivative_error(int order, int accuracy, int n) {
    const auto g = make_grid(1, 0.0, 3.0, n);
    Field f(g.size());
    for (std::size_t p = 0; p < g.size(); ++p) f[p] = std::sin(g.coord(p, 0));
    const auto d = derivative(g, f, order, 0, accuracy);
    double err = 0.0;
    for (std::size_t p = 0; p < g.size(); ++p) {
        const double a = g.coord(p, 0);
        const double exact = order == 1 ? std::cos(a) : order == 2 ? -std::sin(a) : order == 3 ? -std::cos(a) : std::sin(a);
        err = std::max(err, std::abs(d[p] - exact));
    }
    return err;
}
}  // namespace

TEST_CASE("Richardson: halving the spacing reduces the error at the accuracy order") {
    for (int order = 1; order <= 4; ++order) {
        const int acc = default_accuracy(order);
        const double e1 = sin_derivative_error(order, acc, 61);
        const double e2 = sin_derivative_error(order, acc, 121);
        CAPTURE(order);
        CHECK(e1 / e2 >= std::pow(2.0, acc - 0.5));
    }
}

TEST_CASE("non-finite input is reported with its node") {
    const auto g = make_grid(1, 0.0, 1.0, 20);
    Field f(g.size(), 1.0);
    f[7] = std::nan("");
    try {
        derivative(g, f, 1, 0);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(e.node() == 7);
    }
}

TEST_CASE("trapezoid quadrature") {
    const auto g = make_grid(1, -8.0, 8.0, 512);
    Field f(g.size()), odd(g.size());
    for (std::size_t p = 0; p < g.size(); ++p) {
        const double a = g.coord(p, 0);
        f[p] = std::exp(-a * a);
        odd[p] = a * std::exp(-a * a / 4.0);
    }
    CHECK(std::abs(integrate(g, f) - std::sqrt(qhydro::test::kPi)) <= 1e-10);
    CHECK(std::abs(integrate(g, odd)) <= 1e-12);
    CHECK(integrate(g, Field(g.size(), 0.0)) == 0.0);

    const auto g2 = make_grid(2, -9.0, 9.0, 96);
    const auto L = qhydro::test::gaussian_log_density(g2, 1.0);
    Field rho(L.size());
    for (std::size_t p = 0; p < L.size(); ++p) rho[p] = std::exp(L[p]);
    CHECK(std::abs(integrate(g2, rho) - 1.0) <= 1e-8);
}

TEST_CASE("boundary leakage raises a warning") {
    const auto g = make_grid(1, -2.0, 2.0, 65);
    Field f(g.size());
    for (std::size_t p = 0; p < g.size(); ++p) f[p] = std::exp(-g.coord(p, 0) * g.coord(p, 0));
    Warnings w;
    integrate(g, f, &w);
    CHECK_FALSE(w.empty());
    CHECK(boundary_leakage(g, f) == doctest::Approx(std::exp(-4.0)));
}

TEST_CASE("cubic interpolation is exact for cubics") {
    const auto g = make_grid(2, -1.0, 1.0, 20);
    Field f(g.size());
    auto poly = [](double x, double y) { return 1.0 + x - 2.0 * y * y + x * x * x * y; };
    for (std::size_t p = 0; p < g.size(); ++p) f[p] = poly(g.coord(p, 0), g.coord(p, 1));
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> u(-0.95, 0.95);
    for (int k = 0; k < 50; ++k) {
        const double pt[2] = {u(rng), u(rng)};
        double grad[2];
        const double v = interpolate_with_gradient(g, f, pt, grad);
        CHECK(std::abs(v - poly(pt[0], pt[1])) <= 1e-12);
        CHECK(std::abs(grad[0] - (1.0 + 3.0 * pt[0] * pt[0] * pt[1])) <= 1e-11);
        CHECK(std::abs(grad[1] - (-4.0 * pt[1] + pt[0] * pt[0] * pt[0])) <= 1e-11);
    }
}

TEST_CASE("mixed derivative of a bilinear field") {
    const auto g = make_grid(2, -1.0, 2.0, 18);
    Field f(g.size());
    for (std::size_t p = 0; p < g.size(); ++p) f[p] = 3.0 * g.coord(p, 0) * g.coord(p, 1) + g.coord(p, 0);
    for (double v : mixed_derivative(g, f, 0, 1)) CHECK(std::abs(v - 3.0) <= 1e-11);
}

TEST_CASE("Fornberg weights for the central first derivative") {
    const double off[3] = {-1.0, 0.0, 1.0};
    const auto w = fd_weights(1, 0.0, off);
    CHECK(w[0] == doctest::Approx(-0.5));
    CHECK(std::abs(w[1]) < 1e-15);
    CHECK(w[2] == doctest::Approx(0.5));
}

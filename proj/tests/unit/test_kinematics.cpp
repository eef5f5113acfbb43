#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "qhydro/errors.hpp"
#include "qhydro/kinematics.hpp"
#include "support.hpp"

using namespace qhydro;
using qhydro::test::kPi;

namespace {

FlowState map_flow(const LabelGrid& g, const std::function<void(const double*, double*)>& q) {
    FlowState f;
    const int d = g.dim();
    f.q.assign(d, Field(g.size()));
    f.qdot.assign(d, Field(g.size(), 0.0));
    f.phase.assign(g.size(), 0.0);
    for (std::size_t p = 0; p < g.size(); ++p) {
        const auto a = g.point(p);
        double out[kMaxDim];
        q(a.data(), out);
        for (int i = 0; i < d; ++i) f.q[i][p] = out[i];
    }
    return f;
}

}  // namespace

TEST_CASE("identity map has J = 1 and identity cofactor") {
    const auto g = make_grid(2, -1.0, 1.0, 20);
    const auto T = deformation(map_flow(g, [](const double* a, double* q) { q[0] = a[0]; q[1] = a[1]; }), g);
    for (std::size_t p = 0; p < g.size(); ++p) {
        CHECK(T.J[p] == doctest::Approx(1.0).epsilon(1e-13));
        CHECK(T.cofactor(0, 0)[p] == doctest::Approx(1.0).epsilon(1e-13));
        CHECK(std::abs(T.cofactor(0, 1)[p]) < 1e-13);
    }
}

TEST_CASE("1D stretch q = 2a") {
    const auto g = make_grid(1, -1.0, 1.0, 20);
    const auto T = deformation(map_flow(g, [](const double* a, double* q) { q[0] = 2.0 * a[0]; }), g);
    Field rho0(g.size(), 0.5), f(g.size());
    for (std::size_t p = 0; p < g.size(); ++p) {
        CHECK(T.J[p] == doctest::Approx(2.0));
        CHECK(T.cofactor(0, 0)[p] == 1.0);
        f[p] = g.coord(p, 0) * g.coord(p, 0);
    }
    const auto rho = lagrangian_density(rho0, T);
    for (double r : rho) CHECK(r == doctest::Approx(0.25));
    const auto grad = grad_q(g, f, T);
    for (std::size_t p = 0; p < g.size(); ++p) CHECK(grad[0][p] == doctest::Approx(g.coord(p, 0)).epsilon(1e-12));
}

TEST_CASE("rigid rotation preserves volume and rotates gradients covariantly") {
    const auto g = make_grid(2, -2.0, 2.0, 32);
    const double th = 0.7, c = std::cos(th), s = std::sin(th);
    const auto flow = map_flow(g, [&](const double* a, double* q) {
        q[0] = c * a[0] - s * a[1];
        q[1] = s * a[0] + c * a[1];
    });
    const auto T = deformation(flow, g);
    for (double J : T.J) CHECK(std::abs(J - 1.0) <= 1e-10);
    // f = |a|^2 + a_0 = |q|^2 + (c q_0 + s q_1), so grad_q f = 2 q + (c, s)
    Field f(g.size());
    for (std::size_t p = 0; p < g.size(); ++p) f[p] = g.coord(p, 0) * g.coord(p, 0) + g.coord(p, 1) * g.coord(p, 1) + g.coord(p, 0);
    const auto grad = grad_q(g, f, T);
    for (std::size_t p = 0; p < g.size(); ++p) {
        CHECK(std::abs(grad[0][p] - (2.0 * flow.q[0][p] + c)) <= 1e-8);
        CHECK(std::abs(grad[1][p] - (2.0 * flow.q[1][p] + s)) <= 1e-8);
    }
}

TEST_CASE("cofactor identity holds on random smooth maps") {
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> u(-0.08, 0.08);
    for (int dim = 1; dim <= 3; ++dim) {
        const auto g = make_grid(dim, -1.0, 1.0, 16);
        for (int trial = 0; trial < 4; ++trial) {
            double k[3][3];
            for (auto& row : k)
                for (auto& x : row) x = u(rng);
            const auto flow = map_flow(g, [&](const double* a, double* q) {
                for (int i = 0; i < dim; ++i) {
                    q[i] = a[i];
                    for (int j = 0; j < dim; ++j) q[i] += k[i][j] * std::sin(2.0 * a[j] + i);
                }
            });
            const auto T = deformation(flow, g);
            CAPTURE(dim);
            CHECK(cofactor_identity_residual(T) <= 1e-10);
            for (double J : T.J) CHECK(J > 0.0);
        }
    }
}

TEST_CASE("folded map is reported as mesh tangling") {
    const auto g = make_grid(1, -1.0, 1.0, 32);
    auto flow = map_flow(g, [](const double* a, double* q) { q[0] = a[0] * a[0] * a[0] - 0.25 * a[0]; });
    flow.t = 0.5;
    try {
        deformation(flow, g);
        FAIL("expected MeshTanglingError");
    } catch (const MeshTanglingError& e) {
        CHECK(e.time() == 0.5);
        CHECK(e.jacobian() <= 0.0);
        CHECK(std::abs(g.coord(e.node(), 0)) < std::sqrt(1.0 / 12.0));
    }
    NodeMask excluded(g.size(), 1);
    CHECK_NOTHROW(deformation(flow, g, &excluded));
}

TEST_CASE("label inversion of linear maps") {
    const auto g = make_grid(1, -4.0, 4.0, 64);
    const auto xg = make_grid(1, -6.0, 6.0, 101);
    const auto ident = invert_labels(map_flow(g, [](const double* a, double* q) { q[0] = a[0]; }), g, xg);
    const auto twice = invert_labels(map_flow(g, [](const double* a, double* q) { q[0] = 2.0 * a[0]; }), g, xg);
    for (std::size_t p = 0; p < xg.size(); ++p) {
        const double x = xg.coord(p, 0);
        if (std::abs(x) <= 4.0) {
            REQUIRE(ident.in_hull[p]);
            CHECK(std::abs(ident.labels[0][p] - x) <= 1e-10);
        } else {
            CHECK_FALSE(ident.in_hull[p]);
        }
        REQUIRE(twice.in_hull[p]);
        CHECK(std::abs(twice.labels[0][p] - x / 2.0) <= 1e-10);
    }
}

TEST_CASE("2D round trip a -> q -> a") {
    const auto g = make_grid(2, -3.0, 3.0, 48);
    const auto flow = map_flow(g, [](const double* a, double* q) {
        q[0] = a[0] + 0.1 * std::sin(a[1]);
        q[1] = a[1] + 0.1 * std::cos(a[0]);
    });
    const auto xg = make_grid(2, -2.0, 2.0, 21);
    const auto inv = invert_labels(flow, g, xg);
    CHECK(inv.newton_failures == 0);
    for (std::size_t p = 0; p < xg.size(); ++p) {
        REQUIRE(inv.in_hull[p]);
        const double a[2] = {inv.labels[0][p], inv.labels[1][p]};
        // the interpolated forward map returns x; the exact map agrees to interpolation order
        CHECK(std::abs(interpolate(g, flow.q[0], a) - xg.coord(p, 0)) <= 1e-6 * g.spacing(0));
        CHECK(std::abs(interpolate(g, flow.q[1], a) - xg.coord(p, 1)) <= 1e-6 * g.spacing(0));
        CHECK(std::abs(a[0] + 0.1 * std::sin(a[1]) - xg.coord(p, 0)) <= 1e-5 * g.spacing(0));
        CHECK(std::abs(a[1] + 0.1 * std::cos(a[0]) - xg.coord(p, 1)) <= 1e-5 * g.spacing(0));
    }
}

TEST_CASE("Eulerian fields of the exact free Gaussian flow") {
    const auto g = make_grid(1, -12.0, 12.0, 512);
    const auto xg = make_grid(1, -10.0, 10.0, 401);
    const auto L = qhydro::test::gaussian_log_density(g, 1.0);
    Field rho0(L.size());
    for (std::size_t p = 0; p < L.size(); ++p) rho0[p] = std::exp(L[p]);

    SUBCASE("t = 0 reproduces the initial density") {
        const auto f = qhydro::test::exact_free_flow(g, 1.0, 0.0);
        const auto e = to_eulerian(f, deformation(f, g), rho0, g, g);
        for (std::size_t p = 0; p < g.size(); ++p) {
            const double x = g.coord(p, 0);
            CHECK(std::abs(e.rho[p] - std::exp(-x * x / 2.0) / std::sqrt(2.0 * kPi)) <= 1e-12);
            CHECK(e.v[0][p] == 0.0);
        }
    }
    SUBCASE("t = 2: spread density, velocity x sdot / s, unit mass") {
        const double t = 2.0, s = std::sqrt(2.0), sdot = t / (4.0 * s);
        const auto f = qhydro::test::exact_free_flow(g, 1.0, t);
        const auto e = to_eulerian(f, deformation(f, g), rho0, g, xg);
        for (std::size_t p = 0; p < xg.size(); ++p) {
            const double x = xg.coord(p, 0);
            REQUIRE(e.mask[p]);
            CHECK(std::abs(e.rho[p] - std::exp(-x * x / (2.0 * s * s)) / std::sqrt(2.0 * kPi * s * s)) <= 1e-6);
            CHECK(std::abs(e.v[0][p] - x * sdot / s) <= 1e-5);
        }
        CHECK(std::abs(integrate(xg, e.rho) - 1.0) <= 1e-4);
    }
}

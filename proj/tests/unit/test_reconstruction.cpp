#include <doctest.h>

#include <cmath>
#include <complex>

#include "qhydro/errors.hpp"
#include "qhydro/reconstruction.hpp"
#include "qhydro/schrodinger_oracle.hpp"
#include "qhydro/symmetry_group.hpp"
#include "support.hpp"

using namespace qhydro;
using qhydro::test::kPi;

namespace {

FlowState run_to(const InitialData& init, const LabelGrid& g, double t_end) {
    IntegrationConfig c;
    c.t_end = t_end;
    return run(init, g, c).snapshots.back();
}

double l2(const LabelGrid& g, const Field& f) {
    Field sq(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) sq[i] = f[i] * f[i];
    return std::sqrt(integrate(g, sq));
}

}  // namespace

TEST_CASE("reconstruction at t=0 returns the initial wavefunction") {
    const auto g = make_grid(1, -8.0, 8.0, 161);
    const auto init = qhydro::test::gaussian_data(g, 1.0, 0.5);
    const auto w = reconstruct(initialize(init, g), init, g, g);
    REQUIRE_FALSE(w.density_only);
    for (std::size_t p = 0; p < g.size(); ++p) {
        const double a = g.coord(p, 0);
        const std::complex<double> psi0 =
            std::sqrt(std::exp(init.log_rho0[p])) * std::exp(std::complex<double>(0.0, 0.5 * a));
        CHECK(std::abs(w.psi[p] - psi0) <= 1e-10);
    }
}

TEST_CASE("free Gaussian reconstruction matches the closed form") {
    const auto g = make_grid(1, -12.0, 12.0, 256);
    const auto init = qhydro::test::gaussian_data(g, 1.0);
    const auto flow = run_to(init, g, 2.0);
    const auto xg = make_grid(1, -8.0, 8.0, 321);
    const auto w = reconstruct(flow, init, g, xg);
    const auto exact = analytic_solution(AnalyticKind::FreeGaussian, AnalyticParams{}, xg, 2.0);

    const auto cmp = compare_waves(w.psi, exact.psi, xg, &w.mask);
    CHECK(cmp.amplitude_l2 <= 1e-4);
    CHECK(cmp.fidelity >= 0.9999);

    SUBCASE("phase is the quadratic chirp of the spreading packet") {
        // S(x) - S(0) = x^2 t / (8 sigma0^4 s(t)^2) for hbar = m = 1, sigma0 = 1
        const double s2 = std::pow(qhydro::test::spread(1.0, 2.0), 2);
        const std::size_t mid = xg.size() / 2;
        for (std::size_t p = 0; p < xg.size(); ++p) {
            const double x = xg.coord(p, 0);
            if (std::abs(x) > 2.5) continue;
            CHECK(std::abs((w.S[p] - w.S[mid]) - x * x * 2.0 / (8.0 * s2)) <= 1e-4);
        }
    }
    SUBCASE("norm is conserved") {
        Field rho = w.rho;
        CHECK(std::abs(integrate(xg, rho) - 1.0) <= 1e-3);
    }
    SUBCASE("transported action agrees with the path integral of m v") {
        const auto tensors = deformation(flow, g);
        const auto fields = to_eulerian(flow, tensors, init.rho0, g, xg);
        CHECK(path_phase_discrepancy(w, fields, Physics{}) <= 1e-4);
    }
}

TEST_CASE("oscillator ground state reconstructs as a static amplitude with phase -E t") {
    AnalyticParams ap;
    ap.sigma0 = std::sqrt(0.5);
    const auto g = make_grid(1, -6.0, 6.0, 192);
    const auto init = qhydro::test::gaussian_data(g, ap.sigma0, 0.0, PotentialSpec::harmonic(1.0, 1.0));
    const double T = 2.0 * kPi;
    const auto w = reconstruct(run_to(init, g, T), init, g, g);
    for (std::size_t p = 0; p < g.size(); ++p) {
        if (init.rho0[p] < 1e-3) continue;
        CHECK(std::abs(std::sqrt(w.rho[p]) - std::sqrt(init.rho0[p])) <= 1e-6);
        CHECK(w.S[p] == doctest::Approx(-0.5 * T).epsilon(1e-6));
    }
}

TEST_CASE("compare_waves is gauge invariant and rejects empty masks") {
    const auto g = make_grid(1, -6.0, 6.0, 121);
    const auto psi = analytic_solution(AnalyticKind::FreeGaussian, AnalyticParams{}, g, 0.7).psi;
    SUBCASE("identical inputs") {
        const auto c = compare_waves(psi, psi, g);
        CHECK(c.amplitude_l2 == 0.0);
        CHECK(c.density_l2 == 0.0);
        CHECK(c.phase_error <= 1e-12);
        CHECK(c.fidelity == doctest::Approx(1.0).epsilon(1e-14));
    }
    SUBCASE("global phase does not matter") {
        ComplexField shifted = psi;
        for (auto& z : shifted) z *= std::polar(1.0, 1.3);
        const auto c = compare_waves(psi, shifted, g);
        CHECK(c.amplitude_l2 <= 1e-14);
        CHECK(c.phase_error <= 1e-12);
        CHECK(c.fidelity == doctest::Approx(1.0).epsilon(1e-14));
    }
    SUBCASE("local phase error is detected") {
        ComplexField tilted = psi;
        for (std::size_t p = 0; p < g.size(); ++p) tilted[p] *= std::polar(1.0, 0.1 * g.coord(p, 0));
        const auto c = compare_waves(psi, tilted, g);
        CHECK(c.phase_error > 0.05);
        CHECK(c.fidelity < 0.999);
    }
    SUBCASE("errors") {
        NodeMask none(g.size(), 0);
        CHECK_THROWS_AS(compare_waves(psi, psi, g, &none), ConfigError);
        ComplexField shorter(psi.begin(), psi.end() - 1);
        CHECK_THROWS_AS(compare_waves(psi, shorter, g), ConfigError);
    }
}

TEST_CASE("multivalued phase gives a density-only reconstruction") {
    const auto g = make_grid(2, -7.0, 7.0, 57);
    VectorField v0(2, Field(g.size(), 0.0));
    const auto init = initial_data_from_velocity(g, qhydro::test::gaussian_log_density(g, 1.0),
                                                 v0, PotentialSpec::free(), Physics{});
    const auto w = reconstruct(initialize(init, g), init, g, g);
    CHECK(w.density_only);
    CHECK(w.psi.empty());
    CHECK(w.S.empty());
    CHECK(l2(g, [&] {
              Field d(g.size());
              for (std::size_t p = 0; p < g.size(); ++p) d[p] = w.rho[p] - init.rho0[p];
              return d;
          }()) <= 1e-12);
}

TEST_CASE("reconstruction does not depend on the labelling") {
    const auto g = make_grid(1, -10.0, 10.0, 201);
    const auto init = qhydro::test::gaussian_data(g, 1.0, 0.3);
    const auto flow = run_to(init, g, 1.0);
    const auto xg = make_grid(1, -5.0, 5.0, 101);
    const auto w = reconstruct(flow, init, g, xg);

    const double scale[] = {0.5};
    const double shift[] = {1.0};
    const auto map = affine_relabel(g, scale, shift);
    const auto r = relabel(flow, init, map, g);
    const auto w2 = reconstruct(r.flow, r.init, r.grid, xg);
    NodeMask both(xg.size());
    for (std::size_t p = 0; p < xg.size(); ++p) both[p] = w.mask[p] && w2.mask[p];
    const auto c = compare_waves(w.psi, w2.psi, xg, &both);
    CHECK(c.amplitude_l2 <= 1e-6);
    CHECK(c.phase_error <= 1e-6);
}

TEST_CASE("tangled flow cannot be reconstructed") {
    const auto g = make_grid(1, -8.0, 8.0, 81);
    const auto init = qhydro::test::gaussian_data(g, 1.0);
    auto flow = initialize(init, g);
    // q = a (1 - 2 exp(-a^2)) folds: dq/da = -1 at a = 0
    for (std::size_t p = 0; p < g.size(); ++p) {
        const double a = g.coord(p, 0);
        flow.q[0][p] = a * (1.0 - 2.0 * std::exp(-a * a));
    }
    CHECK_THROWS_AS(reconstruct(flow, init, g, g), MeshTanglingError);
}

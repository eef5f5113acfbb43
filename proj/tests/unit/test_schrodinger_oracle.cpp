#include <doctest.h>

#include <cmath>
#include <random>

#include "qhydro/errors.hpp"
#include "qhydro/schrodinger_oracle.hpp"
#include "support.hpp"

using namespace qhydro;
using qhydro::test::kPi;
using cd = std::complex<double>;

namespace {

ComplexField gaussian_psi(const LabelGrid& g, double sigma, double p0 = 0.0, double x0 = 0.0) {
    ComplexField psi(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) {
        const double x = g.coord(k, 0) - x0;
        psi[k] = std::exp(cd(-x * x / (4.0 * sigma * sigma), p0 * g.coord(k, 0))) /
                 std::pow(2.0 * kPi * sigma * sigma, 0.25);
    }
    return psi;
}

double second_moment(const LabelGrid& g, const ComplexField& psi) {
    Field w(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) w[k] = std::norm(psi[k]) * g.coord(k, 0) * g.coord(k, 0);
    return integrate(g, w);
}

}  // namespace

TEST_CASE("free Gaussian spreads to width sqrt(2) at t = 2") {
    const auto g = make_grid(1, -16.0, 16.0, 2048);
    const auto prop = propagate_cn(g, gaussian_psi(g, 1.0), PotentialSpec::free(), Physics{}, 1e-3, 2.0);
    REQUIRE(prop.snapshots.size() == 2);
    CHECK(prop.snapshots.back().t == doctest::Approx(2.0));
    CHECK(std::abs(std::sqrt(second_moment(g, prop.snapshots.back().psi)) - std::sqrt(2.0)) <= 1e-4);
    CHECK(prop.max_norm_change <= 1e-12);
}

namespace {
// max over a period of | |psi(t)| - |psi(0)| | for the closed-form ground state
double ground_state_wobble(int n) {
    const auto g = make_grid(1, -8.0, 8.0, n);
    const auto psi0 = gaussian_psi(g, std::sqrt(0.5));
    const auto prop = propagate_cn(g, psi0, PotentialSpec::harmonic(1.0, 1.0), Physics{}, 2e-3, 2.0 * kPi, kPi / 2.0);
    double worst = 0.0;
    for (const auto& s : prop.snapshots)
        for (std::size_t k = 0; k < g.size(); ++k) worst = std::max(worst, std::abs(std::abs(s.psi[k]) - std::abs(psi0[k])));
    CHECK(prop.max_norm_change <= 1e-12);
    return worst;
}
}  // namespace

TEST_CASE("oscillator ground state density is static over a period") {
    // the closed form is an eigenstate of the continuum Hamiltonian, not of the three-point
    // one, so |psi| moves at O(dx^2)
    const double w1 = ground_state_wobble(1024), w2 = ground_state_wobble(2048);
    CAPTURE(w1);
    CAPTURE(w2);
    CHECK(w2 <= 5e-6);
    CHECK(w1 / w2 >= 3.5);
}

TEST_CASE("CN is unitary for a windowed plane wave in 2D") {
    const auto g = make_grid(2, -8.0, 8.0, 96);
    ComplexField psi(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) {
        const double x = g.coord(k, 0), y = g.coord(k, 1);
        psi[k] = std::exp(cd(-(x * x + y * y) / 4.0, 0.8 * x - 0.3 * y)) / std::sqrt(2.0 * kPi);
    }
    const auto prop = propagate_cn(g, psi, PotentialSpec::harmonic(1.0, 0.5), Physics{}, 5e-3, 0.5);
    CHECK(prop.max_norm_change <= 1e-12);
    Field n(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) n[k] = std::norm(prop.snapshots.back().psi[k]);
    CHECK(std::abs(integrate(g, n) - 1.0) <= 1e-8);
}

TEST_CASE("closed-form states") {
    const auto g = make_grid(1, -10.0, 10.0, 401);
    AnalyticParams prm;
    SUBCASE("free Gaussian at t = 0") {
        const auto e = analytic_solution(AnalyticKind::FreeGaussian, prm, g, 0.0);
        for (std::size_t k = 0; k < g.size(); ++k) {
            const double x = g.coord(k, 0);
            CHECK(e.rho[k] == doctest::Approx(std::exp(-x * x / 2.0) / std::sqrt(2.0 * kPi)));
            CHECK(e.v[0][k] == 0.0);
        }
    }
    SUBCASE("coherent state centre follows x0 cos(omega t)") {
        prm.x0 = 1.3;
        prm.omega = 2.0;
        for (double t : {0.0, 0.4, 1.1, 2.5}) {
            const auto e = analytic_solution(AnalyticKind::HoCoherent, prm, g, t);
            Field w(g.size());
            for (std::size_t k = 0; k < g.size(); ++k) w[k] = e.rho[k] * g.coord(k, 0);
            CHECK(integrate(g, w) == doctest::Approx(1.3 * std::cos(2.0 * t)).epsilon(1e-9));
            CHECK(analytic_trajectory(AnalyticKind::HoCoherent, prm, 0.5, 0, t) ==
                  doctest::Approx(0.5 + 1.3 * (std::cos(2.0 * t) - 1.0)));
        }
    }
    SUBCASE("vortex circulates with v_theta = hbar / (m r)") {
        const auto g2 = make_grid(2, -4.0, 4.0, 64);
        const auto e = analytic_solution(AnalyticKind::Vortex2D, prm, g2, 0.3);
        for (std::size_t k = 0; k < g2.size(); ++k) {
            const double x = g2.coord(k, 0), y = g2.coord(k, 1), r2 = x * x + y * y;
            CHECK(e.v[0][k] == doctest::Approx(-y / r2));
            CHECK(e.v[1][k] == doctest::Approx(x / r2));
        }
        CHECK_THROWS_AS(analytic_solution(AnalyticKind::Vortex2D, prm, g, 0.0), ConfigError);
    }
    SUBCASE("free Gaussian trajectories") {
        CHECK(analytic_trajectory(AnalyticKind::FreeGaussian, prm, 1.0, 0, 2.0) == doctest::Approx(std::sqrt(2.0)));
        CHECK_THROWS_AS(analytic_trajectory(AnalyticKind::Vortex2D, prm, 1.0, 0, 2.0), ConfigError);
    }
    SUBCASE("unphysical parameters") {
        prm.sigma0 = 0.0;
        CHECK_THROWS_AS(analytic_solution(AnalyticKind::FreeGaussian, prm, g, 0.0), ConfigError);
        CHECK_THROWS_AS(parse_analytic_kind("square-well"), ConfigError);
        CHECK(parse_analytic_kind("ho-coherent") == AnalyticKind::HoCoherent);
    }
}

TEST_CASE("field extraction") {
    const auto g = make_grid(1, -10.0, 10.0, 2001);
    SUBCASE("real psi has no current") {
        const auto e = extract_fields(g, gaussian_psi(g, 1.0), Physics{}, 0.0);
        for (double v : e.v[0]) CHECK(std::abs(v) <= 1e-14);
    }
    SUBCASE("plane-wave phase gives v = p / m") {
        const auto e = extract_fields(g, gaussian_psi(g, 1.0, 1.0), Physics{}, 0.0);
        for (std::size_t k = 0; k < g.size(); ++k)
            if (std::abs(g.coord(k, 0)) < 4.0) CHECK(std::abs(e.v[0][k] - 1.0) <= 1e-8);
    }
    SUBCASE("vortex current off the core") {
        const auto g2 = make_grid(2, -4.0, 4.0, 401);
        ComplexField psi(g2.size());
        for (std::size_t k = 0; k < g2.size(); ++k) {
            const double x = g2.coord(k, 0), y = g2.coord(k, 1);
            psi[k] = cd(x, y) * std::exp(-(x * x + y * y));
        }
        const auto e = extract_fields(g2, psi, Physics{}, 0.0);
        for (std::size_t k = 0; k < g2.size(); ++k) {
            const double x = g2.coord(k, 0), y = g2.coord(k, 1), r = std::hypot(x, y);
            if (r < 0.5 || r > 2.0) continue;
            CHECK(std::abs((-y * e.v[0][k] + x * e.v[1][k]) - 1.0) <= 1e-6);
        }
    }
}

TEST_CASE("oracle reproduces the closed-form free Gaussian") {
    const auto g = make_grid(1, -16.0, 16.0, 2048);
    const auto prop = propagate_cn(g, gaussian_psi(g, 1.0, 0.5), PotentialSpec::free(), Physics{}, 1e-3, 1.0);
    AnalyticParams prm;
    prm.p0 = 0.5;
    const auto exact = analytic_solution(AnalyticKind::FreeGaussian, prm, g, 1.0);
    const auto got = extract_fields(g, prop.snapshots.back().psi, Physics{}, 1.0);
    for (std::size_t k = 0; k < g.size(); ++k) {
        CHECK(std::abs(got.rho[k] - exact.rho[k]) <= 1e-5);
        if (exact.rho[k] > 1e-3) CHECK(std::abs(got.v[0][k] - exact.v[0][k]) <= 5e-4);
    }
    CHECK(points_per_wavelength(g, prop.snapshots.back().psi, Physics{}) >= 8.0);
}

TEST_CASE("Hamiltonian expectation of the free Gaussian") {
    const auto g = make_grid(1, -12.0, 12.0, 1024);
    CHECK(std::abs(energy_expectation(g, gaussian_psi(g, 1.0), PotentialSpec::free(), Physics{}, 0.0) - 0.125) <= 1e-3);
    const auto h = apply_hamiltonian(g, gaussian_psi(g, std::sqrt(0.5)), PotentialSpec::harmonic(1.0, 1.0), Physics{}, 0.0);
    const auto psi = gaussian_psi(g, std::sqrt(0.5));
    for (std::size_t k = 0; k < g.size(); ++k) CHECK(std::abs(h[k] - 0.5 * psi[k]) <= 1e-4);
}

TEST_CASE("Euler residuals") {
    const auto g = make_grid(1, -10.0, 10.0, 801);
    AnalyticParams prm;
    std::vector<EulerianField> fields;
    SUBCASE("closed-form free Gaussian is a solution") {
        for (double t : {0.99, 1.0, 1.01}) fields.push_back(analytic_solution(AnalyticKind::FreeGaussian, prm, g, t));
        const auto r = euler_residuals(fields, PotentialSpec::free(), Physics{});
        CHECK(r.snapshots_used == 1);
        CHECK(r.continuity <= 1e-4);
        CHECK(r.euler <= 1e-4);
    }
    SUBCASE("static ground state") {
        prm.sigma0 = std::sqrt(0.5);
        for (double t : {0.0, 0.1, 0.2}) fields.push_back(analytic_solution(AnalyticKind::HoGround, prm, g, t));
        const auto r = euler_residuals(fields, PotentialSpec::harmonic(1.0, 1.0), Physics{});
        CHECK(r.continuity <= 1e-8);
        CHECK(r.euler <= 1e-6);
    }
    SUBCASE("random fields are detected") {
        std::mt19937 rng(5);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (double t : {0.0, 0.1, 0.2}) {
            auto e = analytic_solution(AnalyticKind::FreeGaussian, prm, g, t);
            for (auto& r : e.rho) r *= 1.0 + 0.1 * u(rng);
            for (auto& v : e.v[0]) v += 0.1 * u(rng);
            fields.push_back(std::move(e));
        }
        const auto r = euler_residuals(fields, PotentialSpec::free(), Physics{});
        CHECK(r.continuity >= 1e-2);
        CHECK(r.euler >= 1e-2);
    }
    SUBCASE("too few snapshots") {
        fields.push_back(analytic_solution(AnalyticKind::FreeGaussian, prm, g, 0.0));
        fields.push_back(analytic_solution(AnalyticKind::FreeGaussian, prm, g, 0.1));
        CHECK_THROWS_AS(euler_residuals(fields, PotentialSpec::free(), Physics{}), ConfigError);
    }
}

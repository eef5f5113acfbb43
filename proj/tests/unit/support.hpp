#pragma once

#include <cmath>
#include <numbers>

#include "qhydro/flow_integrator.hpp"

namespace qhydro::test {

inline constexpr double kPi = std::numbers::pi;

/// Isotropic normalised Gaussian ln rho0 with standard deviation sigma centred at c (axis 0).
inline Field gaussian_log_density(const LabelGrid& g, double sigma, double c = 0.0) {
    Field L(g.size());
    const int d = g.dim();
    for (std::size_t p = 0; p < g.size(); ++p) {
        double r2 = 0.0;
        for (int i = 0; i < d; ++i) {
            const double a = g.coord(p, i) - (i == 0 ? c : 0.0);
            r2 += a * a;
        }
        L[p] = -r2 / (2.0 * sigma * sigma) - 0.5 * d * std::log(2.0 * kPi * sigma * sigma);
    }
    return L;
}

/// Gaussian initial data with phase p.a (p along axis 0).
inline InitialData gaussian_data(const LabelGrid& g, double sigma, double p0 = 0.0,
                                 PotentialSpec v = PotentialSpec::free(), double c = 0.0) {
    Field S(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) S[k] = p0 * g.coord(k, 0);
    return initial_data_from_phase(g, gaussian_log_density(g, sigma, c), std::move(S), std::move(v),
                                   Physics{});
}

/// Free Gaussian width factor s(t)/sigma0 for hbar = m = 1.
inline double spread(double sigma0, double t) {
    return std::sqrt(1.0 + std::pow(t / (2.0 * sigma0 * sigma0), 2));
}

/// Exact free-Gaussian flow q = a r(t), qdot = a r'(t) with r = spread(sigma0, t).
inline FlowState exact_free_flow(const LabelGrid& g, double sigma0, double t) {
    const double r = spread(sigma0, t);
    const double rdot = t / (4.0 * std::pow(sigma0, 4) * r);
    FlowState f;
    f.t = t;
    f.q.assign(g.dim(), Field(g.size()));
    f.qdot.assign(g.dim(), Field(g.size()));
    f.phase.assign(g.size(), 0.0);
    for (int i = 0; i < g.dim(); ++i)
        for (std::size_t p = 0; p < g.size(); ++p) {
            f.q[i][p] = g.coord(p, i) * r;
            f.qdot[i][p] = g.coord(p, i) * rdot;
        }
    return f;
}

inline double max_abs_diff(const Field& a, const Field& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace qhydro::test

#include "qhydro/reconstruction.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "qhydro/errors.hpp"

namespace qhydro {

ReconstructedWave reconstruct(const FlowState& flow, const InitialData& init,
                              const LabelGrid& grid, const LabelGrid& xgrid) {
    const auto tensors = deformation(flow, grid, init.frozen.excluded());
    const auto inv = invert_labels(flow, grid, xgrid);

    ReconstructedWave w;
    w.xgrid = xgrid;
    w.t = flow.t;
    w.mask = inv.in_hull;
    w.rho = sample_at_labels(grid, lagrangian_density(init.rho0, tensors), inv);
    for (auto& r : w.rho) r = std::max(r, 0.0);
    w.density_only = init.multivalued_phase();
    if (w.density_only) return w;

    w.S = sample_at_labels(grid, flow.phase, inv);
    w.psi.assign(xgrid.size(), {});
    const double hbar = init.phys.hbar;
    for (std::size_t p = 0; p < xgrid.size(); ++p)
        if (w.mask[p]) w.psi[p] = std::polar(std::sqrt(w.rho[p]), w.S[p] / hbar);
    const auto peak = std::max_element(w.rho.begin(), w.rho.end()) - w.rho.begin();
    w.phase_reference = w.S[static_cast<std::size_t>(peak)];
    return w;
}

WaveComparison compare_waves(const ComplexField& a, const ComplexField& b, const LabelGrid& xgrid,
                             const NodeMask* mask) {
    if (a.size() != b.size() || a.size() != xgrid.size())
        throw ConfigError("wavefunctions do not share the grid");
    const auto w = quadrature_weights(xgrid);
    auto use = [&](std::size_t p) { return !mask || (*mask)[p]; };

    std::complex<double> overlap{};
    double na = 0.0, nb = 0.0, amp2 = 0.0, den2 = 0.0;
    std::size_t used = 0;
    for (std::size_t p = 0; p < a.size(); ++p) {
        if (!use(p)) continue;
        ++used;
        overlap += w[p] * std::conj(a[p]) * b[p];
        na += w[p] * std::norm(a[p]);
        nb += w[p] * std::norm(b[p]);
        const double da = std::abs(a[p]) - std::abs(b[p]);
        const double dr = std::norm(a[p]) - std::norm(b[p]);
        amp2 += w[p] * da * da;
        den2 += w[p] * dr * dr;
    }
    if (used == 0) throw ConfigError("comparison mask is empty");

    WaveComparison c;
    c.amplitude_l2 = std::sqrt(amp2);
    c.density_l2 = std::sqrt(den2);
    c.fidelity = (na > 0.0 && nb > 0.0) ? std::abs(overlap) / std::sqrt(na * nb) : 0.0;

    // the overlap phase is the density-weighted mean of arg(a* b) to leading order
    const double offset = std::arg(overlap);
    double num = 0.0, den = 0.0;
    for (std::size_t p = 0; p < a.size(); ++p) {
        if (!use(p)) continue;
        const double weight = w[p] * std::abs(a[p]) * std::abs(b[p]);
        if (weight == 0.0) continue;
        const double d = std::remainder(std::arg(std::conj(a[p]) * b[p]) - offset,
                                        2.0 * std::numbers::pi);
        num += weight * d * d;
        den += weight;
    }
    c.phase_error = den > 0.0 ? std::sqrt(num / den) : 0.0;
    return c;
}

double path_phase_discrepancy(const ReconstructedWave& wave, const EulerianField& fields,
                              const Physics& phys) {
    const LabelGrid& g = wave.xgrid;
    if (g.dim() != 1) throw ConfigError("path phase comparison is one-dimensional");
    if (wave.density_only) throw ConfigError("density-only reconstruction has no phase");
    if (!(fields.xgrid == g)) throw ConfigError("fields and wave use different grids");
    const std::size_t n = g.size();
    const std::size_t ref =
        static_cast<std::size_t>(std::max_element(wave.rho.begin(), wave.rho.end()) - wave.rho.begin());
    const double h = g.spacing(0);
    const double peak = wave.rho[ref];

    // trapezoid integral of m v outward from the reference node
    Field path(n, 0.0);
    for (std::size_t p = ref + 1; p < n; ++p)
        path[p] = path[p - 1] + 0.5 * h * phys.mass * (fields.v[0][p] + fields.v[0][p - 1]);
    for (std::size_t p = ref; p-- > 0;)
        path[p] = path[p + 1] - 0.5 * h * phys.mass * (fields.v[0][p] + fields.v[0][p + 1]);

    double worst = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
        if (!wave.mask[p] || wave.rho[p] < 1e-3 * peak) continue;
        worst = std::max(worst, std::abs((wave.S[p] - wave.S[ref]) - path[p]));
    }
    return worst;
}

}  // namespace qhydro

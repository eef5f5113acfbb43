#include "qhydro/charges.hpp"

#include <algorithm>
#include <cmath>

#include "qhydro/errors.hpp"
#include "qhydro/schrodinger_oracle.hpp"

namespace qhydro {

void ChargeSeries::push(double t, double value) {
    if (!std::isfinite(value)) throw NumericError("non-finite charge " + name, values.size());
    if (!times.empty() && !(t > times.back()))
        throw ConfigError("charge times must increase strictly");
    times.push_back(t);
    values.push_back(value);
}

double ChargeSeries::mean() const {
    if (values.empty()) return 0.0;
    double s = 0.0;
    for (double v : values) s += v;
    return s / static_cast<double>(values.size());
}

double ChargeSeries::drift() const {
    if (values.empty()) return 0.0;
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    const double denom = std::max(std::abs(mean()), scale);
    if (denom == 0.0) return *hi - *lo;
    return (*hi - *lo) / denom;
}

double ChargeSeries::excursion(std::size_t k) const { return values.at(k) - values.front(); }

namespace {

struct NodeFields {
    DeformationTensors tensors;
    Field U;
    Field V;
};

NodeFields node_fields(const FlowState& flow, const InitialData& init, const LabelGrid& grid) {
    NodeFields f;
    f.tensors = deformation(flow, grid, init.frozen.excluded());
    const auto L = log_density(init.log_rho0, f.tensors);
    f.U = quantum_fields_from_log(grid, L, f.tensors, init.phys).U;
    const int d = grid.dim();
    f.V.resize(grid.size());
    std::array<double, kMaxDim> q{};
    for (std::size_t p = 0; p < grid.size(); ++p) {
        for (int i = 0; i < d; ++i) q[i] = flow.q[i][p];
        f.V[p] = init.potential.value(std::span<const double>(q.data(), d), flow.t);
    }
    return f;
}

Field integration_weights(const InitialData& init, const LabelGrid& grid) {
    auto w = quadrature_weights(grid);
    if (init.frozen.active())
        for (std::size_t p = 0; p < w.size(); ++p)
            if (init.frozen.mask[p]) w[p] = 0.0;
    return w;
}

}  // namespace

Field energy_density(const FlowState& flow, const InitialData& init, const LabelGrid& grid) {
    const auto f = node_fields(flow, init, grid);
    const int d = grid.dim();
    Field H(grid.size());
    for (std::size_t p = 0; p < grid.size(); ++p) {
        double v2 = 0.0;
        for (int i = 0; i < d; ++i) v2 += flow.qdot[i][p] * flow.qdot[i][p];
        H[p] = init.rho0[p] * (0.5 * init.phys.mass * v2 + f.U[p] + f.V[p]);
    }
    return H;
}

Field noether_density(const FlowState& flow, const InitialData& init, const LabelGrid& grid,
                      const GroupParams& g, const VectorField* xi) {
    const auto f = node_fields(flow, init, grid);
    const int d = grid.dim();
    const double m = init.phys.mass;
    const double t = flow.t;
    const double xi0 = g.xi0(t);
    Field P(grid.size());
    std::array<double, kMaxDim> q{}, eta{};
    for (std::size_t p = 0; p < grid.size(); ++p) {
        const double r0 = init.rho0[p];
        double v2 = 0.0, qq = 0.0, uq = 0.0;
        for (int i = 0; i < d; ++i) {
            q[i] = flow.q[i][p];
            v2 += flow.qdot[i][p] * flow.qdot[i][p];
            qq += q[i] * q[i];
            uq += g.u[i] * q[i];
        }
        g.eta(std::span<const double>(q.data(), d), t, std::span(eta).first(d));
        const double ell = r0 * (0.5 * m * v2 - f.U[p] - f.V[p]);
        double bracket = 0.0;
        for (int i = 0; i < d; ++i) {
            double e = eta[i] - flow.qdot[i][p] * xi0;
            if (xi)
                for (int l = 0; l < d; ++l) e -= f.tensors.F[i * d + l][p] * (*xi)[l][p];
            bracket += flow.qdot[i][p] * e;
        }
        const double lambda0 = m * r0 * (0.5 * g.alpha * qq - uq);
        P[p] = ell * xi0 + m * r0 * bracket - lambda0;
    }
    return P;
}

ChargeKind parse_charge_kind(const std::string& name) {
    if (name == "energy") return ChargeKind::Energy;
    if (name == "momentum") return ChargeKind::Momentum;
    if (name == "angular") return ChargeKind::Angular;
    if (name == "galilean") return ChargeKind::Galilean;
    if (name == "dilation") return ChargeKind::Dilation;
    if (name == "extension") return ChargeKind::Extension;
    throw ConfigError("unknown charge '" + name + "'");
}

std::string to_string(ChargeKind kind) {
    switch (kind) {
        case ChargeKind::Energy: return "energy";
        case ChargeKind::Momentum: return "momentum";
        case ChargeKind::Angular: return "angular";
        case ChargeKind::Galilean: return "galilean";
        case ChargeKind::Dilation: return "dilation";
        case ChargeKind::Extension: return "extension";
    }
    return "?";
}

GroupParams charge_params(const ChargeSelector& sel) {
    switch (sel.kind) {
        case ChargeKind::Energy: return GroupParams::time_translation(-1.0);
        case ChargeKind::Momentum: return GroupParams::translation(sel.axis, 1.0);
        // omega_ab = -1 gives q_a p_b - q_b p_a
        case ChargeKind::Angular: return GroupParams::rotation(sel.axis, sel.axis2, -1.0);
        case ChargeKind::Galilean: return GroupParams::boost(sel.axis, 1.0);
        case ChargeKind::Dilation: return GroupParams::dilation(1.0);
        case ChargeKind::Extension: return GroupParams::extension(1.0);
    }
    return {};
}

namespace {

void check_selector(const ChargeSelector& sel, int dim) {
    if (sel.axis < 0 || sel.axis >= dim) throw ConfigError("charge axis outside the dimension");
    if (sel.kind == ChargeKind::Angular &&
        (dim < 2 || sel.axis2 < 0 || sel.axis2 >= dim || sel.axis2 == sel.axis))
        throw ConfigError("angular momentum needs two distinct axes in dim >= 2");
}

}  // namespace

void require_admissible(const ChargeSelector& sel, const PotentialSpec& potential,
                        const LabelGrid& grid, const std::vector<double>& times) {
    check_selector(sel, grid.dim());
    std::vector<double> ts = times;
    // boosts and extensions only show their constraint at t != 0
    ts.push_back(1.0);
    const auto rep = check_potential_admissibility(charge_params(sel), potential, grid.dim(),
                                                   sample_points(grid), ts);
    if (!rep.pass)
        throw InadmissibleError(to_string(sel.kind) + " is not conserved for " +
                                potential.describe() + ": " + rep.constraint);
}

double charge_scale(ChargeKind kind, double energy, double length, double mass, double t_max) {
    const double E = std::abs(energy);
    const double p = std::sqrt(2.0 * mass * E);
    switch (kind) {
        case ChargeKind::Energy: return E;
        case ChargeKind::Momentum: return p;
        case ChargeKind::Angular: return p * length;
        case ChargeKind::Galilean: return mass * length + t_max * p;
        case ChargeKind::Dilation: return p * length + t_max * E;
        case ChargeKind::Extension: return mass * length * length + t_max * p * length + t_max * t_max * E;
    }
    return E;
}

ChargeSeries schrodinger_charges(const std::vector<FlowState>& snapshots, const InitialData& init,
                                 const LabelGrid& grid, const ChargeSelector& sel) {
    if (snapshots.empty()) throw ConfigError("no snapshots");
    std::vector<double> times;
    for (const auto& s : snapshots) times.push_back(s.t);
    require_admissible(sel, init.potential, grid, times);
    const auto w = integration_weights(init, grid);
    const auto g = charge_params(sel);

    ChargeSeries series;
    series.name = to_string(sel.kind);
    for (const auto& s : snapshots) {
        const auto P = noether_density(s, init, grid, g);
        double Q = 0.0;
        for (std::size_t p = 0; p < P.size(); ++p) Q += w[p] * P[p];
        series.push(s.t, Q);
    }
    const auto H = energy_density(snapshots.front(), init, grid);
    double E = 0.0, q2 = 0.0;
    for (std::size_t p = 0; p < H.size(); ++p) {
        E += w[p] * H[p];
        for (int i = 0; i < grid.dim(); ++i)
            q2 += w[p] * init.rho0[p] * snapshots.front().q[i][p] * snapshots.front().q[i][p];
    }
    series.scale = charge_scale(sel.kind, E, std::sqrt(q2), init.phys.mass, times.back());
    return series;
}

VectorField relabel_current(const FlowState& flow, const InitialData& init, const LabelGrid& grid,
                            const VectorField& xi) {
    const int d = grid.dim();
    const auto a = acceleration(flow, init.log_rho0, init.potential, grid, init.phys,
                                ForceForm::Weber, &init.frozen);
    VectorField J(d, Field(grid.size()));
    std::array<double, kMaxDim> q{};
    for (std::size_t p = 0; p < grid.size(); ++p) {
        double v2 = 0.0;
        for (int i = 0; i < d; ++i) {
            v2 += flow.qdot[i][p] * flow.qdot[i][p];
            q[i] = flow.q[i][p];
        }
        const double lag = 0.5 * init.phys.mass * v2 -
                           init.potential.value(std::span<const double>(q.data(), d), flow.t) -
                           a.VQ[p];
        for (int i = 0; i < d; ++i) J[i][p] = init.rho0[p] * xi[i][p] * lag;
    }
    return J;
}

RelabelChargeResult relabel_charge(const std::vector<FlowState>& snapshots, const InitialData& init,
                                   const LabelGrid& grid, const VectorField& xi) {
    if (snapshots.empty()) throw ConfigError("no snapshots");
    const double res = relabel_constraint_residual(grid, init.rho0, xi);
    if (res > 1e-8)
        throw InadmissibleError("relabel field violates d(rho0 xi_i)/da_i = 0 (residual " +
                                std::to_string(res) + ")");
    const int d = grid.dim();
    const double m = init.phys.mass;
    auto w = integration_weights(init, grid);
    const auto good = init.good_fluid_mask();
    for (std::size_t p = 0; p < w.size(); ++p)
        if (!good[p]) w[p] = 0.0;

    RelabelChargeResult out;
    out.series.name = "relabel";
    for (const auto& s : snapshots) {
        const auto T = deformation(s, grid, init.frozen.excluded());
        double Q = 0.0, mag = 0.0;
        for (std::size_t p = 0; p < grid.size(); ++p) {
            if (w[p] == 0.0) continue;
            double dot = 0.0, v2 = 0.0, fx2 = 0.0;
            for (int i = 0; i < d; ++i) {
                double fx = 0.0;
                for (int j = 0; j < d; ++j) fx += T.F[i * d + j][p] * xi[j][p];
                dot += s.qdot[i][p] * fx;
                v2 += s.qdot[i][p] * s.qdot[i][p];
                fx2 += fx * fx;
            }
            Q -= w[p] * m * init.rho0[p] * dot;
            mag += w[p] * m * init.rho0[p] * std::sqrt(v2 * fx2);
        }
        out.series.push(s.t, Q);
        out.series.scale = std::max(out.series.scale, mag);
    }
    const auto J = relabel_current(snapshots.back(), init, grid, xi);
    double jn = 0.0;
    for (std::size_t p = 0; p < grid.size(); ++p)
        for (int i = 0; i < d; ++i) jn += w[p] * J[i][p] * J[i][p];
    out.current_norm = std::sqrt(jn);
    return out;
}

Loop circle_loop(std::span<const double> centre, double radius, int n) {
    if (centre.size() != 2) throw ConfigError("circle loops are two-dimensional");
    if (!(radius > 0.0) || n < 8) throw ConfigError("circle loop needs radius > 0 and >= 8 points");
    Loop loop(n);
    for (int k = 0; k < n; ++k) {
        const double th = 2.0 * M_PI * k / n;
        loop[k] = {centre[0] + radius * std::cos(th), centre[1] + radius * std::sin(th), 0.0};
    }
    return loop;
}

double circulation(const FlowState& flow, const InitialData& init, const LabelGrid& grid,
                   const Loop& loop) {
    const int d = grid.dim();
    if (loop.size() < 3) throw ConfigError("loop needs at least three points");
    const double peak = *std::max_element(init.rho0.begin(), init.rho0.end());
    std::vector<std::array<double, kMaxDim>> cov(loop.size());
    for (std::size_t s = 0; s < loop.size(); ++s) {
        const auto a = std::span<const double>(loop[s].data(), d);
        for (int k = 0; k < d; ++k)
            if (a[k] < grid.lo(k) || a[k] > grid.hi(k))
                throw ConfigError("loop leaves the label domain");
        const double rho = std::exp(interpolate(grid, init.log_rho0, a));
        std::array<int, kMaxDim> m{};
        for (int k = 0; k < d; ++k)
            m[k] = static_cast<int>(std::lround((a[k] - grid.lo(k)) / grid.spacing(k)));
        const std::size_t node = grid.index(std::span<const int>(m.data(), d));
        if (rho < kDensityFloorRatio * peak || (init.frozen.active() && init.frozen.mask[node]))
            throw ConfigError("loop passes outside good fluid");
        cov[s].fill(0.0);
        std::array<double, kMaxDim> gq{};
        for (int i = 0; i < d; ++i) {
            interpolate_with_gradient(grid, flow.q[i], a, std::span(gq).first(d));
            const double v = interpolate(grid, flow.qdot[i], a);
            for (int j = 0; j < d; ++j) cov[s][j] += v * gq[j];
        }
    }
    double G = 0.0;
    for (std::size_t s = 0; s < loop.size(); ++s) {
        const std::size_t n = (s + 1) % loop.size();
        for (int j = 0; j < d; ++j) G += 0.5 * (cov[s][j] + cov[n][j]) * (loop[n][j] - loop[s][j]);
    }
    return G;
}

EulerianCharge to_eulerian_charge(const Field& P, const VectorField& current, const FlowState& flow,
                                  const DeformationTensors& T, const LabelGrid& grid,
                                  const LabelGrid& xgrid) {
    const int d = grid.dim();
    const auto inv = invert_labels(flow, grid, xgrid);
    Field PJ(grid.size());
    for (std::size_t p = 0; p < grid.size(); ++p) PJ[p] = P[p] / T.J[p];
    EulerianCharge e;
    e.xgrid = xgrid;
    e.mask = inv.in_hull;
    e.P = sample_at_labels(grid, PJ, inv);
    for (int i = 0; i < d; ++i) {
        Field Ji(grid.size());
        for (std::size_t p = 0; p < grid.size(); ++p) {
            double v = PJ[p] * flow.qdot[i][p];
            if (!current.empty())
                for (int j = 0; j < d; ++j) v += T.F[i * d + j][p] * current[j][p];
            Ji[p] = v;
        }
        e.J.push_back(sample_at_labels(grid, Ji, inv));
    }
    return e;
}

double eulerian_charge_continuity(const EulerianCharge& before, const EulerianCharge& now,
                                  const EulerianCharge& after, double dt) {
    const LabelGrid& g = now.xgrid;
    Field div(g.size(), 0.0);
    for (int i = 0; i < g.dim(); ++i) {
        const auto dJ = derivative(g, now.J[i], 1, i);
        for (std::size_t p = 0; p < g.size(); ++p) div[p] += dJ[p];
    }
    const auto w = quadrature_weights(g);
    double s = 0.0;
    for (std::size_t p = 0; p < g.size(); ++p) {
        if (!(before.mask[p] && now.mask[p] && after.mask[p])) continue;
        const double r = (after.P[p] - before.P[p]) / (2.0 * dt) + div[p];
        s += w[p] * r * r;
    }
    return std::sqrt(s);
}

Field psi_noether_density(const ComplexField& psi, const LabelGrid& xgrid, double t,
                          const GroupParams& g, const PotentialSpec& potential,
                          const Physics& phys) {
    using cd = std::complex<double>;
    const int d = xgrid.dim();
    const double hbar = phys.hbar, m = phys.mass;
    const auto Hpsi = apply_hamiltonian(xgrid, psi, potential, phys, t);
    std::vector<ComplexField> grad;
    for (int i = 0; i < d; ++i) grad.push_back(derivative(xgrid, psi, 1, i));
    const double theta0 = g.xi0(t);
    const double s = 0.5 * g.beta + g.alpha * t;
    Field P(psi.size());
    std::array<double, kMaxDim> theta{};
    for (std::size_t p = 0; p < psi.size(); ++p) {
        const auto x = xgrid.point(p);
        const auto xs = std::span<const double>(x.data(), d);
        g.eta(xs, t, std::span(theta).first(d));
        double xx = 0.0, ux = 0.0, grad2 = 0.0;
        for (int i = 0; i < d; ++i) {
            xx += x[i] * x[i];
            ux += g.u[i] * x[i];
            grad2 += std::norm(grad[i][p]);
        }
        const cd psit = -cd(0.0, 1.0) / hbar * Hpsi[p];
        const cd phi = psi[p] * cd(-0.5 * d * s, m / hbar * (0.5 * g.alpha * xx - ux));
        const double V = potential.value(xs, t);
        const double ell = -hbar * (std::conj(psi[p]) * psit).imag() -
                           hbar * hbar / (2.0 * m) * grad2 - V * std::norm(psi[p]);
        cd inner = phi - psit * theta0;
        for (int i = 0; i < d; ++i) inner -= grad[i][p] * theta[i];
        const cd bracket = cd(0.0, 0.5 * hbar) * std::conj(psi[p]) * inner;
        P[p] = ell * theta0 + 2.0 * bracket.real();
    }
    return P;
}

ChargeSeries psi_side_charges(const std::vector<double>& times,
                              const std::vector<ComplexField>& psis, const LabelGrid& xgrid,
                              const ChargeSelector& sel, const PotentialSpec& potential,
                              const Physics& phys) {
    if (times.size() != psis.size() || psis.empty())
        throw ConfigError("one wavefunction per time is required");
    check_selector(sel, xgrid.dim());
    require_admissible(sel, potential, xgrid, times);
    const auto g = charge_params(sel);
    const auto w = quadrature_weights(xgrid);
    ChargeSeries series;
    series.name = to_string(sel.kind);
    for (std::size_t k = 0; k < psis.size(); ++k) {
        const auto P = psi_noether_density(psis[k], xgrid, times[k], g, potential, phys);
        double Q = 0.0;
        for (std::size_t p = 0; p < P.size(); ++p) Q += w[p] * P[p];
        series.push(times[k], Q);
    }
    const double E = energy_expectation(xgrid, psis.front(), potential, phys, times.front());
    double x2 = 0.0;
    for (std::size_t p = 0; p < xgrid.size(); ++p)
        for (int i = 0; i < xgrid.dim(); ++i)
            x2 += w[p] * std::norm(psis.front()[p]) * xgrid.coord(p, i) * xgrid.coord(p, i);
    series.scale = charge_scale(sel.kind, E, std::sqrt(x2), phys.mass, times.back());
    return series;
}

ChargeSeries superposition_charge(const std::vector<double>& times,
                                  const std::vector<ComplexField>& psi,
                                  const std::vector<ComplexField>& phi, const LabelGrid& xgrid,
                                  const Physics& phys) {
    if (psi.size() != phi.size() || psi.size() != times.size())
        throw ConfigError("superposition series differ in length");
    const auto w = quadrature_weights(xgrid);
    ChargeSeries series;
    series.name = "superposition";
    double mag = 0.0;
    for (std::size_t k = 0; k < psi.size(); ++k) {
        if (psi[k].size() != xgrid.size() || phi[k].size() != xgrid.size())
            throw ConfigError("superposition wavefunctions do not match the grid");
        std::complex<double> z{};
        double na = 0.0, nb = 0.0;
        for (std::size_t p = 0; p < xgrid.size(); ++p) {
            z += w[p] * std::conj(psi[k][p]) * phi[k][p];
            na += w[p] * std::norm(psi[k][p]);
            nb += w[p] * std::norm(phi[k][p]);
        }
        series.push(times[k], -phys.hbar * z.imag());
        if (k == 0) mag = phys.hbar * std::sqrt(na * nb);
    }
    series.scale = mag;
    return series;
}

}  // namespace qhydro

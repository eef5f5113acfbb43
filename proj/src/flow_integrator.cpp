#include "qhydro/flow_integrator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "qhydro/errors.hpp"

namespace qhydro {

NodeMask InitialData::floored_mask() const {
    const double peak = *std::max_element(rho0.begin(), rho0.end());
    NodeMask m(rho0.size(), 0);
    for (std::size_t p = 0; p < rho0.size(); ++p) m[p] = rho0[p] < kDensityFloorRatio * peak;
    return m;
}

NodeMask InitialData::good_fluid_mask() const {
    auto m = floored_mask();
    for (std::size_t p = 0; p < m.size(); ++p) {
        m[p] = !m[p];
        if (frozen.active() && frozen.mask[p]) m[p] = 0;
    }
    return m;
}

void InitialData::set_frozen_mask(const LabelGrid& grid, NodeMask mask) {
    frozen = make_frozen_model(grid, log_rho0, std::move(mask), phys);
}

namespace {

Field exp_field(const Field& L) {
    Field r(L.size());
    for (std::size_t p = 0; p < L.size(); ++p) r[p] = std::exp(L[p]);
    return r;
}

}  // namespace

InitialData initial_data_from_phase(const LabelGrid& grid, Field log_rho0, Field S0,
                                    PotentialSpec potential, Physics phys) {
    InitialData init;
    init.rho0 = exp_field(log_rho0);
    init.log_rho0 = std::move(log_rho0);
    init.v0 = gradient(grid, S0, 4);
    for (auto& c : init.v0)
        for (auto& x : c) x /= phys.mass;
    init.S0 = std::move(S0);
    init.potential = std::move(potential);
    init.phys = phys;
    return init;
}

InitialData initial_data_from_velocity(const LabelGrid& grid, Field log_rho0, VectorField v0,
                                       PotentialSpec potential, Physics phys) {
    if (static_cast<int>(v0.size()) != grid.dim())
        throw ConfigError("initial velocity needs one component per axis");
    InitialData init;
    init.rho0 = exp_field(log_rho0);
    init.log_rho0 = std::move(log_rho0);
    init.v0 = std::move(v0);
    init.potential = std::move(potential);
    init.phys = phys;
    return init;
}

void IntegrationConfig::validate() const {
    if (dt < 0.0) throw ConfigError("time step must be positive");
    if (dt == 0.0 && !(cfl > 0.0 && cfl <= 1.0)) throw ConfigError("CFL factor must lie in (0, 1]");
    if (!(t_end >= 0.0)) throw ConfigError("t_end must be non-negative");
    if (snapshot_every < 0.0) throw ConfigError("snapshot interval must be non-negative");
}

double IntegrationConfig::cfl_step(const LabelGrid& grid, const Physics& phys) const {
    if (dt > 0.0) return dt;
    const double h = grid.min_spacing();
    return cfl * phys.mass * h * h / phys.hbar;
}

Stabilizer::Stabilizer(const LabelGrid& grid, const InitialData& init, double kappa) {
    if (!(kappa > 0.0)) return;
    const int d = grid.dim();
    const auto g = gradient(grid, init.log_rho0, 4);
    const double c = kappa * init.phys.hbar / init.phys.mass;
    gamma_.assign(d, Field(grid.size()));
    for (std::size_t p = 0; p < grid.size(); ++p) {
        double g2 = 0.0;
        for (int j = 0; j < d; ++j) g2 += g[j][p] * g[j][p];
        for (int ax = 0; ax < d; ++ax) gamma_[ax][p] = c * std::sqrt(g2) / grid.spacing(ax);
    }
    // frozen nodes move under frozen forces and need no damping
    if (init.frozen.active()) {
        for (std::size_t p = 0; p < grid.size(); ++p) {
            if (!init.frozen.mask[p]) continue;
            const auto m = grid.multi_index(p);
            for (int ax = 0; ax < d; ++ax) {
                gamma_[ax][p] = 0.0;
                if (m[ax] > 0) gamma_[ax][p - grid.stride(ax)] = 0.0;
                if (m[ax] + 1 < grid.count(ax)) gamma_[ax][p + grid.stride(ax)] = 0.0;
            }
        }
    }
}

namespace {

// Solves (I + A) x = b in place for the symmetric pentadiagonal A = D2^T diag(c) D2 on one
// line; c[k] multiplies the difference centred at k (k = 1..n-2). LDL^T without pivoting
// is safe since I + A is symmetric positive definite.
void solve_damping_line(const std::vector<double>& c, std::vector<double>& x) {
    const int n = static_cast<int>(x.size());
    std::vector<double> d0(n, 1.0), d1(n, 0.0), d2(n, 0.0);
    for (int k = 1; k + 1 < n; ++k) {
        const double w = c[k];
        d0[k - 1] += w;
        d0[k] += 4.0 * w;
        d0[k + 1] += w;
        d1[k - 1] -= 2.0 * w;
        d1[k] -= 2.0 * w;
        d2[k - 1] += w;
    }
    // L has unit diagonal and sub-diagonals l1, l2; D is diagonal.
    std::vector<double> D(n), l1(n, 0.0), l2(n, 0.0);
    for (int i = 0; i < n; ++i) {
        double di = d0[i];
        if (i >= 1) di -= l1[i - 1] * l1[i - 1] * D[i - 1];
        if (i >= 2) di -= l2[i - 2] * l2[i - 2] * D[i - 2];
        D[i] = di;
        if (i + 1 < n) {
            double e = d1[i];
            if (i >= 1) e -= l2[i - 1] * l1[i - 1] * D[i - 1];
            l1[i] = e / di;
        }
        if (i + 2 < n) l2[i] = d2[i] / di;
    }
    for (int i = 1; i < n; ++i) {
        x[i] -= l1[i - 1] * x[i - 1];
        if (i >= 2) x[i] -= l2[i - 2] * x[i - 2];
    }
    for (int i = 0; i < n; ++i) x[i] /= D[i];
    for (int i = n - 2; i >= 0; --i) {
        x[i] -= l1[i] * x[i + 1];
        if (i + 2 < n) x[i] -= l2[i] * x[i + 2];
    }
}

}  // namespace

void Stabilizer::damp(const LabelGrid& grid, double dt, VectorField& qdot) const {
    const int d = grid.dim();
    for (int ax = 0; ax < d; ++ax) {
        const int n = grid.count(ax);
        const std::size_t s = grid.stride(ax);
        const std::size_t block = s * static_cast<std::size_t>(n);
        std::vector<double> c(n), x(n);
        for (std::size_t outer = 0; outer < grid.size(); outer += block)
            for (std::size_t inner = 0; inner < s; ++inner) {
                const std::size_t base = outer + inner;
                for (int k = 0; k < n; ++k) c[k] = dt * gamma_[ax][base + s * static_cast<std::size_t>(k)];
                for (auto& v : qdot) {
                    for (int k = 0; k < n; ++k) x[k] = v[base + s * static_cast<std::size_t>(k)];
                    solve_damping_line(c, x);
                    for (int k = 0; k < n; ++k) v[base + s * static_cast<std::size_t>(k)] = x[k];
                }
            }
    }
}

FlowState initialize(const InitialData& init, const LabelGrid& grid) {
    if (init.rho0.size() != grid.size() || init.log_rho0.size() != grid.size())
        throw ConfigError("initial density does not match the label grid");
    const double norm = integrate(grid, init.rho0);
    if (std::abs(norm - 1.0) > 1e-6) {
        std::ostringstream os;
        os << "initial density integrates to " << norm << ", expected 1 within 1e-6";
        throw ConfigError(os.str());
    }
    FlowState f;
    f.t = 0.0;
    const int d = grid.dim();
    f.q.assign(d, Field(grid.size()));
    if (init.q0) {
        f.q = *init.q0;
    } else {
        for (std::size_t p = 0; p < grid.size(); ++p)
            for (int i = 0; i < d; ++i) f.q[i][p] = grid.coord(p, i);
    }
    f.qdot = init.v0;
    f.phase = init.S0 ? *init.S0 : Field(grid.size(), 0.0);
    return f;
}

namespace {

struct Rates {
    VectorField dq;
    VectorField dv;
    Field dS;
};

Rates rates(const FlowState& s, const InitialData& init, const LabelGrid& grid, ForceForm form) {
    const int d = grid.dim();
    const std::size_t n = grid.size();
    auto a = acceleration(s, init.log_rho0, init.potential, grid, init.phys, form, &init.frozen);
    Rates r;
    r.dq = s.qdot;
    r.dv = std::move(a.acc);
    r.dS.assign(n, 0.0);
    std::array<double, kMaxDim> q{};
    for (std::size_t p = 0; p < n; ++p) {
        double v2 = 0.0;
        for (int i = 0; i < d; ++i) {
            v2 += s.qdot[i][p] * s.qdot[i][p];
            q[i] = s.q[i][p];
        }
        r.dS[p] = 0.5 * init.phys.mass * v2 - init.potential.value(std::span(q).first(d), s.t) -
                  a.VQ[p];
    }
    return r;
}

FlowState axpy(const FlowState& s, double h, const Rates& r) {
    FlowState o = s;
    o.t = s.t + h;
    for (std::size_t i = 0; i < o.q.size(); ++i)
        for (std::size_t p = 0; p < o.q[i].size(); ++p) {
            o.q[i][p] += h * r.dq[i][p];
            o.qdot[i][p] += h * r.dv[i][p];
        }
    for (std::size_t p = 0; p < o.phase.size(); ++p) o.phase[p] += h * r.dS[p];
    return o;
}

}  // namespace

FlowState step(const FlowState& s, const InitialData& init, const LabelGrid& grid, double dt,
               ForceForm form, const Stabilizer* stab) {
    const auto k1 = rates(s, init, grid, form);
    const auto k2 = rates(axpy(s, 0.5 * dt, k1), init, grid, form);
    const auto k3 = rates(axpy(s, 0.5 * dt, k2), init, grid, form);
    const auto k4 = rates(axpy(s, dt, k3), init, grid, form);
    FlowState o = s;
    o.t = s.t + dt;
    const double w = dt / 6.0;
    for (std::size_t i = 0; i < o.q.size(); ++i)
        for (std::size_t p = 0; p < o.q[i].size(); ++p) {
            o.q[i][p] += w * (k1.dq[i][p] + 2.0 * k2.dq[i][p] + 2.0 * k3.dq[i][p] + k4.dq[i][p]);
            o.qdot[i][p] += w * (k1.dv[i][p] + 2.0 * k2.dv[i][p] + 2.0 * k3.dv[i][p] + k4.dv[i][p]);
        }
    for (std::size_t p = 0; p < o.phase.size(); ++p)
        o.phase[p] += w * (k1.dS[p] + 2.0 * k2.dS[p] + 2.0 * k3.dS[p] + k4.dS[p]);
    if (stab && stab->active()) stab->damp(grid, dt, o.qdot);

    for (const auto* comp : {&o.q, &o.qdot})
        for (const auto& c : *comp) {
            std::size_t bad = 0;
            if (!all_finite(c, &bad)) throw NumericError("non-finite trajectory state", bad);
        }
    return o;
}

FlowState advance(FlowState flow, const InitialData& init, const LabelGrid& grid, double duration,
                  double dt, ForceForm form, const Stabilizer* stab) {
    const auto steps = static_cast<std::size_t>(std::ceil(duration / dt - 1e-9));
    const double h = steps ? duration / static_cast<double>(steps) : 0.0;
    for (std::size_t k = 0; k < steps; ++k) flow = step(flow, init, grid, h, form, stab);
    return flow;
}

VectorField velocity_covector(const FlowState& flow, const DeformationTensors& t,
                              const Physics& phys) {
    const int d = t.dim;
    const std::size_t n = t.J.size();
    VectorField w(d, Field(n, 0.0));
    for (int k = 0; k < d; ++k)
        for (int i = 0; i < d; ++i) {
            const auto& F = t.F[i * d + k];
            for (std::size_t p = 0; p < n; ++p) w[k][p] += phys.mass * flow.qdot[i][p] * F[p];
        }
    return w;
}

double weber_identity_residual(const FlowState& flow, const InitialData& init,
                               const LabelGrid& grid) {
    const auto excluded = init.frozen.excluded();
    const auto t = deformation(flow, grid, excluded);
    const auto w = velocity_covector(flow, t, init.phys);
    const auto dS = gradient(grid, flow.phase, 4);
    const auto good = init.good_fluid_mask();
    double worst = 0.0;
    for (int k = 0; k < grid.dim(); ++k)
        for (std::size_t p = 0; p < grid.size(); ++p) {
            if (!good[p]) continue;
            double lhs = dS[k][p];
            if (init.multivalued_phase()) lhs += init.phys.mass * init.v0[k][p];
            worst = std::max(worst, std::abs(lhs - w[k][p]));
        }
    return worst;
}

RunResult run(const InitialData& init, const LabelGrid& grid, const IntegrationConfig& config) {
    config.validate();
    RunResult result;
    auto& diag = result.diagnostics;
    FlowState flow = initialize(init, grid);
    const auto excluded = init.frozen.excluded();

    const double interval = config.snapshot_every > 0.0 ? std::min(config.snapshot_every, config.t_end)
                                                        : config.t_end;
    const double dt_max = config.cfl_step(grid, init.phys);
    std::size_t per_interval = 0;
    double dt = dt_max;
    if (interval > 0.0) {
        per_interval = static_cast<std::size_t>(std::ceil(interval / dt_max - 1e-9));
        dt = interval / static_cast<double>(per_interval);
    }
    diag.dt = dt;
    const Stabilizer stab = config.stabilization > 0.0 ? Stabilizer(grid, init, config.stabilization)
                                                       : Stabilizer();
    diag.boundary_leakage = boundary_leakage(grid, init.rho0);
    const auto floored = init.floored_mask();
    diag.floored_nodes = static_cast<std::size_t>(std::count(floored.begin(), floored.end(), 1));

    auto record = [&](const FlowState& s) {
        const auto t = deformation(s, grid, excluded);
        const double mj = t.min_jacobian(excluded);
        diag.min_jacobian = result.snapshots.empty() ? mj : std::min(diag.min_jacobian, mj);
        const double wr = weber_identity_residual(s, init, grid);
        diag.weber_residual_per_snapshot.push_back(wr);
        diag.weber_residual = std::max(diag.weber_residual, wr);
        result.snapshots.push_back(s);
    };
    record(flow);
    if (config.t_end <= 0.0) return result;

    double next_snapshot = interval;
    std::size_t k = 0;
    while (flow.t < config.t_end - 1e-12 * std::max(1.0, config.t_end)) {
        const std::size_t n_steps = per_interval;
        double h = dt;
        // final partial interval when t_end is not a multiple of the snapshot interval
        const double remaining = config.t_end - flow.t;
        std::size_t steps_here = n_steps;
        if (remaining < interval - 1e-12) {
            steps_here = static_cast<std::size_t>(std::ceil(remaining / dt_max - 1e-9));
            h = remaining / static_cast<double>(steps_here);
        }
        const double t0 = flow.t;
        for (std::size_t s = 0; s < steps_here; ++s) {
            flow = step(flow, init, grid, h, config.form, &stab);
            ++diag.steps;
        }
        ++k;
        flow.t = std::min(t0 + h * static_cast<double>(steps_here),
                          std::min(config.t_end, next_snapshot));
        if (std::abs(flow.t - config.t_end) < 1e-9 * std::max(1.0, config.t_end)) flow.t = config.t_end;
        next_snapshot = interval * static_cast<double>(k + 1);
        record(flow);
    }
    return result;
}

}  // namespace qhydro

#include "qhydro/forces.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "qhydro/errors.hpp"

namespace qhydro {

PotentialSpec PotentialSpec::free() { return PotentialSpec{}; }

PotentialSpec PotentialSpec::harmonic(double mass, double omega, std::vector<double> center) {
    if (!(omega > 0.0)) throw ConfigError("harmonic potential needs omega > 0");
    PotentialSpec p;
    p.kind_ = PotentialKind::Harmonic;
    p.omega_ = omega;
    p.stiffness_ = mass * omega * omega;
    p.center_ = std::move(center);
    return p;
}

PotentialSpec PotentialSpec::polynomial(std::vector<std::vector<double>> coeffs) {
    PotentialSpec p;
    p.kind_ = PotentialKind::Polynomial;
    p.coeffs_ = std::move(coeffs);
    return p;
}

PotentialSpec PotentialSpec::inverse_square(double g) {
    PotentialSpec p;
    p.kind_ = PotentialKind::InverseSquare;
    p.g_ = g;
    return p;
}

std::string PotentialSpec::describe() const {
    std::ostringstream os;
    switch (kind_) {
        case PotentialKind::Free: os << "free"; break;
        case PotentialKind::Harmonic: os << "harmonic(omega=" << omega_ << ")"; break;
        case PotentialKind::Polynomial: os << "polynomial"; break;
        case PotentialKind::InverseSquare: os << "inverse-square(g=" << g_ << ")"; break;
    }
    if (!is_static()) os << " x time-factor";
    return os.str();
}

bool PotentialSpec::is_static() const {
    for (std::size_t k = 1; k < time_factor_.size(); ++k)
        if (time_factor_[k] != 0.0) return false;
    return true;
}

double PotentialSpec::tau(double t) const {
    double v = 0.0;
    for (auto it = time_factor_.rbegin(); it != time_factor_.rend(); ++it) v = v * t + *it;
    return v;
}

double PotentialSpec::dtau(double t) const {
    double v = 0.0;
    for (std::size_t k = time_factor_.size(); k-- > 1;) v = v * t + k * time_factor_[k];
    return v;
}

double PotentialSpec::spatial(std::span<const double> q) const {
    switch (kind_) {
        case PotentialKind::Free: return 0.0;
        case PotentialKind::Harmonic: {
            double r2 = 0.0;
            for (std::size_t i = 0; i < q.size(); ++i) {
                const double d = q[i] - (i < center_.size() ? center_[i] : 0.0);
                r2 += d * d;
            }
            return 0.5 * stiffness_ * r2;
        }
        case PotentialKind::Polynomial: {
            double v = 0.0;
            for (std::size_t i = 0; i < q.size() && i < coeffs_.size(); ++i) {
                double acc = 0.0;
                for (auto it = coeffs_[i].rbegin(); it != coeffs_[i].rend(); ++it)
                    acc = acc * q[i] + *it;
                v += acc;
            }
            return v;
        }
        case PotentialKind::InverseSquare: {
            double r2 = 0.0;
            for (double x : q) r2 += x * x;
            return g_ / r2;
        }
    }
    return 0.0;
}

void PotentialSpec::spatial_gradient(std::span<const double> q, std::span<double> out) const {
    for (std::size_t i = 0; i < q.size(); ++i) out[i] = 0.0;
    switch (kind_) {
        case PotentialKind::Free: return;
        case PotentialKind::Harmonic:
            for (std::size_t i = 0; i < q.size(); ++i)
                out[i] = stiffness_ * (q[i] - (i < center_.size() ? center_[i] : 0.0));
            return;
        case PotentialKind::Polynomial:
            for (std::size_t i = 0; i < q.size() && i < coeffs_.size(); ++i) {
                double acc = 0.0;
                for (std::size_t k = coeffs_[i].size(); k-- > 1;) acc = acc * q[i] + k * coeffs_[i][k];
                out[i] = acc;
            }
            return;
        case PotentialKind::InverseSquare: {
            double r2 = 0.0;
            for (double x : q) r2 += x * x;
            for (std::size_t i = 0; i < q.size(); ++i) out[i] = -2.0 * g_ * q[i] / (r2 * r2);
            return;
        }
    }
}

double PotentialSpec::value(std::span<const double> q, double t) const {
    return tau(t) * spatial(q);
}

void PotentialSpec::gradient(std::span<const double> q, double t, std::span<double> out) const {
    spatial_gradient(q, out);
    const double f = tau(t);
    for (std::size_t i = 0; i < q.size(); ++i) out[i] *= f;
}

double PotentialSpec::time_derivative(std::span<const double> q, double t) const {
    return dtau(t) * spatial(q);
}

Field log_density(const Field& log_rho0, const DeformationTensors& t) {
    Field L(log_rho0.size());
    for (std::size_t p = 0; p < L.size(); ++p)
        L[p] = log_rho0[p] - std::log(std::max(t.J[p], 1e-300));
    return L;
}

LogDensityDerivatives log_density_derivatives(const LabelGrid& grid, const Field& log_rho,
                                              const DeformationTensors& tensors) {
    const int d = grid.dim();
    LogDensityDerivatives out;
    out.grad = grad_q(grid, log_rho, tensors);
    out.hessian.assign(static_cast<std::size_t>(d * d), Field(log_rho.size(), 0.0));
    for (int j = 0; j < d; ++j) {
        const auto gj = grad_q(grid, out.grad[j], tensors);
        for (int i = 0; i < d; ++i) {
            auto& hij = out.hessian[i * d + j];
            for (std::size_t p = 0; p < hij.size(); ++p) hij[p] += 0.5 * gj[i][p];
            auto& hji = out.hessian[j * d + i];
            for (std::size_t p = 0; p < hji.size(); ++p) hji[p] += 0.5 * gj[i][p];
        }
    }
    return out;
}

QuantumFields quantum_fields_from_log(const LabelGrid& grid, const Field& log_rho,
                                      const DeformationTensors& tensors, const Physics& phys) {
    const int d = grid.dim();
    const std::size_t n = log_rho.size();
    const auto D = log_density_derivatives(grid, log_rho, tensors);
    const double c8 = phys.hbar * phys.hbar / (8.0 * phys.mass);
    const double c4 = phys.hbar * phys.hbar / (4.0 * phys.mass);
    QuantumFields qf;
    qf.U.assign(n, 0.0);
    qf.VQ.assign(n, 0.0);
    qf.sigma.assign(static_cast<std::size_t>(d * d), Field(n, 0.0));
    for (std::size_t p = 0; p < n; ++p) {
        double g2 = 0.0, lap = 0.0;
        for (int i = 0; i < d; ++i) {
            g2 += D.grad[i][p] * D.grad[i][p];
            lap += D.hessian[i * d + i][p];
        }
        qf.U[p] = c8 * g2;
        qf.VQ[p] = -c4 * (lap + 0.5 * g2);
        const double rho = std::exp(log_rho[p]);
        for (int k = 0; k < d * d; ++k) qf.sigma[k][p] = -c4 * rho * D.hessian[k][p];
    }
    return qf;
}

namespace {

Field floored_log(const Field& rho, std::size_t* floored) {
    const double peak = *std::max_element(rho.begin(), rho.end());
    const double floor = kDensityFloorRatio * peak;
    Field L(rho.size());
    std::size_t count = 0;
    for (std::size_t p = 0; p < rho.size(); ++p) {
        if (rho[p] < floor) ++count;
        L[p] = std::log(std::max(rho[p], floor));
    }
    if (floored) *floored = count;
    return L;
}

}  // namespace

Field internal_potential_U(const Field& rho, const DeformationTensors& tensors,
                           const LabelGrid& grid, const Physics& phys, std::size_t* floored) {
    return quantum_fields_from_log(grid, floored_log(rho, floored), tensors, phys).U;
}

Field quantum_potential(const Field& rho, const DeformationTensors& tensors,
                        const LabelGrid& grid, const Physics& phys, std::size_t* floored) {
    return quantum_fields_from_log(grid, floored_log(rho, floored), tensors, phys).VQ;
}

std::vector<Field> stress_tensor(const Field& rho, const DeformationTensors& tensors,
                                 const LabelGrid& grid, const Physics& phys,
                                 std::size_t* floored) {
    const auto L = floored_log(rho, floored);
    auto qf = quantum_fields_from_log(grid, L, tensors, phys);
    // the log route already multiplied by exp(L) = floored rho; restore the true rho factor
    for (auto& s : qf.sigma)
        for (std::size_t p = 0; p < s.size(); ++p) s[p] *= rho[p] / std::exp(L[p]);
    return qf.sigma;
}

double quantum_energy(const FlowState& flow, const Field& log_rho0, const LabelGrid& grid,
                      const Physics& phys) {
    const auto T = deformation(flow, grid);
    const auto L = log_density(log_rho0, T);
    const auto g = grad_q(grid, L, T);
    const auto w = quadrature_weights(grid);
    const double c8 = phys.hbar * phys.hbar / (8.0 * phys.mass);
    double e = 0.0;
    for (std::size_t p = 0; p < L.size(); ++p) {
        double g2 = 0.0;
        for (const auto& gi : g) g2 += gi[p] * gi[p];
        e += w[p] * std::exp(log_rho0[p]) * c8 * g2;
    }
    return e;
}

FrozenModel make_frozen_model(const LabelGrid& grid, const Field& log_rho0, NodeMask mask,
                          const Physics& phys) {
    FrozenModel frozen;
    if (std::find(mask.begin(), mask.end(), 1) == mask.end()) return frozen;
    FlowState identity;
    identity.q.assign(grid.dim(), Field(grid.size()));
    for (std::size_t p = 0; p < grid.size(); ++p)
        for (int i = 0; i < grid.dim(); ++i) identity.q[i][p] = grid.coord(p, i);
    const auto T = deformation(identity, grid);
    frozen.VQ = quantum_fields_from_log(grid, log_rho0, T, phys).VQ;
    frozen.hessian = log_density_derivatives(grid, log_rho0, T).hessian;
    frozen.log_rho = log_rho0;
    frozen.mask = std::move(mask);
    return frozen;
}

Acceleration acceleration(const FlowState& flow, const Field& log_rho0,
                          const PotentialSpec& potential, const LabelGrid& grid,
                          const Physics& phys, ForceForm form, const FrozenModel* frozen) {
    const int d = grid.dim();
    const std::size_t n = grid.size();
    const bool has_frozen = frozen && frozen->active();
    Acceleration out;
    out.tensors = deformation(flow, grid, has_frozen ? frozen->excluded() : nullptr);
    const auto& T = out.tensors;
    Field L = log_density(log_rho0, T);
    std::array<double, kMaxDim> q{}, g{};
    const double c4 = phys.hbar * phys.hbar / (4.0 * phys.mass);
    const double inv_m = 1.0 / phys.mass;

    // Masked nodes take every quantity that neighbouring stencils read (ln rho, its
    // q-gradient, V_Q, and the stress) from the frozen model at their current position.
    std::vector<std::size_t> masked;
    if (has_frozen)
        for (std::size_t p = 0; p < n; ++p)
            if (frozen->mask[p]) masked.push_back(p);
    auto load_q = [&](std::size_t p) {
        for (int i = 0; i < d; ++i) q[i] = flow.q[i][p];
        return std::span<const double>(q.data(), d);
    };
    for (auto p : masked) L[p] = interpolate(grid, frozen->log_rho, load_q(p));

    LogDensityDerivatives D;
    D.grad = grad_q(grid, L, T);
    for (auto p : masked) {
        interpolate_with_gradient(grid, frozen->log_rho, load_q(p), std::span(g).first(d));
        for (int i = 0; i < d; ++i) D.grad[i][p] = g[i];
    }
    D.hessian.assign(static_cast<std::size_t>(d * d), Field(n, 0.0));
    for (int j = 0; j < d; ++j) {
        const auto gj = grad_q(grid, D.grad[j], T);
        for (int i = 0; i < d; ++i)
            for (std::size_t p = 0; p < n; ++p) {
                D.hessian[i * d + j][p] += 0.5 * gj[i][p];
                D.hessian[j * d + i][p] += 0.5 * gj[i][p];
            }
    }
    for (auto p : masked)
        for (int k = 0; k < d * d; ++k)
            D.hessian[k][p] = interpolate(grid, frozen->hessian[k], load_q(p));

    out.VQ.assign(n, 0.0);
    for (std::size_t p = 0; p < n; ++p) {
        double g2 = 0.0, lap = 0.0;
        for (int i = 0; i < d; ++i) {
            g2 += D.grad[i][p] * D.grad[i][p];
            lap += D.hessian[i * d + i][p];
        }
        out.VQ[p] = -c4 * (lap + 0.5 * g2);
    }
    for (auto p : masked) out.VQ[p] = interpolate(grid, frozen->VQ, load_q(p));

    out.acc.assign(d, Field(n, 0.0));
    if (form == ForceForm::Weber) {
        const auto gv = grad_q(grid, out.VQ, T);
        for (int i = 0; i < d; ++i)
            for (std::size_t p = 0; p < n; ++p) out.acc[i][p] = -inv_m * gv[i][p];
    } else {
        // sigma_ik / rho0 = -(hbar^2/4m) H_ik rho / rho0
        const auto glr0 = gradient(grid, log_rho0, 4);
        Field rho_ratio(n);
        for (std::size_t p = 0; p < n; ++p) rho_ratio[p] = std::exp(L[p] - log_rho0[p]);
        for (int i = 0; i < d; ++i) {
            for (int k = 0; k < d; ++k) {
                Field s(n);
                for (std::size_t p = 0; p < n; ++p)
                    s[p] = -c4 * D.hessian[i * d + k][p] * rho_ratio[p];
                for (int j = 0; j < d; ++j) {
                    const auto ds = derivative(grid, s, 1, j, 4);
                    const auto& C = T.cof[k * d + j];
                    for (std::size_t p = 0; p < n; ++p)
                        out.acc[i][p] -= inv_m * C[p] * (ds[p] + s[p] * glr0[j][p]);
                }
            }
        }
    }

    for (auto p : masked) {
        interpolate_with_gradient(grid, frozen->VQ, load_q(p), std::span(g).first(d));
        for (int i = 0; i < d; ++i) out.acc[i][p] = -inv_m * g[i];
    }
    for (std::size_t p = 0; p < n; ++p) {
        for (int i = 0; i < d; ++i) q[i] = flow.q[i][p];
        potential.gradient(std::span(q).first(d), flow.t, std::span(g).first(d));
        for (int i = 0; i < d; ++i) out.acc[i][p] -= inv_m * g[i];
    }
    return out;
}

}  // namespace qhydro

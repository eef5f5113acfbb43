#pragma once

#include <span>
#include <string>
#include <vector>

#include "qhydro/kinematics.hpp"
#include "qhydro/lattice.hpp"

namespace qhydro {

/// hbar and particle mass; natural units by default.
struct Physics {
    double hbar = 1.0;
    double mass = 1.0;
};

/// Relative density floor used wherever rho appears in a denominator.
inline constexpr double kDensityFloorRatio = 1e-8;

enum class PotentialKind { Free, Harmonic, Polynomial, InverseSquare };

/// External potential V(q,t) = tau(t) * V_s(q), tau a polynomial in t (default 1).
///
///  - Harmonic:      V_s = 1/2 k |q - c|^2 with k = m w^2
///  - Polynomial:    V_s = sum over axes and powers of coeffs[axis][p] * q_axis^p
///  - InverseSquare: V_s = g / |q|^2
class PotentialSpec {
public:
    static PotentialSpec free();
    static PotentialSpec harmonic(double mass, double omega, std::vector<double> center = {});
    static PotentialSpec polynomial(std::vector<std::vector<double>> coeffs);
    static PotentialSpec inverse_square(double g);

    PotentialKind kind() const { return kind_; }
    double omega() const { return omega_; }
    double stiffness() const { return stiffness_; }
    std::string describe() const;

    void set_time_factor(std::vector<double> coeffs) { time_factor_ = std::move(coeffs); }
    const std::vector<double>& time_factor() const { return time_factor_; }
    bool is_static() const;

    double value(std::span<const double> q, double t) const;
    void gradient(std::span<const double> q, double t, std::span<double> out) const;
    double time_derivative(std::span<const double> q, double t) const;

private:
    double spatial(std::span<const double> q) const;
    void spatial_gradient(std::span<const double> q, std::span<double> out) const;
    double tau(double t) const;
    double dtau(double t) const;

    PotentialKind kind_ = PotentialKind::Free;
    double omega_ = 0.0;
    double stiffness_ = 0.0;
    std::vector<double> center_;
    std::vector<std::vector<double>> coeffs_;
    double g_ = 0.0;
    std::vector<double> time_factor_{1.0};
};

/// Per-node quantum internal energy U, quantum potential V_Q and stress tensor sigma_ij.
struct QuantumFields {
    Field U;
    Field VQ;
    std::vector<Field> sigma;  // sigma[i*dim + j]
    std::size_t floored_nodes = 0;
};

/// Position-space derivatives of L = ln rho: gradient g_i and symmetrised Hessian H_ij.
struct LogDensityDerivatives {
    VectorField grad;
    std::vector<Field> hessian;  // hessian[i*dim + j]
};

LogDensityDerivatives log_density_derivatives(const LabelGrid& grid, const Field& log_rho,
                                              const DeformationTensors& tensors);

/// ln(rho0) - ln(J) node-wise.
Field log_density(const Field& log_rho0, const DeformationTensors& tensors);

/// All three fields from a log-density, which keeps Gaussian tails exact.
QuantumFields quantum_fields_from_log(const LabelGrid& grid, const Field& log_rho,
                                      const DeformationTensors& tensors, const Physics& phys);

/// U = (hbar^2 / 8m) rho^-2 (drho/dq)^2. Densities below the floor are clamped and counted.
Field internal_potential_U(const Field& rho, const DeformationTensors& tensors,
                           const LabelGrid& grid, const Physics& phys,
                           std::size_t* floored = nullptr);
/// V_Q = (hbar^2 / 4 m rho) [ (1/2rho) (drho/dq)^2 - d^2rho/dq^2 ].
Field quantum_potential(const Field& rho, const DeformationTensors& tensors,
                        const LabelGrid& grid, const Physics& phys,
                        std::size_t* floored = nullptr);
/// sigma_ij = (hbar^2/4m) [ rho^-1 drho/dq_i drho/dq_j - d^2rho/dq_i dq_j ].
std::vector<Field> stress_tensor(const Field& rho, const DeformationTensors& tensors,
                                 const LabelGrid& grid, const Physics& phys,
                                 std::size_t* floored = nullptr);

enum class ForceForm {
    Stress,  // m rho0 q'' = -rho0 dV/dq - C_kj d sigma_ik / da_j
    Weber,   // m q''_i dq_i/da_k = -d(V + V_Q)/da_k
};

/// Discrete quantum energy sum_p w_p rho0_p U_p with trapezoid weights w_p.
double quantum_energy(const FlowState& flow, const Field& log_rho0, const LabelGrid& grid,
                      const Physics& phys);

/// Frozen Eulerian description for masked nodes: vortex cores the label grid cannot resolve
/// once differential rotation winds it up, and far tails where |grad ln rho0| is too large
/// for the explicit scheme. A masked node takes ln rho, its derivatives and V_Q from the t=0
/// fields at its current position, which is exact for a stationary state. Masked nodes are
/// exempt from the mesh-tangling check.
struct FrozenModel {
    NodeMask mask;
    Field log_rho;  // t=0 Eulerian ln rho sampled on the label grid (identity map)
    Field VQ;       // t=0 Eulerian quantum potential on the same nodes
    std::vector<Field> hessian;  // t=0 q-Hessian of ln rho, [i*dim + j]

    bool active() const { return !mask.empty(); }
    const NodeMask* excluded() const { return active() ? &mask : nullptr; }
};

/// Builds the frozen model from ln rho0 with the identity labelling. An empty mask
/// yields an inactive model.
FrozenModel make_frozen_model(const LabelGrid& grid, const Field& log_rho0, NodeMask mask,
                          const Physics& phys);

struct Acceleration {
    VectorField acc;
    Field VQ;
    DeformationTensors tensors;
};

/// Right-hand side of the trajectory law of motion. Nodes masked by `frozen` follow the
/// frozen model.
Acceleration acceleration(const FlowState& flow, const Field& log_rho0,
                          const PotentialSpec& potential, const LabelGrid& grid,
                          const Physics& phys, ForceForm form,
                          const FrozenModel* frozen = nullptr);

}  // namespace qhydro

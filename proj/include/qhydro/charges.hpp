#pragma once

#include <array>
#include <string>
#include <vector>

#include "qhydro/flow_integrator.hpp"
#include "qhydro/symmetry_group.hpp"

namespace qhydro {

/// A named conserved quantity sampled over time.
///
/// drift = (max - min) / max(|mean|, scale). `scale` guards charges that vanish by symmetry
/// (the momentum of a symmetric packet is exactly 0).
struct ChargeSeries {
    std::string name;
    std::vector<double> times;
    std::vector<double> values;
    double scale = 0.0;

    /// Throws NumericError on a non-finite value and ConfigError on a non-increasing time.
    void push(double t, double value);
    double mean() const;
    double drift() const;
    /// value - values.front(), the drift column of the CSV output
    double excursion(std::size_t k) const;
};

/// Noether density of a flow for the transformation functions (xi0, xi_i, eta_i, Lambda0)
/// built from `params` plus an optional relabel field `xi`:
///   P = l xi0 + m rho0 qdot_i (eta_i - qdot_i xi0 - F_il xi_l) - Lambda0
/// with l = m rho0 |qdot|^2 / 2 - rho0 U - rho0 V.
Field noether_density(const FlowState& flow, const InitialData& init, const LabelGrid& grid,
                      const GroupParams& params, const VectorField* xi = nullptr);

/// The per-node energy density H = m rho0 |qdot|^2 / 2 + rho0 U + rho0 V.
Field energy_density(const FlowState& flow, const InitialData& init, const LabelGrid& grid);

enum class ChargeKind { Energy, Momentum, Angular, Galilean, Dilation, Extension };

ChargeKind parse_charge_kind(const std::string& name);
std::string to_string(ChargeKind kind);

/// Which component a vector charge refers to: axis for momentum and boost, the plane
/// (axis, axis2) for rotation.
struct ChargeSelector {
    ChargeKind kind = ChargeKind::Energy;
    int axis = 0;
    int axis2 = 1;
};

/// Group parameters whose Noether density is the charge as reported: energy uses d = -1 so
/// that it is +H; the other cases use a unit parameter.
GroupParams charge_params(const ChargeSelector& sel);

/// Throws InadmissibleError naming the violated constraint when `potential` is not
/// invariant under the generator of `sel`. Samples the grid and the given times.
void require_admissible(const ChargeSelector& sel, const PotentialSpec& potential,
                        const LabelGrid& grid, const std::vector<double>& times);

/// Integrated Noether charge over label space for every snapshot. The series scale is the
/// energy-derived scale of the charge's units (see `charge_scale`).
ChargeSeries schrodinger_charges(const std::vector<FlowState>& snapshots, const InitialData& init,
                                 const LabelGrid& grid, const ChargeSelector& sel);

/// Natural magnitude used to normalise drifts: E for energy, sqrt(2 m E) for momentum,
/// sqrt(2 m E) * L for angular and Galilean, and their t-weighted versions for dilation
/// and extension, where E = initial energy and L = sqrt(<|q|^2>) at t=0; t_max is the final
/// snapshot time.
double charge_scale(ChargeKind kind, double energy, double length, double mass, double t_max);

struct RelabelChargeResult {
    ChargeSeries series;
    /// rho0-weighted L2 norm of the relabel current at the final snapshot
    double current_norm = 0.0;
};

/// P = -m rho0 qdot_i F_ij xi_j integrated over good fluid for every snapshot. The scale is
/// the largest integral of m rho0 |qdot| |F xi| over the snapshots, a bound on |charge|.
/// Throws InadmissibleError when the relabel constraint residual exceeds 1e-8.
RelabelChargeResult relabel_charge(const std::vector<FlowState>& snapshots, const InitialData& init,
                                   const LabelGrid& grid, const VectorField& xi);

/// Relabel current J_i = rho0 xi_i (m |qdot|^2 / 2 - V - V_Q) per node.
VectorField relabel_current(const FlowState& flow, const InitialData& init, const LabelGrid& grid,
                            const VectorField& xi);

/// Closed label-space polyline; the last point connects back to the first.
using Loop = std::vector<std::array<double, 3>>;

/// Circle of radius R around `centre` with n points.
Loop circle_loop(std::span<const double> centre, double radius, int n);

/// Gamma = closed integral of qdot_i (dq_i/da_j) da_j along the loop by the trapezoid rule on
/// cubic-interpolated integrands. Throws ConfigError when any loop point lies outside good
/// fluid (below the density floor, or on a frozen node).
double circulation(const FlowState& flow, const InitialData& init, const LabelGrid& grid,
                   const Loop& loop);

struct EulerianCharge {
    LabelGrid xgrid;
    Field P;
    VectorField J;
    NodeMask mask;
};

/// P_bar = P / J and J_bar_i = P qdot_i / J + F_ij J_j, both at a(x,t). An empty `current`
/// is treated as zero.
EulerianCharge to_eulerian_charge(const Field& P, const VectorField& current, const FlowState& flow,
                                  const DeformationTensors& tensors, const LabelGrid& grid,
                                  const LabelGrid& xgrid);

/// L2 norm of dP_bar/dt + div J_bar at the middle of three equally spaced Eulerian charges.
double eulerian_charge_continuity(const EulerianCharge& before, const EulerianCharge& now,
                                  const EulerianCharge& after, double dt);

/// Wavefunction-side Noether density for the Schroedinger field with the transformation
/// functions theta0, theta_i, phi that correspond to `params`:
///   P = l theta0 + [ (i hbar / 2) psi* (phi - psi_t theta0 - psi_,i theta_i) + cc ]
/// The time derivative comes from the Schroedinger equation with the oracle Hamiltonian.
Field psi_noether_density(const ComplexField& psi, const LabelGrid& xgrid, double t,
                          const GroupParams& params, const PotentialSpec& potential,
                          const Physics& phys);

/// Integrated wavefunction-side charge over snapshots, scaled as `schrodinger_charges`.
ChargeSeries psi_side_charges(const std::vector<double>& times,
                              const std::vector<ComplexField>& psis, const LabelGrid& xgrid,
                              const ChargeSelector& sel, const PotentialSpec& potential,
                              const Physics& phys);

/// Series of (i hbar / 2) integral (psi* phi - phi* psi). Throws ConfigError when the two
/// series differ in length or times.
ChargeSeries superposition_charge(const std::vector<double>& times,
                                  const std::vector<ComplexField>& psi,
                                  const std::vector<ComplexField>& phi, const LabelGrid& xgrid,
                                  const Physics& phys);

}  // namespace qhydro

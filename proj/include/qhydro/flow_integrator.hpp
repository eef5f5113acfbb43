#pragma once

#include <optional>
#include <vector>

#include "qhydro/forces.hpp"
#include "qhydro/kinematics.hpp"
#include "qhydro/lattice.hpp"

namespace qhydro {

/// Initial density, phase or velocity, external potential and physical constants.
///
/// The density is carried as ln(rho0) so that far tails stay representable; rho0 is
/// kept alongside for quadratures. A state with a multivalued phase (vortex) supplies
/// v0 instead of S0.
struct InitialData {
    Field log_rho0;
    Field rho0;
    std::optional<Field> S0;
    VectorField v0;
    /// Initial positions when labels are not the initial positions.
    std::optional<VectorField> q0;
    PotentialSpec potential;
    Physics phys;
    /// Frozen nodes (vortex core, far tails); excluded from tangling checks and good-fluid quadratures.
    FrozenModel frozen;

    bool multivalued_phase() const { return !S0.has_value(); }
    /// Nodes with rho0 below the density floor.
    NodeMask floored_mask() const;
    /// Nodes counted as "good fluid": above the floor and outside the frozen mask.
    NodeMask good_fluid_mask() const;
    /// Installs a frozen model for the given mask (identity labelling assumed).
    void set_frozen_mask(const LabelGrid& grid, NodeMask mask);
};

/// Builds initial data from ln(rho0) and a single-valued phase; v0 = (1/m) dS0/da.
InitialData initial_data_from_phase(const LabelGrid& grid, Field log_rho0, Field S0,
                                    PotentialSpec potential, Physics phys);
/// Builds initial data from ln(rho0) and an initial velocity field (multivalued phase).
InitialData initial_data_from_velocity(const LabelGrid& grid, Field log_rho0, VectorField v0,
                                       PotentialSpec potential, Physics phys);

struct IntegrationConfig {
    /// Explicit step; 0 selects the CFL rule dt = cfl * m * da_min^2 / hbar.
    double dt = 0.0;
    double cfl = 0.2;
    double t_end = 0.0;
    /// Snapshot interval; 0 records only t=0 and t_end.
    double snapshot_every = 0.0;
    ForceForm form = ForceForm::Weber;
    /// Strength kappa of the grid-scale velocity damping; 0 disables it.
    double stabilization = 1.0;

    /// Throws ConfigError on dt < 0, cfl outside (0,1], t_end < 0.
    void validate() const;
    double cfl_step(const LabelGrid& grid, const Physics& phys) const;
};

/// Damping of grid-scale velocity modes. After every step the velocity is replaced by the
/// backward-Euler solution of
///   d(dq_i/dt)/dt = -sum_axes D2^T diag(gamma) D2 (dq_i/dt),  gamma = kappa (hbar/m) |grad ln rho0| / da,
/// one axis at a time, with D2 the undivided three-point second difference.
///
/// Nodal central differencing of the quantum force is not self-adjoint in the rho0-weighted
/// inner product; where |grad ln rho0| is large it admits standing grid-scale modes that grow
/// at roughly (hbar/2m)|grad ln rho0| k. The damping operator is symmetric positive
/// semidefinite and vanishes on velocity fields linear in the labels, so linear-map flows
/// are untouched, and the implicit solve is stable for any step.
class Stabilizer {
public:
    Stabilizer() = default;
    Stabilizer(const LabelGrid& grid, const InitialData& init, double kappa);

    bool active() const { return !gamma_.empty(); }
    void damp(const LabelGrid& grid, double dt, VectorField& qdot) const;

private:
    VectorField gamma_;  // per axis, indexed by the centre node of the difference
};

/// Flow at t=0: q = a (or the supplied q0), velocity from S0 or v0, S = S0 (or 0).
/// Throws ConfigError when rho0 is not normalised to within 1e-6.
FlowState initialize(const InitialData& init, const LabelGrid& grid);

/// One classical RK4 step of (q, dq/dt) together with the accumulated action.
FlowState step(const FlowState& flow, const InitialData& init, const LabelGrid& grid,
               double dt, ForceForm form = ForceForm::Weber,
               const Stabilizer* stabilizer = nullptr);

struct RunDiagnostics {
    double dt = 0.0;
    std::size_t steps = 0;
    double min_jacobian = 0.0;
    double boundary_leakage = 0.0;
    std::size_t floored_nodes = 0;
    /// max over snapshots of the velocity-covector identity residual
    double weber_residual = 0.0;
    std::vector<double> weber_residual_per_snapshot;
};

struct RunResult {
    std::vector<FlowState> snapshots;
    RunDiagnostics diagnostics;
};

/// Integrates to t_end and records snapshots at the configured cadence.
RunResult run(const InitialData& init, const LabelGrid& grid, const IntegrationConfig& config);

/// Continues an existing state for `duration` with step `dt` (used for reversal tests).
FlowState advance(FlowState flow, const InitialData& init, const LabelGrid& grid,
                  double duration, double dt, ForceForm form = ForceForm::Weber,
                  const Stabilizer* stabilizer = nullptr);

/// Label-space velocity covector m (dq_i/dt)(dq_i/da_k), one component per label axis.
VectorField velocity_covector(const FlowState& flow, const DeformationTensors& tensors,
                              const Physics& phys);

/// max over good-fluid nodes of |dS/da_k - m (dq_i/dt)(dq_i/da_k)|. For multivalued
/// phases dS/da_k is m v0_k + d(chi)/da_k.
double weber_identity_residual(const FlowState& flow, const InitialData& init,
                               const LabelGrid& grid);

}  // namespace qhydro

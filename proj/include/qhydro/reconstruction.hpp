#pragma once

#include <optional>

#include "qhydro/flow_integrator.hpp"
#include "qhydro/kinematics.hpp"
#include "qhydro/lattice.hpp"

namespace qhydro {

/// psi(x,t) = sqrt(rho) exp(i S / hbar) assembled from the trajectories.
///
/// The phase is the co-integrated action at a(x,t); its additive constant is whatever the
/// integration produced, and `phase_reference` records S at the densest node.
struct ReconstructedWave {
    LabelGrid xgrid;
    double t = 0.0;
    Field rho;
    Field S;            // empty when density_only
    ComplexField psi;   // empty when density_only
    NodeMask mask;      // x inside the image of the label domain
    bool density_only = false;
    double phase_reference = 0.0;
};

/// Inverts the flow on `xgrid` and samples rho0/J and the action there. States with a
/// multivalued phase yield a density-only result. Throws MeshTanglingError when the flow
/// is not invertible.
ReconstructedWave reconstruct(const FlowState& flow, const InitialData& init,
                              const LabelGrid& grid, const LabelGrid& xgrid);

struct WaveComparison {
    /// L2 norm of |psi_a| - |psi_b|
    double amplitude_l2 = 0.0;
    /// L2 norm of |psi_a|^2 - |psi_b|^2
    double density_l2 = 0.0;
    /// density-weighted RMS of the phase difference after removing its global offset
    double phase_error = 0.0;
    /// |<a|b>| / (|a| |b|)
    double fidelity = 0.0;
};

/// Gauge-invariant comparison on the common mask (all nodes when `mask` is null).
/// Throws ConfigError on size mismatch or an empty mask.
WaveComparison compare_waves(const ComplexField& a, const ComplexField& b, const LabelGrid& xgrid,
                             const NodeMask* mask = nullptr);

/// 1D only: max discrepancy between the transported action and the trapezoid path integral
/// of m v dx from the densest node, over nodes with density above 1e-3 of the peak.
double path_phase_discrepancy(const ReconstructedWave& wave, const EulerianField& fields,
                              const Physics& phys);

}  // namespace qhydro

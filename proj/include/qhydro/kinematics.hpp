#pragma once

#include <cstddef>
#include <vector>

#include "qhydro/lattice.hpp"

namespace qhydro {

/// Snapshot of the trajectory ensemble at one time.
///
/// q[i][node] is the current position of the particle labelled by `node`,
/// qdot its velocity, and phase the accumulated action S(a,t).
struct FlowState {
    double t = 0.0;
    VectorField q;
    VectorField qdot;
    Field phase;

    int dim() const { return static_cast<int>(q.size()); }
    std::size_t size() const { return q.empty() ? 0 : q[0].size(); }
};

/// Node mask; nonzero entries are "set".
using NodeMask = std::vector<char>;

/// Deformation gradient F_ij = dq_i/da_j, its determinant J and cofactor matrix.
///
/// Index convention: component (i, j) of a dim x dim per-node matrix is stored at i*dim + j.
/// The cofactor satisfies F_kj C_ki = J delta_ij.
struct DeformationTensors {
    int dim = 0;
    std::vector<Field> F;
    Field J;
    std::vector<Field> cof;

    const Field& deformation(int i, int j) const { return F[i * dim + j]; }
    const Field& cofactor(int i, int j) const { return cof[i * dim + j]; }
    double min_jacobian(const NodeMask* excluded = nullptr) const;
};

/// Deformation gradient by fourth-order label-space differencing, J by the
/// determinant, cofactors by the adjugate. Throws MeshTanglingError if J <= 0 at any
/// node not set in `excluded`.
DeformationTensors deformation(const FlowState& flow, const LabelGrid& grid,
                               const NodeMask* excluded = nullptr);
/// Builds the tensors from an explicitly supplied deformation gradient.
DeformationTensors deformation_from_gradient(int dim, std::vector<Field> F);

/// max over nodes and (i,j) of |F_kj C_ki - J delta_ij| relative to the magnitude of the terms.
double cofactor_identity_residual(const DeformationTensors& tensors);

/// rho(a,t) = rho0(a) / J(a,t).
Field lagrangian_density(const Field& rho0, const DeformationTensors& tensors);

/// Position-space gradient of a label-space field: df/dq_i = J^-1 C_ij df/da_j.
VectorField grad_q(const LabelGrid& grid, const Field& f, const DeformationTensors& tensors);
/// Position-space divergence dg_i/dq_i of a label-space vector field.
Field div_q(const LabelGrid& grid, const VectorField& g, const DeformationTensors& tensors);

/// Labels a(x,t) of the particles occupying each node of an Eulerian grid.
struct LabelInversion {
    LabelGrid xgrid;
    VectorField labels;  // labels[j][xnode]
    NodeMask in_hull;    // zero where x lies outside the image of the label domain
    std::size_t newton_failures = 0;
};

/// 1D: bisection on the monotone map followed by cubic refinement. 2D/3D: Newton on the
/// cubic-interpolated map, seeded from the nearest particle. Non-convergence after 50
/// iterations marks the node out of hull.
LabelInversion invert_labels(const FlowState& flow, const LabelGrid& grid, const LabelGrid& xgrid);

/// Evaluates a label-space field at the inverted labels; out-of-hull nodes get 0.
Field sample_at_labels(const LabelGrid& grid, const Field& f, const LabelInversion& inv);

/// Density, velocity and (optionally) wavefunction sampled on an Eulerian grid.
struct EulerianField {
    LabelGrid xgrid;
    double t = 0.0;
    Field rho;
    VectorField v;
    ComplexField psi;  // empty when not available
    NodeMask mask;     // nodes where the fields are defined
};

/// rho(x,t) = (rho0/J) at a(x,t) and v(x,t) = dq/dt at a(x,t).
EulerianField to_eulerian(const FlowState& flow, const DeformationTensors& tensors,
                          const Field& rho0, const LabelGrid& grid, const LabelGrid& xgrid);
/// Same, reusing an existing inversion.
EulerianField to_eulerian(const FlowState& flow, const DeformationTensors& tensors,
                          const Field& rho0, const LabelGrid& grid, const LabelInversion& inv);

}  // namespace qhydro

#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "qhydro/flow_integrator.hpp"
#include "qhydro/forces.hpp"
#include "qhydro/kinematics.hpp"
#include "qhydro/lattice.hpp"

namespace qhydro {

/// Constants of the Schroedinger-group family: time translation d, dilation beta,
/// extension alpha, rotation omega_ij, boost u_i and translation c_i.
///
///   xi0 = d + beta t + alpha t^2
///   eta_i = [(beta/2 + alpha t) delta_ij + omega_ij] q_j - u_i t + c_i
///   Lambda0 = m rho0 (alpha q.q / 2 - u.q)
///
/// Only omega_ij with i < j is stored; omega(j, i) = -omega(i, j).
struct GroupParams {
    double d = 0.0;
    double beta = 0.0;
    double alpha = 0.0;
    std::array<double, 3> u{};
    std::array<double, 3> c{};

    static GroupParams time_translation(double d);
    static GroupParams dilation(double beta);
    static GroupParams extension(double alpha);
    static GroupParams translation(int axis, double c);
    static GroupParams boost(int axis, double u);
    static GroupParams rotation(int i, int j, double w);

    double omega(int i, int j) const;
    void set_omega(int i, int j, double w);
    bool is_identity() const;
    GroupParams scaled(double s) const;

    double xi0(double t) const;
    double dxi0_dt(double t) const;
    /// eta_i at position q (dim components).
    void eta(std::span<const double> q, double t, std::span<double> out) const;

private:
    std::array<double, 3> w_{};  // omega_01, omega_02, omega_12
};

struct AdmissibilityReport {
    bool pass = true;
    double max_residual = 0.0;
    double scale = 0.0;
    /// The violated constraint as a formula; empty on pass.
    std::string constraint;
};

/// Evaluates eta_i dV/dq_i + xi0 dV/dt + V dxi0/dt at every sample point and time. Passes
/// iff the maximum residual is <= 1e-8 times the largest magnitude of the individual terms
/// (at least 1).
AdmissibilityReport check_potential_admissibility(const GroupParams& params,
                                                  const PotentialSpec& potential, int dim,
                                                  const std::vector<std::array<double, 3>>& points,
                                                  const std::vector<double>& times);

/// Sample points on a grid (every `stride`-th node) for the admissibility check.
std::vector<std::array<double, 3>> sample_points(const LabelGrid& grid, std::size_t stride = 7);

/// Finite transforms for translation, boost, rotation and time translation:
///   translation q -> q + c; boost q -> q - u t, v -> v - u, S -> S - m (u.x - u^2 t / 2)
///   with x the untransformed position; rotation q -> R q, R = exp(omega); time t -> t + d.
/// The four are applied in that order. Throws UnsupportedTransformError for non-zero
/// dilation or extension.
FlowState apply_finite_transform(const FlowState& flow, const GroupParams& params,
                                 const Physics& phys);
/// Same transforms on Eulerian fields, resampled on the same x-grid by cubic interpolation.
/// Nodes whose source point falls outside the grid are masked.
EulerianField apply_finite_transform(const EulerianField& fields, const GroupParams& params,
                                     const Physics& phys);

/// exp of the antisymmetric matrix omega (dim x dim, row-major).
std::vector<double> rotation_matrix(const GroupParams& params, int dim);

struct InfinitesimalResult {
    /// q'(a, T) with T the reference time of the input flow
    FlowState transformed;
    /// rho0-weighted L2 norm of E[q'] - E[q], E the Weber-form Euler-Lagrange residual
    double residual = 0.0;
    /// rho0-weighted L2 norm of E[q] itself (discretisation floor)
    double baseline = 0.0;
};

/// Applies t' = t + eps xi0, q' = q + eps eta (labels fixed) to the solution through
/// `flow` and returns the Euler-Lagrange residual of the transformed flow at the time of
/// `flow`. Neighbouring times are reached by short RK4 sub-steps of size <= `probe_dt`
/// and the second time derivative is a five-point difference with spacing `probe_dt`.
InfinitesimalResult apply_infinitesimal(const FlowState& flow, const InitialData& init,
                                        const LabelGrid& grid, const GroupParams& params,
                                        double eps, double probe_dt);

/// Time-independent relabelling a -> a'(a) sampled on a new label grid.
///
/// `source[k][n]` is the old label a(a') of new node n and `D[n]` is det(da'/da) there.
struct RelabelMap {
    LabelGrid new_grid;
    VectorField source;
    Field D;
    std::string name;
};

RelabelMap identity_relabel(const LabelGrid& grid);
/// a'_k = scale_k a_k + shift_k on the image of the old grid.
RelabelMap affine_relabel(const LabelGrid& grid, std::span<const double> scale,
                          std::span<const double> shift);
/// 1D: a' = (1/k) * integral of rho0 from the lower edge, so that rho0' = k. The new grid has
/// `count` nodes spanning the mass fraction [tail, 1 - tail]. The cumulative integral uses
/// Gauss-Legendre quadrature of the cubic interpolant of ln rho0.
RelabelMap uniform_density_relabel(const LabelGrid& grid, const Field& log_rho0, double k,
                                   int count, double tail);

struct Relabelled {
    FlowState flow;
    InitialData init;
    LabelGrid grid;
};

/// q'(a') = q(a(a')), velocities and action carried, rho0'(a') = rho0(a) / D, initial
/// positions q0'(a') = a(a') (labels are no longer initial positions). Throws ConfigError
/// when D <= 0 or a source label lies outside the old grid.
Relabelled relabel(const FlowState& flow, const InitialData& init, const RelabelMap& map,
                   const LabelGrid& grid);

/// max |d(rho0 xi_i)/da_i| divided by max |rho0 xi|.
double relabel_constraint_residual(const LabelGrid& grid, const Field& rho0, const VectorField& xi);

/// 2D relabel field xi = rho0^-1 (d psi/da_2, -d psi/da_1) from a stream function sampled on
/// the grid. The divergence of rho0 xi vanishes to rounding because the stencils commute.
VectorField stream_function_relabel(const LabelGrid& grid, const Field& rho0, const Field& psi);

/// 1D relabel field xi = c / rho0, the only solution of the relabel constraint in 1D.
VectorField uniform_flux_relabel(const LabelGrid& grid, const Field& rho0, double c);

struct SuperpositionReport {
    /// xi_j = -J^-1 C_ij dq_i/dA per label node
    VectorField xi;
    /// max over good-fluid nodes of |F xi + dq/dA| relative to max |dq/dA|
    double defining_residual = 0.0;
    /// ||d rho/dA (trajectory chain rule) - d rho/dA (Eulerian difference)|| / ||Eulerian||
    double eulerian_mismatch = 0.0;
    EulerianField implied_drho_dA;
    EulerianField direct_drho_dA;
};

/// Superposition-as-relabelling for a parameter A of the initial state.
///
/// dq/dA is the central difference (q(A+delta) - q(A-delta)) / 2 delta. The implied
/// Eulerian derivative is d/dA[rho0/J] - grad rho . dq/dA at a(x,t) of the central flow;
/// the direct one differences the Eulerian densities of the two outer flows on `xgrid`.
/// Throws ConfigError when the flows do not share the label grid or time.
SuperpositionReport superposition_relabel(const FlowState& minus, const InitialData& init_minus,
                                          const FlowState& centre, const InitialData& init_centre,
                                          const FlowState& plus, const InitialData& init_plus,
                                          double delta, const LabelGrid& grid,
                                          const LabelGrid& xgrid);

}  // namespace qhydro

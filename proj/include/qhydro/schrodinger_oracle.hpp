#pragma once

#include <functional>
#include <string>
#include <vector>

#include "qhydro/forces.hpp"
#include "qhydro/kinematics.hpp"
#include "qhydro/lattice.hpp"

namespace qhydro {

struct WaveSnapshot {
    double t = 0.0;
    ComplexField psi;
};

struct Propagation {
    std::vector<WaveSnapshot> snapshots;
    double dt = 0.0;
    std::size_t steps = 0;
    /// max over steps of |norm(n+1) - norm(n)|
    double max_norm_change = 0.0;
    Warnings warnings;
};

/// Crank-Nicolson propagation of i hbar psi_t = -(hbar^2/2m) lap psi + V psi with psi = 0
/// outside the grid. Three-point Laplacian; 1D is one tridiagonal solve per step, 2D and 3D
/// use a Strang splitting of per-axis Cayley factors (each axis carries V/dim), which keeps
/// every factor unitary. V is evaluated at the step midpoint.
///
/// `dt` is shrunk so that an integer number of steps fills each snapshot interval.
/// Throws NumericError on non-finite values.
Propagation propagate_cn(const LabelGrid& xgrid, ComplexField psi0, const PotentialSpec& potential,
                         const Physics& phys, double dt, double t_end, double snapshot_every = 0.0);

/// Points per de Broglie wavelength at the largest local momentum where |psi|^2 exceeds
/// the density floor.
double points_per_wavelength(const LabelGrid& xgrid, const ComplexField& psi, const Physics& phys);

/// (H psi) with the same three-point Laplacian as the propagator.
ComplexField apply_hamiltonian(const LabelGrid& xgrid, const ComplexField& psi,
                               const PotentialSpec& potential, const Physics& phys, double t);

/// <psi|H|psi> with trapezoid weights.
double energy_expectation(const LabelGrid& xgrid, const ComplexField& psi,
                          const PotentialSpec& potential, const Physics& phys, double t);

enum class AnalyticKind { FreeGaussian, HoGround, HoCoherent, Vortex2D };

AnalyticKind parse_analytic_kind(const std::string& name);
std::string to_string(AnalyticKind kind);

/// Parameters of the closed-form states. sigma0 is the standard deviation of the initial
/// density; x0 and p0 are the displacement and momentum along axis 0.
struct AnalyticParams {
    double sigma0 = 1.0;
    double omega = 1.0;
    double x0 = 0.0;
    double p0 = 0.0;
    Physics phys;
};

/// Closed-form rho, v and psi on `xgrid` at time t.
///  - FreeGaussian: spreading packet, width s(t) = sigma0 sqrt(1 + (hbar t / 2 m sigma0^2)^2),
///    centre x0 + p0 t / m along axis 0.
///  - HoGround: oscillator ground state, psi(t) = psi(0) exp(-i d omega t / 2).
///  - HoCoherent: ground state displaced by x0 along axis 0, centre x0 cos(omega t).
///  - Vortex2D: n = 1 oscillator vortex (x + i y) exp(-m omega r^2 / 2 hbar), energy 2 hbar omega.
/// Throws ConfigError on non-positive sigma0 or omega, or Vortex2D with dim != 2.
EulerianField analytic_solution(AnalyticKind kind, const AnalyticParams& params,
                                const LabelGrid& xgrid, double t);

/// Analytic trajectory q(a, t) along `axis` for FreeGaussian and HoCoherent (and the
/// static HoGround); throws ConfigError for Vortex2D.
double analytic_trajectory(AnalyticKind kind, const AnalyticParams& params, double a, int axis,
                           double t);

/// rho = |psi|^2 and v = (hbar/m) Im(psi* grad psi) / rho where rho exceeds the density
/// floor, 0 elsewhere.
EulerianField extract_fields(const LabelGrid& xgrid, const ComplexField& psi, const Physics& phys,
                             double t);

struct EulerResiduals {
    /// L2 norm of d rho/dt + div(rho v) over the interior snapshots
    double continuity = 0.0;
    /// rho-weighted L2 norm of dv/dt + (v.grad) v + grad(V + V_Q)/m
    double euler = 0.0;
    std::size_t snapshots_used = 0;
};

/// Residuals of the continuity and quantum Euler equations by centred differences in time
/// and fourth-order differences in space. Needs >= 3 equally spaced snapshots on one grid;
/// throws ConfigError otherwise.
EulerResiduals euler_residuals(const std::vector<EulerianField>& fields,
                               const PotentialSpec& potential, const Physics& phys);

}  // namespace qhydro

#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "qhydro/charges.hpp"
#include "qhydro/flow_integrator.hpp"
#include "qhydro/schrodinger_oracle.hpp"

namespace qhydro::cli {

enum class StateKind { FreeGaussian, HoGround, HoCoherent, Vortex2D, Gaussian };

StateKind parse_state_kind(const std::string& name);
std::string to_string(StateKind kind);

/// Initial state. free-gaussian, ho-ground, ho-coherent and vortex-2d have closed forms
/// (x0, p0 along axis 0); gaussian is an isotropic packet with arbitrary centre and
/// momentum vectors, propagated by the oracle only.
struct StateSpec {
    StateKind kind = StateKind::FreeGaussian;
    double sigma0 = 1.0;
    double omega = 1.0;
    double x0 = 0.0;
    double p0 = 0.0;
    std::vector<double> center;
    std::vector<double> momentum;
};

struct GridSpec {
    double lo = 0.0;
    double hi = 0.0;
    int counts = 0;
};

struct IntegrationSpec {
    double t_end = 0.0;
    double snapshot_every = 0.0;
    double cfl = 0.2;
    double dt = 0.0;
    ForceForm form = ForceForm::Weber;
    double stabilization = 1.0;
    /// Frozen core radius in grid spacings around the origin; 0 disables.
    double frozen_core = 0.0;
    /// Nodes beyond this radius are frozen; 0 disables.
    double frozen_outer = 0.0;
};

struct OracleSpec {
    bool enabled = false;
    GridSpec grid;
    double dt = 1e-3;
};

struct ChargeRequest {
    ChargeSelector selector;
    double tolerance = 1e-5;
};

enum class TrajectoryCheck { None, Relative, Absolute };

/// Requested diagnostics and their tolerances. A zero tolerance or an empty list disables
/// the corresponding check.
struct ChecksSpec {
    TrajectoryCheck trajectory = TrajectoryCheck::None;
    double trajectory_tol = 0.0;
    double mass_fraction = 0.9;
    double centroid_tol = 0.0;
    double density_drift_tol = 0.0;

    bool reconstruction = false;
    double fidelity_min = 0.9999;
    double amplitude_l2_max = 1e-3;

    std::vector<ChargeRequest> charges;
    double energy_expected = 0.0;
    double energy_tol = 0.0;
    bool cross_picture = false;
    double cross_picture_tol = 1e-4;

    double weber_tol = 1e-5;
    double cofactor_tol = 1e-10;

    std::vector<double> circulation_radii;
    int circulation_points = 720;
    double circulation_tol = 0.01;

    std::vector<std::string> relabel_families;
    double relabel_tol = 1e-5;

    bool uniform_relabel = false;
    int uniform_relabel_count = 2048;
    double uniform_relabel_tail = 1e-6;
    double uniform_relabel_mass = 0.99;
    double uniform_relabel_tol = 1e-5;

    double superposition_delta = 0.0;
    GridSpec superposition_grid;
    double superposition_residual_tol = 1e-5;
    double superposition_match_tol = 0.03;

    /// generator name -> expected order of the residual in eps
    std::vector<std::pair<std::string, int>> infinitesimal;
    double infinitesimal_eps = 1e-2;
    double infinitesimal_probe_dt = 1e-2;
    double infinitesimal_ratio_tol = 0.2;
};

struct Scenario {
    std::string name;
    std::string summary;
    std::string exercises;
    int dim = 1;
    Physics phys;
    StateSpec state;
    PotentialSpec potential;
    std::string potential_kind = "free";
    double potential_omega = 1.0;
    GridSpec grid;
    IntegrationSpec integration;
    OracleSpec oracle;
    ChecksSpec checks;
    std::string output_dir;
    bool write_snapshots = true;
};

/// Parses an INI scenario. Throws ConfigError naming the offending key; `source` labels
/// the messages.
Scenario parse_scenario(std::istream& in, const std::string& source);
Scenario load_scenario(const std::filesystem::path& path);

/// Checks every precondition that can fail before computing: grid sizes, state and
/// potential compatibility, diagnostic availability for the dimension, and charge
/// admissibility. Throws ConfigError or InadmissibleError.
void validate(const Scenario& scenario);

/// Resolved configuration with every default made explicit.
nlohmann::ordered_json resolved_config(const Scenario& scenario);

LabelGrid label_grid(const Scenario& scenario);
LabelGrid grid_from(const GridSpec& spec, int dim);
/// Initial data on the label grid, including the frozen model.
InitialData make_initial_data(const Scenario& scenario, const LabelGrid& grid);
/// psi(x, 0) on an arbitrary grid.
ComplexField initial_wavefunction(const Scenario& scenario, const LabelGrid& xgrid);
/// Label-space stream function of a named relabel family, scaled to the initial packet.
Field relabel_stream_function(const Scenario& scenario, const LabelGrid& grid,
                              const std::string& family);

struct CheckResult {
    std::string name;
    double value = 0.0;
    double tolerance = 0.0;
    /// "<=", ">=" or "within" (|value - target| <= tolerance)
    std::string relation = "<=";
    double target = 0.0;
    bool pass = false;
};

/// Everything a scenario computed, ready to be serialised.
struct Outcome {
    Scenario scenario;
    RunResult run;
    std::vector<CheckResult> checks;
    /// CSV series keyed by relative file name
    std::map<std::string, ChargeSeries> series;
    nlohmann::ordered_json report;

    bool pass() const;
};

/// Runs the trajectory integration and every requested diagnostic. Throws the module
/// errors unchanged.
Outcome execute(const Scenario& scenario);

/// Writes charges/*.csv, report.json, summary.json and, when requested, snapshots.f64
/// with its JSON sidecar into `dir`.
void write_artifacts(const Outcome& outcome, const std::filesystem::path& dir);

/// Output root: $QHYDRO_OUTPUT_ROOT when set, else "qhydro_out".
std::filesystem::path output_root();

struct BundledScenario {
    std::string name;
    std::string text;
};
const std::vector<BundledScenario>& bundled_scenarios();
/// Throws ConfigError for an unknown name.
Scenario bundled(const std::string& name);

/// Command-line entry point; returns the process exit code
/// (0 pass, 1 tolerance failure, 2 configuration error, 3 runtime fatal).
int main_entry(int argc, char** argv);

}  // namespace qhydro::cli

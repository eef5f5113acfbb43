#include "qhydro/cli_runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "qhydro/errors.hpp"
#include "qhydro/reconstruction.hpp"
#include "qhydro/symmetry_group.hpp"

namespace qhydro::cli {

namespace {

#include "bundled_scenarios.inc"

using json = nlohmann::ordered_json;
namespace pt = boost::property_tree;

const std::map<std::string, std::set<std::string>>& allowed_keys() {
    static const std::map<std::string, std::set<std::string>> keys = {
        {"scenario", {"name", "summary", "exercises"}},
        {"physics", {"hbar", "mass"}},
        {"state", {"kind", "sigma0", "omega", "x0", "p0", "center", "momentum"}},
        {"potential", {"kind", "omega"}},
        {"grid", {"dim", "lo", "hi", "counts"}},
        {"integration",
         {"t_end", "snapshot_every", "cfl", "dt", "form", "stabilization", "frozen_core",
          "frozen_outer"}},
        {"oracle", {"enabled", "lo", "hi", "counts", "dt"}},
        {"checks",
         {"trajectory", "trajectory_tol", "mass_fraction", "centroid_tol", "density_drift_tol",
          "reconstruction", "fidelity_min", "amplitude_l2_max", "charges", "energy_expected",
          "energy_tol", "cross_picture", "cross_picture_tol", "weber_tol", "cofactor_tol",
          "circulation_radii", "circulation_points", "circulation_tol", "relabel_families",
          "relabel_tol", "uniform_relabel", "uniform_relabel_count", "uniform_relabel_tail",
          "uniform_relabel_mass", "uniform_relabel_tol", "superposition_delta",
          "superposition_lo", "superposition_hi", "superposition_counts",
          "superposition_residual_tol", "superposition_match_tol", "infinitesimal",
          "infinitesimal_eps", "infinitesimal_probe_dt", "infinitesimal_ratio_tol"}},
        {"output", {"dir", "snapshots"}},
    };
    return keys;
}

std::vector<std::string> split_words(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    for (std::string w; in >> w;) out.push_back(w);
    return out;
}

// Accepts a product/quotient chain of numbers and "pi", e.g. "2*pi", "pi/8", "1e-3".
double parse_number(const std::string& text) {
    std::string s;
    for (char c : text)
        if (!std::isspace(static_cast<unsigned char>(c))) s += c;
    if (s.empty()) throw ConfigError("empty number");
    double value = 1.0;
    char op = '*';
    std::size_t pos = 0;
    while (pos <= s.size()) {
        std::size_t end = s.find_first_of("*/", pos);
        // a '/' or '*' directly after an exponent marker is never valid, so no special case
        const std::string tok = s.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
        double v = 0.0;
        if (tok == "pi") {
            v = M_PI;
        } else {
            std::size_t used = 0;
            try {
                v = std::stod(tok, &used);
            } catch (const std::exception&) {
                throw ConfigError("not a number: '" + text + "'");
            }
            if (used != tok.size()) throw ConfigError("not a number: '" + text + "'");
        }
        if (op == '*') value *= v;
        else value /= v;
        if (end == std::string::npos) break;
        op = s[end];
        pos = end + 1;
    }
    if (!std::isfinite(value)) throw ConfigError("not a finite number: '" + text + "'");
    return value;
}

class Reader {
public:
    Reader(const pt::ptree& tree, std::string source) : tree_(tree), source_(std::move(source)) {
        for (const auto& [section, body] : tree_) {
            const auto it = allowed_keys().find(section);
            if (it == allowed_keys().end()) fail("unknown section [" + section + "]");
            for (const auto& [key, value] : body) {
                if (!it->second.count(key)) fail("unknown key '" + key + "' in [" + section + "]");
                if (!value.empty()) fail("nested key '" + key + "' in [" + section + "]");
            }
        }
    }

    std::optional<std::string> raw(const std::string& section, const std::string& key) const {
        const auto s = tree_.get_child_optional(section);
        if (!s) return std::nullopt;
        const auto v = s->get_optional<std::string>(pt::ptree::path_type(key, '\0'));
        if (!v) return std::nullopt;
        return *v;
    }

    std::string text(const std::string& section, const std::string& key,
                     const std::string& fallback) const {
        return raw(section, key).value_or(fallback);
    }
    std::string required(const std::string& section, const std::string& key) const {
        const auto v = raw(section, key);
        if (!v || v->empty()) fail("missing " + section + "." + key);
        return *v;
    }
    double number(const std::string& section, const std::string& key, double fallback) const {
        const auto v = raw(section, key);
        if (!v) return fallback;
        try {
            return parse_number(*v);
        } catch (const ConfigError& e) {
            fail(section + "." + key + ": " + e.what());
        }
    }
    int integer(const std::string& section, const std::string& key, int fallback) const {
        const double v = number(section, key, fallback);
        if (v != std::floor(v) || std::abs(v) > 1e9) fail(section + "." + key + " must be an integer");
        return static_cast<int>(v);
    }
    bool boolean(const std::string& section, const std::string& key, bool fallback) const {
        const auto v = raw(section, key);
        if (!v) return fallback;
        if (*v == "true" || *v == "1" || *v == "yes") return true;
        if (*v == "false" || *v == "0" || *v == "no") return false;
        fail(section + "." + key + " must be true or false");
    }
    std::vector<double> numbers(const std::string& section, const std::string& key) const {
        std::vector<double> out;
        for (const auto& w : split_words(text(section, key, ""))) {
            try {
                out.push_back(parse_number(w));
            } catch (const ConfigError& e) {
                fail(section + "." + key + ": " + e.what());
            }
        }
        return out;
    }
    [[noreturn]] void fail(const std::string& msg) const { throw ConfigError(source_ + ": " + msg); }

private:
    const pt::ptree& tree_;
    std::string source_;
};

// Isotropic Gaussian description of the initial packet: centre, momentum and width.
struct Packet {
    std::array<double, kMaxDim> center{};
    std::array<double, kMaxDim> momentum{};
    double sigma = 1.0;
};

Packet packet_of(const Scenario& s) {
    Packet p;
    const auto& st = s.state;
    switch (st.kind) {
        case StateKind::FreeGaussian:
            p.center[0] = st.x0;
            p.momentum[0] = st.p0;
            p.sigma = st.sigma0;
            break;
        case StateKind::HoGround:
        case StateKind::HoCoherent:
            p.center[0] = st.kind == StateKind::HoCoherent ? st.x0 : 0.0;
            p.sigma = std::sqrt(s.phys.hbar / (2.0 * s.phys.mass * st.omega));
            break;
        case StateKind::Vortex2D:
            p.sigma = std::sqrt(s.phys.hbar / (s.phys.mass * st.omega));
            break;
        case StateKind::Gaussian:
            for (int i = 0; i < s.dim; ++i) {
                p.center[i] = st.center[i];
                p.momentum[i] = st.momentum[i];
            }
            p.sigma = st.sigma0;
            break;
    }
    return p;
}

bool has_closed_form(StateKind k) { return k != StateKind::Gaussian; }

AnalyticKind analytic_kind(StateKind k) {
    switch (k) {
        case StateKind::FreeGaussian: return AnalyticKind::FreeGaussian;
        case StateKind::HoGround: return AnalyticKind::HoGround;
        case StateKind::HoCoherent: return AnalyticKind::HoCoherent;
        case StateKind::Vortex2D: return AnalyticKind::Vortex2D;
        case StateKind::Gaussian: break;
    }
    throw ConfigError("the gaussian state has no closed form");
}

AnalyticParams analytic_params(const Scenario& s) {
    AnalyticParams a;
    a.sigma0 = s.state.sigma0;
    a.omega = s.state.omega;
    a.x0 = s.state.x0;
    a.p0 = s.state.p0;
    a.phys = s.phys;
    return a;
}

GroupParams generator(const std::string& name) {
    if (name == "time") return GroupParams::time_translation(1.0);
    if (name == "dilation") return GroupParams::dilation(1.0);
    if (name == "extension") return GroupParams::extension(1.0);
    if (name == "translation") return GroupParams::translation(0, 1.0);
    if (name == "boost") return GroupParams::boost(0, 1.0);
    if (name == "rotation") return GroupParams::rotation(0, 1, 1.0);
    throw ConfigError("unknown generator '" + name + "'");
}

const std::set<std::string> kFamilies = {"disc", "bump", "ring"};

// C2 step from 1 at s <= 0 to 0 at s >= 1 with vanishing first three derivatives at the ends.
double window(double s) {
    if (s <= 0.0) return 1.0;
    if (s >= 1.0) return 0.0;
    return 1.0 - s * s * s * s * (35.0 - 84.0 * s + 70.0 * s * s - 20.0 * s * s * s);
}

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(6) << v;
    return os.str();
}

CheckResult at_most(std::string name, double value, double tol) {
    return {std::move(name), value, tol, "<=", 0.0, value <= tol};
}
CheckResult at_least(std::string name, double value, double tol) {
    return {std::move(name), value, tol, ">=", 0.0, value >= tol};
}
CheckResult within(std::string name, double value, double target, double tol) {
    return {std::move(name), value, tol, "within", target, std::abs(value - target) <= tol};
}

json series_json(const ChargeSeries& s) {
    return json{{"mean", s.mean()}, {"drift", s.drift()}, {"scale", s.scale},
                {"times", s.times}, {"values", s.values}};
}

json grid_json(const GridSpec& g) { return json{{"lo", g.lo}, {"hi", g.hi}, {"counts", g.counts}}; }

std::string trajectory_name(TrajectoryCheck t) {
    switch (t) {
        case TrajectoryCheck::None: return "none";
        case TrajectoryCheck::Relative: return "relative";
        case TrajectoryCheck::Absolute: return "absolute";
    }
    return "none";
}

}  // namespace

StateKind parse_state_kind(const std::string& name) {
    if (name == "free-gaussian") return StateKind::FreeGaussian;
    if (name == "ho-ground") return StateKind::HoGround;
    if (name == "ho-coherent") return StateKind::HoCoherent;
    if (name == "vortex-2d") return StateKind::Vortex2D;
    if (name == "gaussian") return StateKind::Gaussian;
    throw ConfigError("unknown state kind '" + name + "'");
}

std::string to_string(StateKind kind) {
    switch (kind) {
        case StateKind::FreeGaussian: return "free-gaussian";
        case StateKind::HoGround: return "ho-ground";
        case StateKind::HoCoherent: return "ho-coherent";
        case StateKind::Vortex2D: return "vortex-2d";
        case StateKind::Gaussian: return "gaussian";
    }
    return "?";
}

Scenario parse_scenario(std::istream& in, const std::string& source) {
    pt::ptree tree;
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(source + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
    }
    const Reader r(tree, source);
    Scenario s;
    s.name = r.required("scenario", "name");
    s.summary = r.text("scenario", "summary", "");
    s.exercises = r.text("scenario", "exercises", "");

    s.phys.hbar = r.number("physics", "hbar", 1.0);
    s.phys.mass = r.number("physics", "mass", 1.0);

    s.dim = r.integer("grid", "dim", 1);
    s.grid.lo = r.number("grid", "lo", 0.0);
    s.grid.hi = r.number("grid", "hi", 0.0);
    s.grid.counts = r.integer("grid", "counts", 0);

    try {
        s.state.kind = parse_state_kind(r.required("state", "kind"));
    } catch (const ConfigError& e) {
        r.fail(e.what());
    }
    s.state.sigma0 = r.number("state", "sigma0", 1.0);
    s.state.omega = r.number("state", "omega", 1.0);
    s.state.x0 = r.number("state", "x0", 0.0);
    s.state.p0 = r.number("state", "p0", 0.0);
    s.state.center = r.numbers("state", "center");
    s.state.momentum = r.numbers("state", "momentum");
    if (s.state.kind == StateKind::Gaussian) {
        if (s.state.center.empty()) s.state.center.assign(std::max(s.dim, 1), 0.0);
        if (s.state.momentum.empty()) s.state.momentum.assign(std::max(s.dim, 1), 0.0);
    }

    s.potential_kind = r.text("potential", "kind", "free");
    s.potential_omega = r.number("potential", "omega", 1.0);
    if (s.potential_kind == "free") {
        s.potential = PotentialSpec::free();
    } else if (s.potential_kind == "harmonic") {
        if (!(s.potential_omega > 0.0)) r.fail("potential.omega must be positive");
        s.potential = PotentialSpec::harmonic(s.phys.mass, s.potential_omega);
    } else {
        r.fail("unknown potential kind '" + s.potential_kind + "'");
    }

    auto& in_ = s.integration;
    in_.t_end = r.number("integration", "t_end", 0.0);
    in_.snapshot_every = r.number("integration", "snapshot_every", 0.0);
    in_.cfl = r.number("integration", "cfl", 0.2);
    in_.dt = r.number("integration", "dt", 0.0);
    const auto form = r.text("integration", "form", "weber");
    if (form == "weber") in_.form = ForceForm::Weber;
    else if (form == "stress") in_.form = ForceForm::Stress;
    else r.fail("integration.form must be weber or stress");
    in_.stabilization = r.number("integration", "stabilization", 1.0);
    in_.frozen_core = r.number("integration", "frozen_core", 0.0);
    in_.frozen_outer = r.number("integration", "frozen_outer", 0.0);

    s.oracle.enabled = r.boolean("oracle", "enabled", false);
    s.oracle.grid.lo = r.number("oracle", "lo", s.grid.lo);
    s.oracle.grid.hi = r.number("oracle", "hi", s.grid.hi);
    s.oracle.grid.counts = r.integer("oracle", "counts", s.grid.counts);
    s.oracle.dt = r.number("oracle", "dt", 1e-3);

    auto& c = s.checks;
    const auto traj = r.text("checks", "trajectory", "none");
    if (traj == "none") c.trajectory = TrajectoryCheck::None;
    else if (traj == "relative") c.trajectory = TrajectoryCheck::Relative;
    else if (traj == "absolute") c.trajectory = TrajectoryCheck::Absolute;
    else r.fail("checks.trajectory must be none, relative or absolute");
    c.trajectory_tol = r.number("checks", "trajectory_tol", 0.0);
    c.mass_fraction = r.number("checks", "mass_fraction", 0.9);
    c.centroid_tol = r.number("checks", "centroid_tol", 0.0);
    c.density_drift_tol = r.number("checks", "density_drift_tol", 0.0);
    c.reconstruction = r.boolean("checks", "reconstruction", false);
    c.fidelity_min = r.number("checks", "fidelity_min", 0.9999);
    c.amplitude_l2_max = r.number("checks", "amplitude_l2_max", 1e-3);
    for (const auto& w : split_words(r.text("checks", "charges", ""))) {
        ChargeRequest req;
        const auto colon = w.find(':');
        try {
            req.selector.kind = parse_charge_kind(w.substr(0, colon));
            if (colon != std::string::npos) req.tolerance = parse_number(w.substr(colon + 1));
        } catch (const ConfigError& e) {
            r.fail(std::string("checks.charges: ") + e.what());
        }
        c.charges.push_back(req);
    }
    c.energy_expected = r.number("checks", "energy_expected", 0.0);
    c.energy_tol = r.number("checks", "energy_tol", 0.0);
    c.cross_picture = r.boolean("checks", "cross_picture", false);
    c.cross_picture_tol = r.number("checks", "cross_picture_tol", 1e-4);
    c.weber_tol = r.number("checks", "weber_tol", 1e-5);
    c.cofactor_tol = r.number("checks", "cofactor_tol", 1e-10);
    c.circulation_radii = r.numbers("checks", "circulation_radii");
    c.circulation_points = r.integer("checks", "circulation_points", 720);
    c.circulation_tol = r.number("checks", "circulation_tol", 0.01);
    c.relabel_families = split_words(r.text("checks", "relabel_families", ""));
    c.relabel_tol = r.number("checks", "relabel_tol", 1e-5);
    c.uniform_relabel = r.boolean("checks", "uniform_relabel", false);
    c.uniform_relabel_count = r.integer("checks", "uniform_relabel_count", 2048);
    c.uniform_relabel_tail = r.number("checks", "uniform_relabel_tail", 1e-6);
    c.uniform_relabel_mass = r.number("checks", "uniform_relabel_mass", 0.99);
    c.uniform_relabel_tol = r.number("checks", "uniform_relabel_tol", 1e-5);
    c.superposition_delta = r.number("checks", "superposition_delta", 0.0);
    c.superposition_grid.lo = r.number("checks", "superposition_lo", s.grid.lo);
    c.superposition_grid.hi = r.number("checks", "superposition_hi", s.grid.hi);
    c.superposition_grid.counts = r.integer("checks", "superposition_counts", s.grid.counts);
    c.superposition_residual_tol = r.number("checks", "superposition_residual_tol", 1e-5);
    c.superposition_match_tol = r.number("checks", "superposition_match_tol", 0.03);
    for (const auto& w : split_words(r.text("checks", "infinitesimal", ""))) {
        const auto colon = w.find(':');
        if (colon == std::string::npos) r.fail("checks.infinitesimal entries are generator:order");
        int order = 0;
        try {
            order = static_cast<int>(parse_number(w.substr(colon + 1)));
        } catch (const ConfigError& e) {
            r.fail(std::string("checks.infinitesimal: ") + e.what());
        }
        c.infinitesimal.emplace_back(w.substr(0, colon), order);
    }
    c.infinitesimal_eps = r.number("checks", "infinitesimal_eps", 1e-2);
    c.infinitesimal_probe_dt = r.number("checks", "infinitesimal_probe_dt", 1e-2);
    c.infinitesimal_ratio_tol = r.number("checks", "infinitesimal_ratio_tol", 0.2);

    s.output_dir = r.text("output", "dir", s.name);
    s.write_snapshots = r.boolean("output", "snapshots", true);
    return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    return parse_scenario(in, path.string());
}

LabelGrid grid_from(const GridSpec& spec, int dim) {
    if (dim < 1 || dim > kMaxDim) throw ConfigError("grid.dim must be 1, 2 or 3");
    return make_grid(dim, spec.lo, spec.hi, spec.counts);
}

LabelGrid label_grid(const Scenario& s) { return grid_from(s.grid, s.dim); }

void validate(const Scenario& s) {
    auto fail = [&](const std::string& msg) { throw ConfigError(s.name + ": " + msg); };
    if (s.name.empty() || s.name.find_first_of("/\\ ") != std::string::npos)
        fail("scenario.name must be a non-empty word");
    if (!(s.phys.hbar > 0.0) || !(s.phys.mass > 0.0)) fail("hbar and mass must be positive");
    const LabelGrid grid = label_grid(s);
    const auto& st = s.state;
    const bool harmonic = s.potential_kind == "harmonic";
    if (!(st.sigma0 > 0.0) || !(st.omega > 0.0)) fail("state.sigma0 and state.omega must be positive");
    switch (st.kind) {
        case StateKind::FreeGaussian:
            if (harmonic) fail("the free-gaussian state needs potential.kind = free");
            break;
        case StateKind::HoGround:
        case StateKind::HoCoherent:
        case StateKind::Vortex2D:
            if (!harmonic || s.potential_omega != st.omega)
                fail("oscillator states need a harmonic potential with the same omega");
            if (st.kind == StateKind::HoCoherent && st.p0 != 0.0)
                fail("the ho-coherent state starts at rest; p0 must be 0");
            if (st.kind == StateKind::Vortex2D) {
                if (s.dim != 2) fail("the vortex-2d state is two-dimensional");
                if (s.grid.counts % 2 != 0) fail("the vortex-2d state needs an even count (no node on the axis)");
            }
            break;
        case StateKind::Gaussian:
            if (static_cast<int>(st.center.size()) != s.dim ||
                static_cast<int>(st.momentum.size()) != s.dim)
                fail("state.center and state.momentum need one entry per dimension");
            break;
    }
    const auto& in = s.integration;
    if (!(in.t_end > 0.0)) fail("integration.t_end must be positive");
    if (in.snapshot_every < 0.0) fail("integration.snapshot_every must be >= 0");
    if (in.frozen_core < 0.0 || in.frozen_outer < 0.0) fail("frozen radii must be >= 0");
    if (in.stabilization < 0.0) fail("integration.stabilization must be >= 0");
    IntegrationConfig cfg;
    cfg.dt = in.dt;
    cfg.cfl = in.cfl;
    cfg.t_end = in.t_end;
    cfg.snapshot_every = in.snapshot_every;
    try {
        cfg.validate();
    } catch (const ConfigError& e) {
        fail(e.what());
    }
    if (s.oracle.enabled) {
        grid_from(s.oracle.grid, s.dim);
        if (!(s.oracle.dt > 0.0)) fail("oracle.dt must be positive");
    }

    const auto& c = s.checks;
    if (c.trajectory != TrajectoryCheck::None || c.centroid_tol > 0.0) {
        if (s.dim != 1 || !has_closed_form(st.kind) || st.kind == StateKind::Vortex2D)
            fail("trajectory checks need a one-dimensional state with a closed form");
        if (c.trajectory != TrajectoryCheck::None && !(c.trajectory_tol > 0.0))
            fail("checks.trajectory_tol must be positive");
        if (!(c.mass_fraction > 0.0 && c.mass_fraction < 1.0))
            fail("checks.mass_fraction must lie in (0, 1)");
    }
    if (c.density_drift_tol > 0.0 && s.dim != 1) fail("density drift is checked in one dimension");
    if (c.reconstruction && (!s.oracle.enabled || st.kind == StateKind::Vortex2D))
        fail("reconstruction needs the oracle and a single-valued phase");
    if (c.cross_picture && (!s.oracle.enabled || c.charges.empty()))
        fail("cross_picture needs the oracle and at least one charge");
    if (!c.charges.empty() && in.frozen_core + in.frozen_outer > 0.0)
        fail("charges integrate over the whole fluid and cannot be used with frozen nodes");
    std::vector<double> times{0.0, in.t_end};
    for (const auto& req : c.charges) {
        if (req.selector.kind == ChargeKind::Angular && s.dim < 2)
            fail("angular momentum is empty in one dimension");
        if (!(req.tolerance > 0.0)) fail("charge tolerances must be positive");
        require_admissible(req.selector, s.potential, grid, times);
    }
    if (c.energy_tol > 0.0 &&
        std::none_of(c.charges.begin(), c.charges.end(),
                     [](const ChargeRequest& q) { return q.selector.kind == ChargeKind::Energy; }))
        fail("energy_expected needs the energy charge");
    if (!c.circulation_radii.empty()) {
        if (s.dim != 2) fail("circulation loops are two-dimensional");
        for (double R : c.circulation_radii) {
            if (R < 6.0 * grid.min_spacing())
                fail("circulation radius " + fmt(R) + " is below 6 grid spacings");
            if (R > std::min(std::abs(s.grid.lo), std::abs(s.grid.hi)))
                fail("circulation radius " + fmt(R) + " leaves the grid");
        }
        if (c.circulation_points < 8) fail("checks.circulation_points must be >= 8");
    }
    if (!c.relabel_families.empty()) {
        if (s.dim != 2) fail("stream-function relabel families are two-dimensional");
        for (const auto& f : c.relabel_families)
            if (!kFamilies.count(f)) fail("unknown relabel family '" + f + "' (disc, bump, ring)");
    }
    if (c.uniform_relabel) {
        if (s.dim != 1) fail("the uniform-density relabel is one-dimensional");
        if (c.uniform_relabel_count < kMinNodesPerAxis) fail("uniform_relabel_count is too small");
        if (!(c.uniform_relabel_tail > 0.0 && c.uniform_relabel_tail < 0.5))
            fail("uniform_relabel_tail must lie in (0, 0.5)");
        if (!(c.uniform_relabel_mass > 0.0 && c.uniform_relabel_mass < 1.0 - 2.0 * c.uniform_relabel_tail))
            fail("uniform_relabel_mass must lie inside the relabelled mass range");
    }
    if (c.superposition_delta != 0.0) {
        if (s.dim != 1 || st.kind != StateKind::FreeGaussian)
            fail("the superposition test varies sigma0 of a one-dimensional free-gaussian");
        if (!(c.superposition_delta > 0.0 && c.superposition_delta < 0.1 * st.sigma0))
            fail("superposition_delta must lie in (0, sigma0/10)");
        grid_from(c.superposition_grid, 1);
    }
    for (const auto& [name, order] : c.infinitesimal) {
        try {
            generator(name);
        } catch (const ConfigError& e) {
            fail(e.what());
        }
        if (name == "rotation" && s.dim < 2) fail("rotation needs two dimensions");
        if (order < 1 || order > 4) fail("infinitesimal orders lie in 1..4");
    }
    if (!c.infinitesimal.empty() && !(c.infinitesimal_eps > 0.0 && c.infinitesimal_probe_dt > 0.0))
        fail("infinitesimal_eps and infinitesimal_probe_dt must be positive");
    if (s.output_dir.empty() || std::filesystem::path(s.output_dir).is_absolute() ||
        s.output_dir.find("..") != std::string::npos)
        fail("output.dir must be a relative path below the output root");
}

json resolved_config(const Scenario& s) {
    json st{{"kind", to_string(s.state.kind)}, {"sigma0", s.state.sigma0}, {"omega", s.state.omega},
            {"x0", s.state.x0}, {"p0", s.state.p0}};
    if (s.state.kind == StateKind::Gaussian) {
        st["center"] = s.state.center;
        st["momentum"] = s.state.momentum;
    }
    const auto& in = s.integration;
    const auto& c = s.checks;
    json charges = json::array();
    for (const auto& q : c.charges)
        charges.push_back(json{{"kind", to_string(q.selector.kind)}, {"axis", q.selector.axis},
                               {"axis2", q.selector.axis2}, {"tolerance", q.tolerance}});
    json inf = json::array();
    for (const auto& [name, order] : c.infinitesimal)
        inf.push_back(json{{"generator", name}, {"order", order}});
    return json{
        {"name", s.name},
        {"summary", s.summary},
        {"exercises", s.exercises},
        {"physics", {{"hbar", s.phys.hbar}, {"mass", s.phys.mass}}},
        {"state", st},
        {"potential", {{"kind", s.potential_kind}, {"omega", s.potential_omega}}},
        {"grid", {{"dim", s.dim}, {"lo", s.grid.lo}, {"hi", s.grid.hi}, {"counts", s.grid.counts}}},
        {"integration",
         {{"t_end", in.t_end}, {"snapshot_every", in.snapshot_every}, {"cfl", in.cfl}, {"dt", in.dt},
          {"form", in.form == ForceForm::Weber ? "weber" : "stress"},
          {"stabilization", in.stabilization}, {"frozen_core", in.frozen_core},
          {"frozen_outer", in.frozen_outer}}},
        {"oracle", {{"enabled", s.oracle.enabled}, {"grid", grid_json(s.oracle.grid)}, {"dt", s.oracle.dt}}},
        {"checks",
         {{"trajectory", trajectory_name(c.trajectory)},
          {"trajectory_tol", c.trajectory_tol},
          {"mass_fraction", c.mass_fraction},
          {"centroid_tol", c.centroid_tol},
          {"density_drift_tol", c.density_drift_tol},
          {"reconstruction", c.reconstruction},
          {"fidelity_min", c.fidelity_min},
          {"amplitude_l2_max", c.amplitude_l2_max},
          {"charges", charges},
          {"energy_expected", c.energy_expected},
          {"energy_tol", c.energy_tol},
          {"cross_picture", c.cross_picture},
          {"cross_picture_tol", c.cross_picture_tol},
          {"weber_tol", c.weber_tol},
          {"cofactor_tol", c.cofactor_tol},
          {"circulation_radii", c.circulation_radii},
          {"circulation_points", c.circulation_points},
          {"circulation_tol", c.circulation_tol},
          {"relabel_families", c.relabel_families},
          {"relabel_tol", c.relabel_tol},
          {"uniform_relabel", c.uniform_relabel},
          {"uniform_relabel_count", c.uniform_relabel_count},
          {"uniform_relabel_tail", c.uniform_relabel_tail},
          {"uniform_relabel_mass", c.uniform_relabel_mass},
          {"uniform_relabel_tol", c.uniform_relabel_tol},
          {"superposition_delta", c.superposition_delta},
          {"superposition_grid", grid_json(c.superposition_grid)},
          {"superposition_residual_tol", c.superposition_residual_tol},
          {"superposition_match_tol", c.superposition_match_tol},
          {"infinitesimal", inf},
          {"infinitesimal_eps", c.infinitesimal_eps},
          {"infinitesimal_probe_dt", c.infinitesimal_probe_dt},
          {"infinitesimal_ratio_tol", c.infinitesimal_ratio_tol}}},
        {"output", {{"dir", s.output_dir}, {"snapshots", s.write_snapshots}}},
    };
}

InitialData make_initial_data(const Scenario& s, const LabelGrid& grid) {
    const int d = s.dim;
    const std::size_t n = grid.size();
    Field L(n);
    if (s.state.kind == StateKind::Vortex2D) {
        const double l2 = s.phys.hbar / (s.phys.mass * s.state.omega);
        VectorField v(2, Field(n));
        for (std::size_t p = 0; p < n; ++p) {
            const double x = grid.coord(p, 0), y = grid.coord(p, 1), r2 = x * x + y * y;
            if (r2 == 0.0) throw ConfigError("the vortex-2d state needs a grid without a node on the axis");
            L[p] = std::log(r2 / l2) - r2 / l2 - std::log(M_PI * l2);
            v[0][p] = -s.phys.hbar / s.phys.mass * y / r2;
            v[1][p] = s.phys.hbar / s.phys.mass * x / r2;
        }
        auto init = initial_data_from_velocity(grid, std::move(L), std::move(v), s.potential, s.phys);
        NodeMask frozen(n, 0);
        bool any = false;
        for (std::size_t p = 0; p < n; ++p) {
            const double r = std::hypot(grid.coord(p, 0), grid.coord(p, 1));
            frozen[p] = (r < s.integration.frozen_core * grid.min_spacing()) ||
                        (s.integration.frozen_outer > 0.0 && r > s.integration.frozen_outer);
            any = any || frozen[p];
        }
        if (any) init.set_frozen_mask(grid, std::move(frozen));
        return init;
    }
    const Packet pk = packet_of(s);
    Field S(n);
    const double s2 = pk.sigma * pk.sigma;
    for (std::size_t p = 0; p < n; ++p) {
        double r2 = 0.0, ph = 0.0;
        for (int i = 0; i < d; ++i) {
            const double a = grid.coord(p, i);
            r2 += (a - pk.center[i]) * (a - pk.center[i]);
            ph += pk.momentum[i] * a;
        }
        L[p] = -r2 / (2.0 * s2) - 0.5 * d * std::log(2.0 * M_PI * s2);
        S[p] = ph;
    }
    auto init = initial_data_from_phase(grid, std::move(L), std::move(S), s.potential, s.phys);
    const auto& in = s.integration;
    if (in.frozen_core > 0.0 || in.frozen_outer > 0.0) {
        NodeMask frozen(n, 0);
        for (std::size_t p = 0; p < n; ++p) {
            double r2 = 0.0;
            for (int i = 0; i < d; ++i) r2 += grid.coord(p, i) * grid.coord(p, i);
            const double r = std::sqrt(r2);
            frozen[p] = (r < in.frozen_core * grid.min_spacing()) ||
                        (in.frozen_outer > 0.0 && r > in.frozen_outer);
        }
        init.set_frozen_mask(grid, std::move(frozen));
    }
    return init;
}

ComplexField initial_wavefunction(const Scenario& s, const LabelGrid& xgrid) {
    using cd = std::complex<double>;
    ComplexField psi(xgrid.size());
    if (s.state.kind == StateKind::Vortex2D) {
        const double l2 = s.phys.hbar / (s.phys.mass * s.state.omega);
        for (std::size_t p = 0; p < xgrid.size(); ++p) {
            const double x = xgrid.coord(p, 0), y = xgrid.coord(p, 1);
            psi[p] = cd(x, y) * std::exp(-(x * x + y * y) / (2.0 * l2)) / std::sqrt(M_PI * l2 * l2);
        }
        return psi;
    }
    const Packet pk = packet_of(s);
    const double s2 = pk.sigma * pk.sigma;
    for (std::size_t p = 0; p < xgrid.size(); ++p) {
        double r2 = 0.0, ph = 0.0;
        for (int i = 0; i < s.dim; ++i) {
            const double x = xgrid.coord(p, i);
            r2 += (x - pk.center[i]) * (x - pk.center[i]);
            ph += pk.momentum[i] * x;
        }
        const double logamp = -r2 / (4.0 * s2) - 0.25 * s.dim * std::log(2.0 * M_PI * s2);
        psi[p] = std::exp(cd(logamp, ph / s.phys.hbar));
    }
    return psi;
}

Field relabel_stream_function(const Scenario& s, const LabelGrid& grid, const std::string& family) {
    if (grid.dim() != 2) throw ConfigError("stream-function relabel families are two-dimensional");
    const Packet pk = packet_of(s);
    const double w = pk.sigma;
    Field psi(grid.size(), 0.0);
    for (std::size_t p = 0; p < grid.size(); ++p) {
        const double x = grid.coord(p, 0) - pk.center[0], y = grid.coord(p, 1) - pk.center[1];
        const double r = std::hypot(x, y);
        if (family == "disc") {
            psi[p] = window((r - 0.8 * w) / (0.8 * w));
        } else if (family == "bump") {
            const double bx = x - 0.6 * w, by = y + 0.3 * w;
            const double d2 = (bx * bx + by * by) / (0.64 * w * w);
            psi[p] = d2 < 1.0 ? std::pow(1.0 - d2, 4) : 0.0;
        } else if (family == "ring") {
            const double u = (r - 1.2 * w) / (0.6 * w);
            const double c2 = r > 0.0 ? (x * x - y * y) / (r * r) : 0.0;  // cos 2 theta
            psi[p] = std::abs(u) < 1.0 ? c2 * std::pow(1.0 - u * u, 4) : 0.0;
        } else {
            throw ConfigError("unknown relabel family '" + family + "'");
        }
    }
    return psi;
}

bool Outcome::pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
}

namespace {

IntegrationConfig integration_config(const Scenario& s) {
    IntegrationConfig cfg;
    cfg.dt = s.integration.dt;
    cfg.cfl = s.integration.cfl;
    cfg.t_end = s.integration.t_end;
    cfg.snapshot_every = s.integration.snapshot_every;
    cfg.form = s.integration.form;
    cfg.stabilization = s.integration.stabilization;
    return cfg;
}

void trajectory_checks(const Scenario& s, const LabelGrid& grid, const InitialData& init,
                       Outcome& out) {
    const auto& c = s.checks;
    json& rep = out.report["trajectory"];
    const auto kind = analytic_kind(s.state.kind);
    const auto prm = analytic_params(s);
    const Packet pk = packet_of(s);
    const double half = std::sqrt(2.0) * boost::math::erf_inv(c.mass_fraction) * pk.sigma;
    const double width = grid.hi(0) - grid.lo(0);
    const auto good = init.good_fluid_mask();
    const auto w = quadrature_weights(grid);
    double rel = 0.0, absd = 0.0, centroid = 0.0, drift = 0.0;
    const double peak = *std::max_element(init.rho0.begin(), init.rho0.end());
    for (const auto& f : out.run.snapshots) {
        const double centre = analytic_trajectory(kind, prm, pk.center[0], 0, f.t);
        double cm = 0.0;
        for (std::size_t p = 0; p < grid.size(); ++p) {
            const double a = grid.coord(p, 0);
            const double exact = analytic_trajectory(kind, prm, a, 0, f.t);
            const double err = std::abs(f.q[0][p] - exact);
            if (std::abs(a - pk.center[0]) <= half && std::abs(exact - centre) > 1e-12)
                rel = std::max(rel, err / std::abs(exact - centre));
            if (good[p]) absd = std::max(absd, err);
            cm += w[p] * init.rho0[p] * f.q[0][p];
        }
        centroid = std::max(centroid, std::abs(cm - centre));
        if (c.density_drift_tol > 0.0) {
            const auto T = deformation(f, grid);
            for (std::size_t p = 0; p < grid.size(); ++p)
                if (good[p]) drift = std::max(drift, std::abs(init.rho0[p] / T.J[p] - init.rho0[p]) / peak);
        }
    }
    rep = json{{"relative_error_central_mass", rel}, {"central_half_width", half},
               {"max_abs_deviation", absd}, {"abs_deviation_over_width", absd / width},
               {"centroid_error", centroid}, {"density_drift", drift}};
    if (c.trajectory == TrajectoryCheck::Relative)
        out.checks.push_back(at_most("trajectory.relative", rel, c.trajectory_tol));
    if (c.trajectory == TrajectoryCheck::Absolute)
        out.checks.push_back(at_most("trajectory.deviation_over_width", absd / width, c.trajectory_tol));
    if (c.centroid_tol > 0.0) out.checks.push_back(at_most("trajectory.centroid", centroid, c.centroid_tol));
    if (c.density_drift_tol > 0.0)
        out.checks.push_back(at_most("trajectory.density_drift", drift, c.density_drift_tol));
}

void circulation_checks(const Scenario& s, const LabelGrid& grid, const InitialData& init,
                        Outcome& out) {
    const auto& c = s.checks;
    const double quantum = 2.0 * M_PI * s.phys.hbar / s.phys.mass;
    json arr = json::array();
    const double centre[2] = {0.0, 0.0};
    for (double R : c.circulation_radii) {
        const auto loop = circle_loop(centre, R, c.circulation_points);
        ChargeSeries series;
        series.name = "circulation";
        for (const auto& f : out.run.snapshots) series.push(f.t, circulation(f, init, grid, loop));
        series.scale = quantum;
        const double final_ratio = series.values.back() / quantum;
        const double drift = series.drift();
        arr.push_back(json{{"radius", R}, {"in_quanta_final", final_ratio}, {"drift", drift},
                           {"times", series.times}, {"values", series.values}});
        const std::string tag = "circulation.R" + fmt(R);
        out.checks.push_back(within(tag + ".quanta", final_ratio, 1.0, c.circulation_tol));
        out.checks.push_back(at_most(tag + ".drift", drift, c.circulation_tol));
        out.series["circulation_R" + fmt(R) + ".csv"] = std::move(series);
    }
    out.report["circulation"] = arr;
}

void charge_checks(const Scenario& s, const LabelGrid& grid, const InitialData& init,
                   const Propagation* oracle, Outcome& out) {
    const auto& c = s.checks;
    json rep = json::object();
    std::vector<double> times;
    std::vector<ComplexField> psis;
    LabelGrid xgrid;
    if (oracle) {
        xgrid = grid_from(s.oracle.grid, s.dim);
        for (const auto& w : oracle->snapshots) {
            times.push_back(w.t);
            psis.push_back(w.psi);
        }
    }
    for (const auto& req : c.charges) {
        const auto name = to_string(req.selector.kind);
        auto lag = schrodinger_charges(out.run.snapshots, init, grid, req.selector);
        json entry = json{{"lagrangian", series_json(lag)}};
        out.checks.push_back(at_most("charge." + name + ".drift", lag.drift(), req.tolerance));
        if (req.selector.kind == ChargeKind::Energy && c.energy_tol > 0.0)
            out.checks.push_back(within("charge.energy.value", lag.mean(), c.energy_expected, c.energy_tol));
        if (c.cross_picture && oracle) {
            auto wav = psi_side_charges(times, psis, xgrid, req.selector, s.potential, s.phys);
            if (wav.values.size() != lag.values.size())
                throw ConfigError("oracle and trajectory snapshots differ in number");
            double cross = 0.0;
            for (std::size_t k = 0; k < lag.values.size(); ++k)
                cross = std::max(cross, std::abs(lag.values[k] - wav.values[k]) /
                                            std::max(std::abs(wav.values[k]), lag.scale));
            entry["wavefunction"] = series_json(wav);
            entry["cross_picture"] = cross;
            out.checks.push_back(at_most("charge." + name + ".cross_picture", cross, c.cross_picture_tol));
            out.series["charges/" + name + "_psi.csv"] = std::move(wav);
        }
        out.series["charges/" + name + ".csv"] = std::move(lag);
        rep[name] = std::move(entry);
    }
    out.report["charges"] = std::move(rep);
}

void relabel_family_checks(const Scenario& s, const LabelGrid& grid, const InitialData& init,
                           Outcome& out) {
    json rep = json::object();
    for (const auto& family : s.checks.relabel_families) {
        const auto xi = stream_function_relabel(grid, init.rho0, relabel_stream_function(s, grid, family));
        auto res = relabel_charge(out.run.snapshots, init, grid, xi);
        rep[family] = json{{"constraint_residual", relabel_constraint_residual(grid, init.rho0, xi)},
                           {"series", series_json(res.series)},
                           {"current_norm", res.current_norm}};
        out.checks.push_back(at_most("relabel." + family + ".drift", res.series.drift(), s.checks.relabel_tol));
        res.series.name = "relabel_" + family;
        out.series["relabel/" + family + ".csv"] = std::move(res.series);
    }
    out.report["relabel_families"] = std::move(rep);
}

// Label at which the cumulative reference mass reaches `target`, by linear interpolation
// of the trapezoid cumulative sum.
double mass_quantile(const LabelGrid& grid, const Field& rho0, double target) {
    const int n = grid.count(0);
    const double h = grid.spacing(0);
    double cum = 0.0;
    for (int i = 1; i < n; ++i) {
        const double step = 0.5 * h * (rho0[i - 1] + rho0[i]);
        if (cum + step >= target) {
            const double f = step > 0.0 ? (target - cum) / step : 0.0;
            return grid.lo(0) + (i - 1 + f) * h;
        }
        cum += step;
    }
    return grid.hi(0);
}

void uniform_relabel_checks(const Scenario& s, const LabelGrid& grid, const InitialData& init,
                            Outcome& out) {
    const auto& c = s.checks;
    const auto map = uniform_density_relabel(grid, init.log_rho0, 1.0, c.uniform_relabel_count,
                                             c.uniform_relabel_tail);
    const double a_lo = mass_quantile(grid, init.rho0, 0.5 * (1.0 - c.uniform_relabel_mass));
    const double a_hi = mass_quantile(grid, init.rho0, 0.5 * (1.0 + c.uniform_relabel_mass));
    double drho = 0.0, dv = 0.0;
    json per = json::array();
    for (const auto& f : out.run.snapshots) {
        const auto rl = relabel(f, init, map, grid);
        const double ql = interpolate(grid, f.q[0], std::span<const double>(&a_lo, 1));
        const double qh = interpolate(grid, f.q[0], std::span<const double>(&a_hi, 1));
        const auto a = to_eulerian(f, deformation(f, grid), init.rho0, grid, grid);
        const auto b = to_eulerian(rl.flow, deformation(rl.flow, rl.grid), rl.init.rho0, rl.grid, grid);
        double sr = 0.0, sv = 0.0;
        for (std::size_t p = 0; p < grid.size(); ++p) {
            const double x = grid.coord(p, 0);
            if (x < ql || x > qh || !a.mask[p] || !b.mask[p]) continue;
            sr = std::max(sr, std::abs(a.rho[p] - b.rho[p]));
            sv = std::max(sv, std::abs(a.v[0][p] - b.v[0][p]));
        }
        per.push_back(json{{"t", f.t}, {"rho_linf", sr}, {"v_linf", sv}, {"x_range", {ql, qh}}});
        drho = std::max(drho, sr);
        dv = std::max(dv, sv);
    }
    out.report["uniform_relabel"] = json{{"new_grid", {{"lo", map.new_grid.lo(0)}, {"hi", map.new_grid.hi(0)},
                                                       {"counts", map.new_grid.count(0)}}},
                                         {"label_range", {a_lo, a_hi}},
                                         {"rho_linf", drho},
                                         {"v_linf", dv},
                                         {"snapshots", per}};
    out.checks.push_back(at_most("relabel.uniform.rho_linf", drho, c.uniform_relabel_tol));
    out.checks.push_back(at_most("relabel.uniform.v_linf", dv, c.uniform_relabel_tol));
}

void superposition_checks(const Scenario& s, const LabelGrid& grid, Outcome& out) {
    const auto& c = s.checks;
    auto at_width = [&](double sigma) {
        Scenario v = s;
        v.state.sigma0 = sigma;
        auto init = make_initial_data(v, grid);
        auto cfg = integration_config(v);
        cfg.snapshot_every = 0.0;
        auto flow = run(init, grid, cfg).snapshots.back();
        return std::pair{std::move(flow), std::move(init)};
    };
    const double d = c.superposition_delta;
    const auto [fm, im] = at_width(s.state.sigma0 - d);
    const auto [fp, ip] = at_width(s.state.sigma0 + d);
    const auto centre_init = make_initial_data(s, grid);
    const auto& fc = out.run.snapshots.back();
    const auto xgrid = grid_from(c.superposition_grid, 1);
    const auto rep = superposition_relabel(fm, im, fc, centre_init, fp, ip, d, grid, xgrid);
    out.report["superposition"] = json{{"parameter", "sigma0"},
                                       {"delta", d},
                                       {"t", fc.t},
                                       {"defining_residual", rep.defining_residual},
                                       {"eulerian_mismatch", rep.eulerian_mismatch}};
    out.checks.push_back(at_most("superposition.defining_residual", rep.defining_residual,
                                 c.superposition_residual_tol));
    out.checks.push_back(at_most("superposition.eulerian_mismatch", rep.eulerian_mismatch,
                                 c.superposition_match_tol));
}

void infinitesimal_checks(const Scenario& s, const LabelGrid& grid, const InitialData& init,
                          Outcome& out) {
    const auto& c = s.checks;
    const auto& f = out.run.snapshots.back();
    json rep = json::object();
    for (const auto& [name, order] : c.infinitesimal) {
        const auto g = generator(name);
        const auto r1 = apply_infinitesimal(f, init, grid, g, c.infinitesimal_eps, c.infinitesimal_probe_dt);
        const auto r2 = apply_infinitesimal(f, init, grid, g, 0.5 * c.infinitesimal_eps, c.infinitesimal_probe_dt);
        const double ratio = r1.residual / r2.residual;
        const double expected = std::pow(2.0, order);
        const auto adm = check_potential_admissibility(g, s.potential, s.dim, sample_points(grid), {0.0, f.t});
        rep[name] = json{{"t", f.t}, {"eps", c.infinitesimal_eps},
                         {"residual_eps", r1.residual}, {"residual_half_eps", r2.residual},
                         {"baseline", r1.baseline}, {"ratio", ratio}, {"expected_order", order},
                         {"admissible", adm.pass}, {"constraint", adm.constraint}};
        out.checks.push_back(within("infinitesimal." + name + ".ratio", ratio, expected,
                                    c.infinitesimal_ratio_tol * expected));
    }
    out.report["infinitesimal"] = std::move(rep);
}

void write_csv(const std::filesystem::path& path, const ChargeSeries& s) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write " + path.string());
    os << "time,value,drift\n" << std::setprecision(17);
    for (std::size_t k = 0; k < s.values.size(); ++k)
        os << s.times[k] << ',' << s.values[k] << ',' << s.excursion(k) << '\n';
}

void write_json(const std::filesystem::path& path, const json& j) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write " + path.string());
    os << j.dump(2) << '\n';
}

void write_f64(std::ofstream& os, const Field& f) {
    static_assert(std::endian::native == std::endian::little, "snapshot files are little-endian");
    os.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(f.size() * sizeof(double)));
}

}  // namespace

Outcome execute(const Scenario& s) {
    validate(s);
    Outcome out;
    out.scenario = s;
    const auto grid = label_grid(s);
    const auto init = make_initial_data(s, grid);
    out.run = run(init, grid, integration_config(s));
    const auto& diag = out.run.diagnostics;
    const auto& c = s.checks;

    out.report["scenario"] = s.name;
    out.report["config"] = resolved_config(s);
    std::vector<double> times;
    double cof = 0.0;
    for (const auto& f : out.run.snapshots) {
        times.push_back(f.t);
        cof = std::max(cof, cofactor_identity_residual(deformation(f, grid, init.frozen.excluded())));
    }
    const bool single_valued = !init.multivalued_phase();
    out.report["run"] = json{{"dt", diag.dt},
                             {"steps", diag.steps},
                             {"snapshot_times", times},
                             {"min_jacobian", diag.min_jacobian},
                             {"boundary_leakage", diag.boundary_leakage},
                             {"floored_nodes", diag.floored_nodes},
                             {"frozen_nodes", init.frozen.active()
                                                  ? std::count(init.frozen.mask.begin(), init.frozen.mask.end(), 1)
                                                  : 0},
                             {"cofactor_identity", cof},
                             {"single_valued_phase", single_valued},
                             {"weber_residual", diag.weber_residual},
                             {"weber_residual_per_snapshot", diag.weber_residual_per_snapshot}};
    out.checks.push_back(at_most("identity.cofactor", cof, c.cofactor_tol));
    // The velocity covector is a gradient only for a single-valued initial phase.
    if (single_valued) out.checks.push_back(at_most("identity.weber", diag.weber_residual, c.weber_tol));

    if (c.trajectory != TrajectoryCheck::None || c.centroid_tol > 0.0 || c.density_drift_tol > 0.0)
        trajectory_checks(s, grid, init, out);

    std::optional<Propagation> oracle;
    if (s.oracle.enabled) {
        const auto xgrid = grid_from(s.oracle.grid, s.dim);
        oracle = propagate_cn(xgrid, initial_wavefunction(s, xgrid), s.potential, s.phys, s.oracle.dt,
                              s.integration.t_end, s.integration.snapshot_every);
        out.report["oracle"] = json{{"dt", oracle->dt},
                                    {"steps", oracle->steps},
                                    {"max_norm_change", oracle->max_norm_change},
                                    {"warnings", oracle->warnings.messages}};
        if (c.reconstruction) {
            const auto wave = reconstruct(out.run.snapshots.back(), init, grid, xgrid);
            const auto cmp = compare_waves(wave.psi, oracle->snapshots.back().psi, xgrid, &wave.mask);
            json rec{{"t", wave.t}, {"fidelity", cmp.fidelity}, {"amplitude_l2", cmp.amplitude_l2},
                     {"density_l2", cmp.density_l2}, {"phase_error", cmp.phase_error}};
            if (has_closed_form(s.state.kind)) {
                const auto exact = analytic_solution(analytic_kind(s.state.kind), analytic_params(s), xgrid, wave.t);
                const auto ca = compare_waves(wave.psi, exact.psi, xgrid, &wave.mask);
                rec["closed_form"] = json{{"fidelity", ca.fidelity}, {"amplitude_l2", ca.amplitude_l2}};
            }
            out.report["reconstruction"] = rec;
            out.checks.push_back(at_least("reconstruction.fidelity", cmp.fidelity, c.fidelity_min));
            out.checks.push_back(at_most("reconstruction.amplitude_l2", cmp.amplitude_l2, c.amplitude_l2_max));
        }
    }

    if (!c.charges.empty()) charge_checks(s, grid, init, oracle ? &*oracle : nullptr, out);
    if (!c.circulation_radii.empty()) circulation_checks(s, grid, init, out);
    if (!c.relabel_families.empty()) relabel_family_checks(s, grid, init, out);
    if (c.uniform_relabel) uniform_relabel_checks(s, grid, init, out);
    if (c.superposition_delta != 0.0) superposition_checks(s, grid, out);
    if (!c.infinitesimal.empty()) infinitesimal_checks(s, grid, init, out);

    json checks = json::array();
    for (const auto& k : out.checks)
        checks.push_back(json{{"name", k.name}, {"value", k.value}, {"relation", k.relation},
                              {"target", k.target}, {"tolerance", k.tolerance}, {"pass", k.pass}});
    out.report["checks"] = checks;
    out.report["pass"] = out.pass();
    return out;
}

void write_artifacts(const Outcome& out, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    for (const auto& [name, series] : out.series) write_csv(dir / name, series);
    write_json(dir / "report.json", out.report);
    json summary{{"scenario", out.scenario.name}, {"pass", out.pass()}, {"checks", out.report["checks"]}};
    write_json(dir / "summary.json", summary);
    if (!out.scenario.write_snapshots || out.run.snapshots.empty()) return;

    const auto& first = out.run.snapshots.front();
    const int d = first.dim();
    std::ofstream os(dir / "snapshots.f64", std::ios::binary);
    if (!os) throw ConfigError("cannot write " + (dir / "snapshots.f64").string());
    json fields = json::array();
    for (int i = 0; i < d; ++i) fields.push_back("q" + std::to_string(i));
    for (int i = 0; i < d; ++i) fields.push_back("qdot" + std::to_string(i));
    fields.push_back("phase");
    std::vector<double> times;
    for (const auto& f : out.run.snapshots) {
        times.push_back(f.t);
        for (const auto& c : f.q) write_f64(os, c);
        for (const auto& c : f.qdot) write_f64(os, c);
        write_f64(os, f.phase);
    }
    const auto& g = out.scenario.grid;
    std::vector<int> shape(d, g.counts);
    json sidecar{{"file", "snapshots.f64"},
                 {"dtype", "float64"},
                 {"byte_order", "little"},
                 {"layout", "snapshot, field, node (row-major nodes, axis 0 slowest)"},
                 {"label_grid", {{"dim", d}, {"lo", g.lo}, {"hi", g.hi}, {"shape", shape}}},
                 {"fields", fields},
                 {"times", times},
                 {"nodes", first.size()}};
    write_json(dir / "snapshots.json", sidecar);
}

std::filesystem::path output_root() {
    if (const char* env = std::getenv("QHYDRO_OUTPUT_ROOT"); env && *env) return env;
    return "qhydro_out";
}

const std::vector<BundledScenario>& bundled_scenarios() {
    static const std::vector<BundledScenario> all = [] {
        std::vector<BundledScenario> v;
        for (const auto& [name, text] : kBundledScenarios) v.push_back({name, text});
        return v;
    }();
    return all;
}

Scenario bundled(const std::string& name) {
    for (const auto& b : bundled_scenarios())
        if (b.name == name) {
            std::istringstream in(b.text);
            return parse_scenario(in, name);
        }
    throw ConfigError("unknown scenario '" + name + "'");
}

namespace {

Scenario resolve(const std::string& what) {
    if (std::filesystem::exists(what)) return load_scenario(what);
    for (const auto& b : bundled_scenarios())
        if (b.name == what) return bundled(what);
    throw ConfigError("no scenario file or bundled scenario named '" + what + "'");
}

void print_checks(const Outcome& out) {
    for (const auto& k : out.checks) {
        std::cout << (k.pass ? "PASS " : "FAIL ") << k.name << " = " << fmt(k.value) << ' ' << k.relation << ' ';
        if (k.relation == "within") std::cout << fmt(k.target) << " +- ";
        std::cout << fmt(k.tolerance) << '\n';
    }
}

}  // namespace

int main_entry(int argc, char** argv) {
    CLI::App app{"Trajectory-based quantum hydrodynamics: scenario runner"};
    app.require_subcommand(1);
    std::string target;
    std::string out_dir;
    auto* run_cmd = app.add_subcommand("run", "Run a scenario file or bundled scenario");
    run_cmd->add_option("config", target, "Scenario INI file or bundled scenario name")->required();
    run_cmd->add_option("--output", out_dir, "Output directory (default: <root>/<output.dir>)");
    auto* list_cmd = app.add_subcommand("list", "List bundled scenarios");
    auto* describe_cmd = app.add_subcommand("describe", "Describe a bundled scenario");
    describe_cmd->add_option("name", target, "Bundled scenario name")->required();
    auto* validate_cmd = app.add_subcommand("validate", "Validate a scenario without running it");
    validate_cmd->add_option("config", target, "Scenario INI file or bundled scenario name")->required();
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (list_cmd->parsed()) {
            for (const auto& b : bundled_scenarios()) {
                const auto s = bundled(b.name);
                std::cout << s.name << "  " << s.summary << '\n';
            }
            return 0;
        }
        if (describe_cmd->parsed()) {
            const auto s = bundled(target);
            std::cout << s.name << "\n  " << s.summary << "\n  exercises: " << s.exercises << "\n\n"
                      << resolved_config(s).dump(2) << '\n';
            return 0;
        }
        const auto s = resolve(target);
        validate(s);
        if (validate_cmd->parsed()) {
            std::cout << "valid: " << s.name << '\n';
            return 0;
        }
        const auto outcome = execute(s);
        const std::filesystem::path dir = out_dir.empty() ? output_root() / s.output_dir : std::filesystem::path(out_dir);
        write_artifacts(outcome, dir);
        print_checks(outcome);
        std::cout << (outcome.pass() ? "scenario passed" : "scenario FAILED") << ": " << dir.string() << '\n';
        return outcome.pass() ? 0 : 1;
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return 2;
    } catch (const InadmissibleError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return 2;
    } catch (const MeshTanglingError& e) {
        std::cerr << "runtime failure: " << e.what() << '\n';
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "runtime failure: " << e.what() << '\n';
        return 3;
    } catch (const UnsupportedTransformError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return 2;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "runtime failure: " << e.what() << '\n';
        return 3;
    }
}

}  // namespace qhydro::cli

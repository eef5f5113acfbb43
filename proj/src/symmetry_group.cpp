#include "qhydro/symmetry_group.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "qhydro/errors.hpp"

namespace qhydro {

namespace {

int omega_slot(int i, int j) {
    // (0,1) -> 0, (0,2) -> 1, (1,2) -> 2
    return i == 0 ? j - 1 : 2;
}

}  // namespace

GroupParams GroupParams::time_translation(double d) {
    GroupParams g;
    g.d = d;
    return g;
}

GroupParams GroupParams::dilation(double beta) {
    GroupParams g;
    g.beta = beta;
    return g;
}

GroupParams GroupParams::extension(double alpha) {
    GroupParams g;
    g.alpha = alpha;
    return g;
}

GroupParams GroupParams::translation(int axis, double c) {
    GroupParams g;
    g.c.at(axis) = c;
    return g;
}

GroupParams GroupParams::boost(int axis, double u) {
    GroupParams g;
    g.u.at(axis) = u;
    return g;
}

GroupParams GroupParams::rotation(int i, int j, double w) {
    GroupParams g;
    g.set_omega(i, j, w);
    return g;
}

double GroupParams::omega(int i, int j) const {
    if (i == j) return 0.0;
    return i < j ? w_[omega_slot(i, j)] : -w_[omega_slot(j, i)];
}

void GroupParams::set_omega(int i, int j, double w) {
    if (i == j || i < 0 || j < 0 || i > 2 || j > 2)
        throw ConfigError("rotation needs two distinct axes");
    if (i < j)
        w_[omega_slot(i, j)] = w;
    else
        w_[omega_slot(j, i)] = -w;
}

bool GroupParams::is_identity() const {
    auto zero = [](const std::array<double, 3>& a) {
        return std::all_of(a.begin(), a.end(), [](double x) { return x == 0.0; });
    };
    return d == 0.0 && beta == 0.0 && alpha == 0.0 && zero(u) && zero(c) && zero(w_);
}

GroupParams GroupParams::scaled(double s) const {
    GroupParams g = *this;
    g.d *= s;
    g.beta *= s;
    g.alpha *= s;
    for (int i = 0; i < 3; ++i) {
        g.u[i] *= s;
        g.c[i] *= s;
        g.w_[i] *= s;
    }
    return g;
}

double GroupParams::xi0(double t) const { return d + beta * t + alpha * t * t; }

double GroupParams::dxi0_dt(double t) const { return beta + 2.0 * alpha * t; }

void GroupParams::eta(std::span<const double> q, double t, std::span<double> out) const {
    const int dim = static_cast<int>(q.size());
    const double s = 0.5 * beta + alpha * t;
    for (int i = 0; i < dim; ++i) {
        double e = s * q[i] - u[i] * t + c[i];
        for (int j = 0; j < dim; ++j) e += omega(i, j) * q[j];
        out[i] = e;
    }
}

namespace {

struct ConstraintTerms {
    double residual = 0.0;
    double magnitude = 0.0;
};

ConstraintTerms evaluate_constraint(const GroupParams& g, const PotentialSpec& V, int dim,
                                    const std::array<double, 3>& x, double t) {
    std::array<double, 3> grad{}, eta{};
    const auto q = std::span<const double>(x.data(), dim);
    V.gradient(q, t, std::span(grad).first(dim));
    g.eta(q, t, std::span(eta).first(dim));
    double a = 0.0;
    for (int i = 0; i < dim; ++i) a += eta[i] * grad[i];
    const double b = g.xi0(t) * V.time_derivative(q, t);
    const double c = V.value(q, t) * g.dxi0_dt(t);
    return {a + b + c, std::max({std::abs(a), std::abs(b), std::abs(c)})};
}

struct Generator {
    GroupParams part;
    std::string formula;
};

std::vector<Generator> generators(const GroupParams& g, int dim) {
    std::vector<Generator> out;
    if (g.d != 0.0)
        out.push_back({GroupParams::time_translation(g.d), "time translation requires dV/dt = 0"});
    if (g.beta != 0.0)
        out.push_back({GroupParams::dilation(g.beta),
                       "dilation requires q_i dV/dq_i + 2 t dV/dt + 2 V = 0"});
    if (g.alpha != 0.0)
        out.push_back({GroupParams::extension(g.alpha),
                       "extension requires q_i dV/dq_i + t dV/dt + 2 V = 0"});
    for (int i = 0; i < dim; ++i) {
        if (g.c[i] != 0.0)
            out.push_back({GroupParams::translation(i, g.c[i]),
                           "translation requires c_i dV/dq_i = 0"});
        if (g.u[i] != 0.0)
            out.push_back({GroupParams::boost(i, g.u[i]), "boost requires u_i dV/dq_i = 0"});
        for (int j = i + 1; j < dim; ++j)
            if (g.omega(i, j) != 0.0)
                out.push_back({GroupParams::rotation(i, j, g.omega(i, j)),
                               "rotation requires omega_ij q_j dV/dq_i = 0"});
    }
    return out;
}

}  // namespace

AdmissibilityReport check_potential_admissibility(const GroupParams& params,
                                                  const PotentialSpec& potential, int dim,
                                                  const std::vector<std::array<double, 3>>& points,
                                                  const std::vector<double>& times) {
    AdmissibilityReport r;
    double scale = 1.0, worst = 0.0;
    for (double t : times)
        for (const auto& x : points) {
            const auto c = evaluate_constraint(params, potential, dim, x, t);
            worst = std::max(worst, std::abs(c.residual));
            scale = std::max(scale, c.magnitude);
        }
    r.max_residual = worst;
    r.scale = scale;
    r.pass = worst <= 1e-8 * scale;
    if (r.pass) return r;

    std::string text;
    for (const auto& gen : generators(params, dim)) {
        double gw = 0.0, gs = 1.0;
        for (double t : times)
            for (const auto& x : points) {
                const auto c = evaluate_constraint(gen.part, potential, dim, x, t);
                gw = std::max(gw, std::abs(c.residual));
                gs = std::max(gs, c.magnitude);
            }
        if (gw > 1e-8 * gs) text += (text.empty() ? "" : "; ") + gen.formula;
    }
    r.constraint = text.empty() ? "eta_i dV/dq_i + xi0 dV/dt + V dxi0/dt = 0" : text;
    return r;
}

std::vector<std::array<double, 3>> sample_points(const LabelGrid& grid, std::size_t stride) {
    std::vector<std::array<double, 3>> pts;
    for (std::size_t p = 0; p < grid.size(); p += std::max<std::size_t>(stride, 1)) {
        const auto x = grid.point(p);
        pts.push_back({x[0], x[1], x[2]});
    }
    return pts;
}

std::vector<double> rotation_matrix(const GroupParams& params, int dim) {
    std::vector<double> W(dim * dim, 0.0);
    double norm = 0.0;
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) {
            W[i * dim + j] = params.omega(i, j);
            norm = std::max(norm, std::abs(W[i * dim + j]));
        }
    // scaling and squaring with a Taylor series
    int squarings = 0;
    while (norm > 0.25) {
        norm *= 0.5;
        ++squarings;
    }
    const double s = std::ldexp(1.0, -squarings);
    for (auto& w : W) w *= s;
    auto mul = [dim](const std::vector<double>& A, const std::vector<double>& B) {
        std::vector<double> C(dim * dim, 0.0);
        for (int i = 0; i < dim; ++i)
            for (int k = 0; k < dim; ++k)
                for (int j = 0; j < dim; ++j) C[i * dim + j] += A[i * dim + k] * B[k * dim + j];
        return C;
    };
    std::vector<double> R(dim * dim, 0.0), term(dim * dim, 0.0);
    for (int i = 0; i < dim; ++i) R[i * dim + i] = term[i * dim + i] = 1.0;
    for (int k = 1; k <= 18; ++k) {
        term = mul(term, W);
        for (auto& x : term) x /= k;
        for (int i = 0; i < dim * dim; ++i) R[i] += term[i];
    }
    for (int k = 0; k < squarings; ++k) R = mul(R, R);
    return R;
}

namespace {

void require_finite_subgroup(const GroupParams& g) {
    if (g.beta != 0.0 || g.alpha != 0.0)
        throw UnsupportedTransformError(
            "dilation and extension have infinitesimal implementations only");
}

}  // namespace

FlowState apply_finite_transform(const FlowState& flow, const GroupParams& g,
                                 const Physics& phys) {
    require_finite_subgroup(g);
    const int d = flow.dim();
    const std::size_t n = flow.size();
    FlowState o = flow;
    double u2 = 0.0;
    for (int i = 0; i < d; ++i) u2 += g.u[i] * g.u[i];
    for (std::size_t p = 0; p < n; ++p) {
        double ux = 0.0;
        for (int i = 0; i < d; ++i) {
            o.q[i][p] += g.c[i];
            ux += g.u[i] * o.q[i][p];
        }
        if (!o.phase.empty()) o.phase[p] -= phys.mass * (ux - 0.5 * u2 * flow.t);
        for (int i = 0; i < d; ++i) {
            o.q[i][p] -= g.u[i] * flow.t;
            o.qdot[i][p] -= g.u[i];
        }
    }
    if (d > 1) {
        const auto R = rotation_matrix(g, d);
        std::array<double, kMaxDim> q{}, v{};
        for (std::size_t p = 0; p < n; ++p) {
            for (int i = 0; i < d; ++i) {
                q[i] = o.q[i][p];
                v[i] = o.qdot[i][p];
            }
            for (int i = 0; i < d; ++i) {
                double rq = 0.0, rv = 0.0;
                for (int j = 0; j < d; ++j) {
                    rq += R[i * d + j] * q[j];
                    rv += R[i * d + j] * v[j];
                }
                o.q[i][p] = rq;
                o.qdot[i][p] = rv;
            }
        }
    }
    o.t = flow.t + g.d;
    return o;
}

EulerianField apply_finite_transform(const EulerianField& f, const GroupParams& g,
                                     const Physics& phys) {
    require_finite_subgroup(g);
    const LabelGrid& grid = f.xgrid;
    const int d = grid.dim();
    const auto R = rotation_matrix(g, d);
    const bool has_psi = !f.psi.empty();
    Field re, im;
    if (has_psi) {
        re.resize(f.psi.size());
        im.resize(f.psi.size());
        for (std::size_t p = 0; p < f.psi.size(); ++p) {
            re[p] = f.psi[p].real();
            im[p] = f.psi[p].imag();
        }
    }
    double u2 = 0.0;
    for (int i = 0; i < d; ++i) u2 += g.u[i] * g.u[i];

    EulerianField o;
    o.xgrid = grid;
    o.t = f.t + g.d;
    o.rho.assign(grid.size(), 0.0);
    o.v.assign(d, Field(grid.size(), 0.0));
    o.mask.assign(grid.size(), 0);
    if (has_psi) o.psi.assign(grid.size(), {});
    std::array<double, kMaxDim> src{}, shifted{}, v{};
    for (std::size_t p = 0; p < grid.size(); ++p) {
        const auto x = grid.point(p);
        // undo the rotation, the boost and the translation in turn
        for (int i = 0; i < d; ++i) {
            double s = 0.0;
            for (int j = 0; j < d; ++j) s += R[j * d + i] * x[j];
            shifted[i] = s + g.u[i] * f.t;  // position after translation, before boost
            src[i] = shifted[i] - g.c[i];
        }
        bool inside = true;
        for (int i = 0; i < d; ++i)
            inside = inside && src[i] >= grid.lo(i) && src[i] <= grid.hi(i);
        if (!inside) continue;
        const auto pt = std::span<const double>(src.data(), d);
        if (!f.mask.empty()) {
            // masked source: nearest node must be valid
            std::array<int, kMaxDim> m{};
            for (int i = 0; i < d; ++i)
                m[i] = static_cast<int>(std::lround((src[i] - grid.lo(i)) / grid.spacing(i)));
            if (!f.mask[grid.index(std::span<const int>(m.data(), d))]) continue;
        }
        o.mask[p] = 1;
        o.rho[p] = interpolate(grid, f.rho, pt);
        for (int i = 0; i < d; ++i) v[i] = interpolate(grid, f.v[i], pt) - g.u[i];
        for (int i = 0; i < d; ++i) {
            double s = 0.0;
            for (int j = 0; j < d; ++j) s += R[i * d + j] * v[j];
            o.v[i][p] = s;
        }
        if (has_psi) {
            double ux = 0.0;
            for (int i = 0; i < d; ++i) ux += g.u[i] * shifted[i];
            const double dS = -phys.mass * (ux - 0.5 * u2 * f.t);
            o.psi[p] = std::complex<double>(interpolate(grid, re, pt), interpolate(grid, im, pt)) *
                       std::polar(1.0, dS / phys.hbar);
        }
    }
    return o;
}

namespace {

FlowState evolve_to(const FlowState& flow, const InitialData& init, const LabelGrid& grid,
                    double target, double max_dt) {
    const double span = target - flow.t;
    const auto n = static_cast<std::size_t>(std::ceil(std::abs(span) / max_dt - 1e-12));
    FlowState s = flow;
    if (n == 0) return s;
    const double h = span / static_cast<double>(n);
    for (std::size_t k = 0; k < n; ++k) s = step(s, init, grid, h);
    s.t = target;
    return s;
}

// q'(a, T) for the flow through `flow`: solves t + eps xi0(t) = T by fixed point.
FlowState transformed_at(const FlowState& flow, const InitialData& init, const LabelGrid& grid,
                         const GroupParams& g, double eps, double T, double max_dt) {
    double t = T;
    for (int it = 0; it < 50; ++it) {
        const double next = T - eps * g.xi0(t);
        if (std::abs(next - t) <= 1e-15 * std::max(1.0, std::abs(T))) {
            t = next;
            break;
        }
        t = next;
    }
    FlowState s = evolve_to(flow, init, grid, t, max_dt);
    const int d = grid.dim();
    std::array<double, kMaxDim> q{}, eta{};
    for (std::size_t p = 0; p < grid.size(); ++p) {
        for (int i = 0; i < d; ++i) q[i] = s.q[i][p];
        g.eta(std::span<const double>(q.data(), d), t, std::span(eta).first(d));
        for (int i = 0; i < d; ++i) s.q[i][p] += eps * eta[i];
    }
    s.t = T;
    return s;
}

struct ElResidual {
    VectorField r;
    FlowState centre;
};

ElResidual el_residual(const FlowState& flow, const InitialData& init, const LabelGrid& grid,
                       const GroupParams& g, double eps, double probe_dt) {
    const double T = flow.t;
    const double sub = probe_dt / 4.0;
    std::array<FlowState, 5> s;
    for (int k = -2; k <= 2; ++k)
        s[k + 2] = transformed_at(flow, init, grid, g, eps, T + k * probe_dt, sub);
    const int d = grid.dim();
    ElResidual out;
    out.centre = s[2];
    const double h2 = 12.0 * probe_dt * probe_dt;
    const double h1 = 12.0 * probe_dt;
    for (int i = 0; i < d; ++i)
        for (std::size_t p = 0; p < grid.size(); ++p)
            out.centre.qdot[i][p] =
                (s[0].q[i][p] - 8.0 * s[1].q[i][p] + 8.0 * s[3].q[i][p] - s[4].q[i][p]) / h1;
    const auto a = acceleration(out.centre, init.log_rho0, init.potential, grid, init.phys,
                                ForceForm::Weber, &init.frozen);
    out.r.assign(d, Field(grid.size()));
    for (int i = 0; i < d; ++i)
        for (std::size_t p = 0; p < grid.size(); ++p) {
            const double qdd = (-s[0].q[i][p] + 16.0 * s[1].q[i][p] - 30.0 * s[2].q[i][p] +
                                16.0 * s[3].q[i][p] - s[4].q[i][p]) / h2;
            out.r[i][p] = qdd - a.acc[i][p];
        }
    return out;
}

}  // namespace

InfinitesimalResult apply_infinitesimal(const FlowState& flow, const InitialData& init,
                                        const LabelGrid& grid, const GroupParams& params,
                                        double eps, double probe_dt) {
    if (!(probe_dt > 0.0)) throw ConfigError("probe step must be positive");
    const auto base = el_residual(flow, init, grid, params, 0.0, probe_dt);
    const auto moved = eps == 0.0 ? base : el_residual(flow, init, grid, params, eps, probe_dt);
    const auto good = init.good_fluid_mask();
    const auto w = quadrature_weights(grid);
    double num = 0.0, den = 0.0;
    for (std::size_t p = 0; p < grid.size(); ++p) {
        if (!good[p]) continue;
        for (int i = 0; i < grid.dim(); ++i) {
            const double diff = moved.r[i][p] - base.r[i][p];
            num += w[p] * init.rho0[p] * diff * diff;
            den += w[p] * init.rho0[p] * base.r[i][p] * base.r[i][p];
        }
    }
    InfinitesimalResult out;
    out.transformed = moved.centre;
    out.transformed.phase = flow.phase;
    out.residual = std::sqrt(num);
    out.baseline = std::sqrt(den);
    return out;
}

RelabelMap identity_relabel(const LabelGrid& grid) {
    RelabelMap m;
    m.new_grid = grid;
    m.name = "identity";
    m.source.assign(grid.dim(), Field(grid.size()));
    for (std::size_t p = 0; p < grid.size(); ++p)
        for (int k = 0; k < grid.dim(); ++k) m.source[k][p] = grid.coord(p, k);
    m.D.assign(grid.size(), 1.0);
    return m;
}

RelabelMap affine_relabel(const LabelGrid& grid, std::span<const double> scale,
                          std::span<const double> shift) {
    const int d = grid.dim();
    if (static_cast<int>(scale.size()) != d || static_cast<int>(shift.size()) != d)
        throw ConfigError("affine relabel needs one scale and shift per axis");
    double D = 1.0;
    std::vector<std::array<double, 2>> ext(d);
    std::vector<int> counts(d);
    for (int k = 0; k < d; ++k) {
        if (!(scale[k] > 0.0)) throw ConfigError("relabel Jacobian must be positive");
        D *= scale[k];
        ext[k] = {scale[k] * grid.lo(k) + shift[k], scale[k] * grid.hi(k) + shift[k]};
        counts[k] = grid.count(k);
    }
    RelabelMap m;
    m.name = "affine";
    m.new_grid = make_grid(d, ext, counts);
    m.source.assign(d, Field(m.new_grid.size()));
    for (std::size_t p = 0; p < m.new_grid.size(); ++p)
        for (int k = 0; k < d; ++k)
            m.source[k][p] = (m.new_grid.coord(p, k) - shift[k]) / scale[k];
    m.D.assign(m.new_grid.size(), D);
    return m;
}

namespace {

constexpr std::array<double, 8> kGaussX{-0.9602898564975363, -0.7966664774136267,
                                        -0.5255324099163290, -0.1834346424956498,
                                        0.1834346424956498,  0.5255324099163290,
                                        0.7966664774136267,  0.9602898564975363};
constexpr std::array<double, 8> kGaussW{0.1012285362903763, 0.2223810344533745,
                                        0.3137066661229167, 0.3626837833783620,
                                        0.3626837833783620, 0.3137066661229167,
                                        0.2223810344533745, 0.1012285362903763};

double rho_at(const LabelGrid& grid, const Field& log_rho0, double a) {
    return std::exp(interpolate(grid, log_rho0, std::span<const double>(&a, 1)));
}

double mass_between(const LabelGrid& grid, const Field& log_rho0, double x0, double x1) {
    const double half = 0.5 * (x1 - x0), mid = 0.5 * (x0 + x1);
    double s = 0.0;
    for (std::size_t k = 0; k < kGaussX.size(); ++k)
        s += kGaussW[k] * rho_at(grid, log_rho0, mid + half * kGaussX[k]);
    return s * half;
}

}  // namespace

RelabelMap uniform_density_relabel(const LabelGrid& grid, const Field& log_rho0, double k,
                                   int count, double tail) {
    if (grid.dim() != 1) throw ConfigError("the uniform-density relabel is one-dimensional");
    if (!(k > 0.0)) throw ConfigError("uniform density must be positive");
    if (!(tail > 0.0 && tail < 0.5)) throw ConfigError("tail fraction must lie in (0, 0.5)");
    const int n = grid.count(0);
    const double h = grid.spacing(0);
    Field cum(n, 0.0);
    for (int i = 1; i < n; ++i)
        cum[i] = cum[i - 1] + mass_between(grid, log_rho0, grid.lo(0) + (i - 1) * h,
                                           grid.lo(0) + i * h);
    const double total = cum[n - 1];
    const double lo = tail * total / k, hi = (1.0 - tail) * total / k;
    std::array<double, 2> ext{lo, hi};
    RelabelMap m;
    m.name = "uniform-density";
    m.new_grid = make_grid(1, std::span(&ext, 1), std::span(&count, 1));
    m.source.assign(1, Field(count));
    m.D.assign(count, 0.0);
    for (int j = 0; j < count; ++j) {
        const double target = k * m.new_grid.coord(j, 0);
        const int cell = static_cast<int>(std::upper_bound(cum.begin(), cum.end(), target) -
                                          cum.begin()) - 1;
        const int c = std::clamp(cell, 0, n - 2);
        const double left = grid.lo(0) + c * h;
        // Newton on M(a) = target inside the cell, safeguarded by bisection
        double a = left + 0.5 * h, lo_a = left, hi_a = left + h;
        for (int it = 0; it < 60; ++it) {
            const double M = cum[c] + mass_between(grid, log_rho0, left, a);
            const double f = M - target;
            if (f > 0) hi_a = a; else lo_a = a;
            double next = a - f / rho_at(grid, log_rho0, a);
            if (!(next > lo_a && next < hi_a)) next = 0.5 * (lo_a + hi_a);
            if (std::abs(next - a) < 1e-15 * std::max(1.0, std::abs(a))) {
                a = next;
                break;
            }
            a = next;
        }
        m.source[0][j] = a;
        m.D[j] = rho_at(grid, log_rho0, a) / k;
    }
    return m;
}

Relabelled relabel(const FlowState& flow, const InitialData& init, const RelabelMap& map,
                   const LabelGrid& grid) {
    const int d = grid.dim();
    const LabelGrid& ng = map.new_grid;
    if (ng.dim() != d || static_cast<int>(map.source.size()) != d)
        throw ConfigError("relabel map dimension differs from the flow");
    for (std::size_t p = 0; p < ng.size(); ++p) {
        if (!(map.D[p] > 0.0)) throw ConfigError("relabel Jacobian must be positive");
        for (int k = 0; k < d; ++k) {
            const double a = map.source[k][p];
            const double tol = 1e-12 * (grid.hi(k) - grid.lo(k));
            if (a < grid.lo(k) - tol || a > grid.hi(k) + tol)
                throw ConfigError("relabel source lies outside the label domain");
        }
    }
    auto sample = [&](const Field& f) {
        Field out(ng.size());
        std::array<double, kMaxDim> a{};
        for (std::size_t p = 0; p < ng.size(); ++p) {
            for (int k = 0; k < d; ++k) a[k] = map.source[k][p];
            out[p] = interpolate(grid, f, std::span<const double>(a.data(), d));
        }
        return out;
    };

    Relabelled r;
    r.grid = ng;
    r.flow.t = flow.t;
    for (int i = 0; i < d; ++i) {
        r.flow.q.push_back(sample(flow.q[i]));
        r.flow.qdot.push_back(sample(flow.qdot[i]));
    }
    r.flow.phase = sample(flow.phase);

    InitialData& ni = r.init;
    ni.log_rho0 = sample(init.log_rho0);
    for (std::size_t p = 0; p < ng.size(); ++p) ni.log_rho0[p] -= std::log(map.D[p]);
    ni.rho0.resize(ng.size());
    for (std::size_t p = 0; p < ng.size(); ++p) ni.rho0[p] = std::exp(ni.log_rho0[p]);
    if (init.S0) ni.S0 = sample(*init.S0);
    for (int i = 0; i < d; ++i) ni.v0.push_back(sample(init.v0[i]));
    VectorField q0;
    if (init.q0) {
        for (int i = 0; i < d; ++i) q0.push_back(sample((*init.q0)[i]));
    } else {
        q0 = map.source;
    }
    ni.q0 = std::move(q0);
    ni.potential = init.potential;
    ni.phys = init.phys;
    return r;
}

double relabel_constraint_residual(const LabelGrid& grid, const Field& rho0, const VectorField& xi) {
    const int d = grid.dim();
    Field div(grid.size(), 0.0);
    double scale = 0.0;
    for (int i = 0; i < d; ++i) {
        Field flux(grid.size());
        for (std::size_t p = 0; p < grid.size(); ++p) {
            flux[p] = rho0[p] * xi[i][p];
            scale = std::max(scale, std::abs(flux[p]));
        }
        const auto df = derivative(grid, flux, 1, i);
        for (std::size_t p = 0; p < grid.size(); ++p) div[p] += df[p];
    }
    if (scale == 0.0) return 0.0;
    double worst = 0.0;
    for (double x : div) worst = std::max(worst, std::abs(x));
    return worst / scale;
}

VectorField stream_function_relabel(const LabelGrid& grid, const Field& rho0, const Field& psi) {
    if (grid.dim() != 2) throw ConfigError("stream-function relabel fields are two-dimensional");
    const auto d1 = derivative(grid, psi, 1, 0);
    const auto d2 = derivative(grid, psi, 1, 1);
    VectorField xi(2, Field(grid.size()));
    for (std::size_t p = 0; p < grid.size(); ++p) {
        xi[0][p] = d2[p] / rho0[p];
        xi[1][p] = -d1[p] / rho0[p];
    }
    return xi;
}

VectorField uniform_flux_relabel(const LabelGrid& grid, const Field& rho0, double c) {
    if (grid.dim() != 1) throw ConfigError("uniform-flux relabel fields are one-dimensional");
    VectorField xi(1, Field(grid.size()));
    for (std::size_t p = 0; p < grid.size(); ++p) xi[0][p] = c / rho0[p];
    return xi;
}

SuperpositionReport superposition_relabel(const FlowState& minus, const InitialData& init_minus,
                                          const FlowState& centre, const InitialData& init_centre,
                                          const FlowState& plus, const InitialData& init_plus,
                                          double delta, const LabelGrid& grid,
                                          const LabelGrid& xgrid) {
    const int d = grid.dim();
    for (const auto* f : {&minus, &plus})
        if (f->size() != centre.size() || f->dim() != d ||
            std::abs(f->t - centre.t) > 1e-12 * std::max(1.0, std::abs(centre.t)))
            throw ConfigError("superposition flows must share the label grid and time");
    if (!(delta > 0.0)) throw ConfigError("parameter step must be positive");

    const std::size_t n = grid.size();
    const auto T = deformation(centre, grid);
    const auto Tm = deformation(minus, grid);
    const auto Tp = deformation(plus, grid);
    VectorField dqdA(d, Field(n));
    for (int i = 0; i < d; ++i)
        for (std::size_t p = 0; p < n; ++p)
            dqdA[i][p] = (plus.q[i][p] - minus.q[i][p]) / (2.0 * delta);

    SuperpositionReport r;
    r.xi.assign(d, Field(n, 0.0));
    for (int j = 0; j < d; ++j)
        for (int i = 0; i < d; ++i) {
            const auto& C = T.cof[i * d + j];
            for (std::size_t p = 0; p < n; ++p) r.xi[j][p] -= C[p] * dqdA[i][p] / T.J[p];
        }

    const auto good = init_centre.good_fluid_mask();
    double worst = 0.0, scale = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
        if (!good[p]) continue;
        for (int i = 0; i < d; ++i) {
            double s = dqdA[i][p];
            for (int j = 0; j < d; ++j) s += T.F[i * d + j][p] * r.xi[j][p];
            worst = std::max(worst, std::abs(s));
            scale = std::max(scale, std::abs(dqdA[i][p]));
        }
    }
    r.defining_residual = scale > 0.0 ? worst / scale : worst;

    // implied: d/dA [rho0/J] at fixed a minus grad_x rho . dq/dA
    const auto rho_c = lagrangian_density(init_centre.rho0, T);
    const auto rho_m = lagrangian_density(init_minus.rho0, Tm);
    const auto rho_p = lagrangian_density(init_plus.rho0, Tp);
    const auto grad_rho = grad_q(grid, rho_c, T);
    Field implied(n);
    for (std::size_t p = 0; p < n; ++p) {
        double v = (rho_p[p] - rho_m[p]) / (2.0 * delta);
        for (int i = 0; i < d; ++i) v -= grad_rho[i][p] * dqdA[i][p];
        implied[p] = v;
    }
    const auto inv = invert_labels(centre, grid, xgrid);
    r.implied_drho_dA.xgrid = xgrid;
    r.implied_drho_dA.t = centre.t;
    r.implied_drho_dA.rho = sample_at_labels(grid, implied, inv);
    r.implied_drho_dA.mask = inv.in_hull;

    const auto em = to_eulerian(minus, Tm, init_minus.rho0, grid, xgrid);
    const auto ep = to_eulerian(plus, Tp, init_plus.rho0, grid, xgrid);
    r.direct_drho_dA.xgrid = xgrid;
    r.direct_drho_dA.t = centre.t;
    r.direct_drho_dA.rho.assign(xgrid.size(), 0.0);
    r.direct_drho_dA.mask.assign(xgrid.size(), 0);
    double num = 0.0, den = 0.0;
    const auto w = quadrature_weights(xgrid);
    for (std::size_t p = 0; p < xgrid.size(); ++p) {
        if (!(em.mask[p] && ep.mask[p] && inv.in_hull[p])) continue;
        r.direct_drho_dA.mask[p] = 1;
        const double direct = (ep.rho[p] - em.rho[p]) / (2.0 * delta);
        r.direct_drho_dA.rho[p] = direct;
        const double diff = r.implied_drho_dA.rho[p] - direct;
        num += w[p] * diff * diff;
        den += w[p] * direct * direct;
    }
    r.eulerian_mismatch = den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
    return r;
}

}  // namespace qhydro

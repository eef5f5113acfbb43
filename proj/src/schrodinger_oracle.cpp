#include "qhydro/schrodinger_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "qhydro/errors.hpp"

namespace qhydro {

namespace {

using cd = std::complex<double>;
constexpr cd kI{0.0, 1.0};

double norm_sum(const LabelGrid& xgrid, const ComplexField& psi) {
    double s = 0.0;
    for (const auto& z : psi) s += std::norm(z);
    return s * xgrid.cell_volume();
}

Field potential_samples(const LabelGrid& xgrid, const PotentialSpec& potential, double t) {
    Field V(xgrid.size());
    const int d = xgrid.dim();
    for (std::size_t p = 0; p < xgrid.size(); ++p) {
        auto pt = xgrid.point(p);
        V[p] = potential.value(std::span<const double>(pt.data(), d), t);
    }
    return V;
}

// Solves (1 + i tau A) x = (1 - i tau A) y in place on one grid line, with
// A = -c D2 + diag(V) and D2 the three-point second difference with zero exterior.
void cayley_line(std::vector<cd>& y, const std::vector<double>& V, double c_h2, double tau,
                 std::vector<cd>& cp, std::vector<cd>& rhs) {
    const std::size_t n = y.size();
    rhs.resize(n);
    cp.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        cd Ay = (2.0 * c_h2 + V[j]) * y[j];
        if (j > 0) Ay -= c_h2 * y[j - 1];
        if (j + 1 < n) Ay -= c_h2 * y[j + 1];
        rhs[j] = y[j] - kI * tau * Ay;
    }
    const cd off = -kI * tau * c_h2;
    // Thomas elimination; the matrix is complex symmetric and diagonally dominant
    cd denom = 1.0 + kI * tau * (2.0 * c_h2 + V[0]);
    cp[0] = off / denom;
    rhs[0] /= denom;
    for (std::size_t j = 1; j < n; ++j) {
        denom = 1.0 + kI * tau * (2.0 * c_h2 + V[j]) - off * cp[j - 1];
        cp[j] = off / denom;
        rhs[j] = (rhs[j] - off * rhs[j - 1]) / denom;
    }
    y[n - 1] = rhs[n - 1];
    for (std::size_t j = n - 1; j-- > 0;) y[j] = rhs[j] - cp[j] * y[j + 1];
}

void cayley_axis(const LabelGrid& xgrid, ComplexField& psi, const Field& V, double V_share,
                 int axis, double tau, const Physics& phys) {
    const int n = xgrid.count(axis);
    const std::size_t stride = xgrid.stride(axis);
    const double h = xgrid.spacing(axis);
    const double c_h2 = phys.hbar * phys.hbar / (2.0 * phys.mass) / (h * h);
    std::vector<cd> line(n), cp, rhs;
    std::vector<double> vline(n);
    for (std::size_t p = 0; p < xgrid.size(); ++p) {
        if (xgrid.multi_index(p)[axis] != 0) continue;
        for (int j = 0; j < n; ++j) {
            line[j] = psi[p + j * stride];
            vline[j] = V_share * V[p + j * stride];
        }
        cayley_line(line, vline, c_h2, tau, cp, rhs);
        for (int j = 0; j < n; ++j) psi[p + j * stride] = line[j];
    }
}

void check_finite(const ComplexField& psi) {
    for (std::size_t p = 0; p < psi.size(); ++p)
        if (!std::isfinite(psi[p].real()) || !std::isfinite(psi[p].imag()))
            throw NumericError("non-finite wavefunction", p);
}

}  // namespace

Propagation propagate_cn(const LabelGrid& xgrid, ComplexField psi0, const PotentialSpec& potential,
                         const Physics& phys, double dt, double t_end, double snapshot_every) {
    if (!(dt > 0.0)) throw ConfigError("oracle time step must be positive");
    if (t_end < 0.0) throw ConfigError("t_end must be non-negative");
    if (psi0.size() != xgrid.size()) throw ConfigError("wavefunction does not match the grid");
    check_finite(psi0);

    Propagation out;
    const double ppw = points_per_wavelength(xgrid, psi0, phys);
    if (ppw < 8.0)
        out.warnings.add("oracle grid resolves only " + std::to_string(ppw) +
                         " points per wavelength");

    const double interval = snapshot_every > 0.0 ? std::min(snapshot_every, t_end) : t_end;
    const std::size_t intervals =
        interval > 0.0 ? static_cast<std::size_t>(std::llround(t_end / interval)) : 0;
    const std::size_t per_interval =
        intervals > 0 ? static_cast<std::size_t>(std::ceil(t_end / intervals / dt - 1e-9)) : 0;
    out.dt = intervals > 0 ? t_end / static_cast<double>(intervals * per_interval) : dt;

    const int d = xgrid.dim();
    const double share = 1.0 / d;
    double t = 0.0;
    ComplexField psi = std::move(psi0);
    out.snapshots.push_back({t, psi});
    double norm = norm_sum(xgrid, psi);
    for (std::size_t k = 0; k < intervals; ++k) {
        for (std::size_t s = 0; s < per_interval; ++s) {
            const Field V = potential_samples(xgrid, potential, t + 0.5 * out.dt);
            const double tau = 0.5 * out.dt / phys.hbar;
            if (d == 1) {
                cayley_axis(xgrid, psi, V, 1.0, 0, tau, phys);
            } else {
                for (int ax = 0; ax < d - 1; ++ax)
                    cayley_axis(xgrid, psi, V, share, ax, 0.5 * tau, phys);
                cayley_axis(xgrid, psi, V, share, d - 1, tau, phys);
                for (int ax = d - 2; ax >= 0; --ax)
                    cayley_axis(xgrid, psi, V, share, ax, 0.5 * tau, phys);
            }
            ++out.steps;
            t = (static_cast<double>(k * per_interval + s + 1)) * out.dt;
            const double nn = norm_sum(xgrid, psi);
            out.max_norm_change = std::max(out.max_norm_change, std::abs(nn - norm));
            norm = nn;
        }
        check_finite(psi);
        out.snapshots.push_back({t, psi});
    }
    return out;
}

double points_per_wavelength(const LabelGrid& xgrid, const ComplexField& psi,
                             const Physics& phys) {
    const auto f = extract_fields(xgrid, psi, phys, 0.0);
    double vmax = 0.0;
    for (std::size_t p = 0; p < xgrid.size(); ++p) {
        if (!f.mask[p]) continue;
        double v2 = 0.0;
        for (const auto& c : f.v) v2 += c[p] * c[p];
        vmax = std::max(vmax, std::sqrt(v2));
    }
    if (vmax == 0.0) return std::numeric_limits<double>::infinity();
    const double wavelength = 2.0 * std::numbers::pi * phys.hbar / (phys.mass * vmax);
    return wavelength / xgrid.min_spacing();
}

ComplexField apply_hamiltonian(const LabelGrid& xgrid, const ComplexField& psi,
                               const PotentialSpec& potential, const Physics& phys, double t) {
    const Field V = potential_samples(xgrid, potential, t);
    ComplexField out(psi.size());
    const int d = xgrid.dim();
    for (std::size_t p = 0; p < psi.size(); ++p) {
        cd lap = 0.0;
        const auto idx = xgrid.multi_index(p);
        for (int ax = 0; ax < d; ++ax) {
            const std::size_t s = xgrid.stride(ax);
            const double h = xgrid.spacing(ax);
            const cd lo = idx[ax] > 0 ? psi[p - s] : cd{};
            const cd hi = idx[ax] + 1 < xgrid.count(ax) ? psi[p + s] : cd{};
            lap += (lo - 2.0 * psi[p] + hi) / (h * h);
        }
        out[p] = -phys.hbar * phys.hbar / (2.0 * phys.mass) * lap + V[p] * psi[p];
    }
    return out;
}

double energy_expectation(const LabelGrid& xgrid, const ComplexField& psi,
                          const PotentialSpec& potential, const Physics& phys, double t) {
    const auto Hpsi = apply_hamiltonian(xgrid, psi, potential, phys, t);
    const auto w = quadrature_weights(xgrid);
    double e = 0.0;
    for (std::size_t p = 0; p < psi.size(); ++p) e += w[p] * (std::conj(psi[p]) * Hpsi[p]).real();
    return e;
}

AnalyticKind parse_analytic_kind(const std::string& name) {
    if (name == "free-gaussian") return AnalyticKind::FreeGaussian;
    if (name == "ho-ground") return AnalyticKind::HoGround;
    if (name == "ho-coherent") return AnalyticKind::HoCoherent;
    if (name == "vortex-2d") return AnalyticKind::Vortex2D;
    throw ConfigError("unknown analytic state '" + name + "'");
}

std::string to_string(AnalyticKind kind) {
    switch (kind) {
        case AnalyticKind::FreeGaussian: return "free-gaussian";
        case AnalyticKind::HoGround: return "ho-ground";
        case AnalyticKind::HoCoherent: return "ho-coherent";
        case AnalyticKind::Vortex2D: return "vortex-2d";
    }
    return "?";
}

namespace {

void check_params(AnalyticKind kind, const AnalyticParams& prm, int dim) {
    if (!(prm.sigma0 > 0.0)) throw ConfigError("sigma0 must be positive");
    if (!(prm.omega > 0.0)) throw ConfigError("omega must be positive");
    if (kind == AnalyticKind::Vortex2D && dim != 2)
        throw ConfigError("the vortex state is two-dimensional");
}

// One-dimensional factor of a product state along one axis.
cd gaussian_factor(double x, double t, double sigma, double x0, double p0, const Physics& ph) {
    const double tau = ph.hbar * t / (2.0 * ph.mass * sigma * sigma);
    const double xc = x0 + p0 * t / ph.mass;
    const cd w = 1.0 + kI * tau;
    const double dx = x - xc;
    const cd expo = -dx * dx / (4.0 * sigma * sigma * w) +
                    kI * (p0 * x - p0 * p0 * t / (2.0 * ph.mass)) / ph.hbar;
    return std::pow(2.0 * std::numbers::pi * sigma * sigma, -0.25) / std::sqrt(w) * std::exp(expo);
}

double gaussian_velocity(double x, double t, double sigma, double x0, double p0,
                         const Physics& ph) {
    const double tau = ph.hbar * t / (2.0 * ph.mass * sigma * sigma);
    const double xc = x0 + p0 * t / ph.mass;
    return p0 / ph.mass +
           ph.hbar * (x - xc) * tau / (2.0 * ph.mass * sigma * sigma * (1.0 + tau * tau));
}

cd oscillator_factor(double x, double t, double omega, double x0, const Physics& ph) {
    const double mw = ph.mass * omega / ph.hbar;
    const double xc = x0 * std::cos(omega * t);
    const double pc = -ph.mass * omega * x0 * std::sin(omega * t);
    const double dx = x - xc;
    const cd expo = -0.5 * mw * dx * dx + kI * (pc * (x - 0.5 * xc) / ph.hbar - 0.5 * omega * t);
    return std::pow(mw / std::numbers::pi, 0.25) * std::exp(expo);
}

}  // namespace

EulerianField analytic_solution(AnalyticKind kind, const AnalyticParams& prm,
                                const LabelGrid& xgrid, double t) {
    const int d = xgrid.dim();
    check_params(kind, prm, d);
    const Physics& ph = prm.phys;
    EulerianField f;
    f.xgrid = xgrid;
    f.t = t;
    f.rho.assign(xgrid.size(), 0.0);
    f.v.assign(d, Field(xgrid.size(), 0.0));
    f.psi.assign(xgrid.size(), cd{});
    f.mask.assign(xgrid.size(), 1);
    for (std::size_t p = 0; p < xgrid.size(); ++p) {
        const auto x = xgrid.point(p);
        cd psi = 1.0;
        switch (kind) {
            case AnalyticKind::FreeGaussian:
                for (int ax = 0; ax < d; ++ax) {
                    const double x0 = ax == 0 ? prm.x0 : 0.0;
                    const double p0 = ax == 0 ? prm.p0 : 0.0;
                    psi *= gaussian_factor(x[ax], t, prm.sigma0, x0, p0, ph);
                    f.v[ax][p] = gaussian_velocity(x[ax], t, prm.sigma0, x0, p0, ph);
                }
                break;
            case AnalyticKind::HoGround:
            case AnalyticKind::HoCoherent: {
                const double x0 = kind == AnalyticKind::HoCoherent ? prm.x0 : 0.0;
                for (int ax = 0; ax < d; ++ax)
                    psi *= oscillator_factor(x[ax], t, prm.omega, ax == 0 ? x0 : 0.0, ph);
                f.v[0][p] = -prm.omega * x0 * std::sin(prm.omega * t);
                break;
            }
            case AnalyticKind::Vortex2D: {
                const double mw = ph.mass * prm.omega / ph.hbar;
                const double r2 = x[0] * x[0] + x[1] * x[1];
                psi = mw / std::sqrt(std::numbers::pi) * cd(x[0], x[1]) *
                      std::exp(-0.5 * mw * r2 - 2.0 * kI * prm.omega * t);
                if (r2 > 0.0) {
                    f.v[0][p] = -ph.hbar / ph.mass * x[1] / r2;
                    f.v[1][p] = ph.hbar / ph.mass * x[0] / r2;
                } else {
                    f.mask[p] = 0;
                }
                break;
            }
        }
        f.psi[p] = psi;
        f.rho[p] = std::norm(psi);
    }
    return f;
}

double analytic_trajectory(AnalyticKind kind, const AnalyticParams& prm, double a, int axis,
                           double t) {
    check_params(kind, prm, kind == AnalyticKind::Vortex2D ? 2 : 1);
    const Physics& ph = prm.phys;
    switch (kind) {
        case AnalyticKind::FreeGaussian: {
            const double tau = ph.hbar * t / (2.0 * ph.mass * prm.sigma0 * prm.sigma0);
            const double x0 = axis == 0 ? prm.x0 : 0.0;
            const double p0 = axis == 0 ? prm.p0 : 0.0;
            return x0 + p0 * t / ph.mass + (a - x0) * std::sqrt(1.0 + tau * tau);
        }
        case AnalyticKind::HoGround: return a;
        case AnalyticKind::HoCoherent:
            return axis == 0 ? a + prm.x0 * (std::cos(prm.omega * t) - 1.0) : a;
        case AnalyticKind::Vortex2D: break;
    }
    throw ConfigError("no closed-form trajectory for the vortex state");
}

EulerianField extract_fields(const LabelGrid& xgrid, const ComplexField& psi, const Physics& phys,
                             double t) {
    const int d = xgrid.dim();
    EulerianField f;
    f.xgrid = xgrid;
    f.t = t;
    f.psi = psi;
    f.rho.resize(psi.size());
    for (std::size_t p = 0; p < psi.size(); ++p) f.rho[p] = std::norm(psi[p]);
    const double peak = *std::max_element(f.rho.begin(), f.rho.end());
    f.mask.assign(psi.size(), 0);
    f.v.assign(d, Field(psi.size(), 0.0));
    for (int ax = 0; ax < d; ++ax) {
        const auto dpsi = derivative(xgrid, psi, 1, ax);
        for (std::size_t p = 0; p < psi.size(); ++p) {
            if (!(f.rho[p] > kDensityFloorRatio * peak)) continue;
            f.mask[p] = 1;
            f.v[ax][p] = phys.hbar / phys.mass * (std::conj(psi[p]) * dpsi[p]).imag() / f.rho[p];
        }
    }
    return f;
}

namespace {
// widest one-sided reach of the default stencils, applied twice (V_Q, then its gradient)
constexpr int kStencilReach = 6;
}  // namespace

EulerResiduals euler_residuals(const std::vector<EulerianField>& fields,
                               const PotentialSpec& potential, const Physics& phys) {
    if (fields.size() < 3) throw ConfigError("Euler residuals need at least three snapshots");
    const LabelGrid& g = fields.front().xgrid;
    const double dt = fields[1].t - fields[0].t;
    for (std::size_t k = 1; k < fields.size(); ++k) {
        if (!(fields[k].xgrid == g)) throw ConfigError("snapshots live on different grids");
        if (std::abs(fields[k].t - fields[k - 1].t - dt) > 1e-9 * std::max(1.0, std::abs(dt)))
            throw ConfigError("snapshots are not equally spaced in time");
    }
    if (!(dt > 0.0)) throw ConfigError("snapshot times must increase");

    const int d = g.dim();
    const auto w = quadrature_weights(g);
    const double c4 = phys.hbar * phys.hbar / (4.0 * phys.mass);
    EulerResiduals out;
    double cont2 = 0.0, euler2 = 0.0, mass = 0.0;
    for (std::size_t k = 1; k + 1 < fields.size(); ++k) {
        const auto& f = fields[k];
        const double peak = *std::max_element(f.rho.begin(), f.rho.end());
        Field L(g.size());
        for (std::size_t p = 0; p < g.size(); ++p)
            L[p] = std::log(std::max(f.rho[p], kDensityFloorRatio * peak));
        const auto gL = gradient(g, L);
        Field VQ(g.size(), 0.0);
        for (int ax = 0; ax < d; ++ax) {
            const auto Lxx = derivative(g, L, 2, ax);
            for (std::size_t p = 0; p < g.size(); ++p)
                VQ[p] -= c4 * (Lxx[p] + 0.5 * gL[ax][p] * gL[ax][p]);
        }
        Field Phi(g.size());
        for (std::size_t p = 0; p < g.size(); ++p) {
            const auto x = g.point(p);
            Phi[p] = potential.value(std::span<const double>(x.data(), d), f.t) + VQ[p];
        }
        const auto gPhi = gradient(g, Phi);
        // V_Q has a kink where ln rho meets the floor; keep nodes whose stencils miss it
        NodeMask clear(g.size(), 1);
        for (std::size_t p = 0; p < g.size(); ++p) {
            if (f.rho[p] >= kDensityFloorRatio * peak) continue;
            const auto m = g.multi_index(p);
            for (int ax = 0; ax < d; ++ax)
                for (int s = -kStencilReach; s <= kStencilReach; ++s) {
                    const int i = m[ax] + s;
                    if (i < 0 || i >= g.count(ax)) continue;
                    clear[p + static_cast<std::ptrdiff_t>(s) * static_cast<std::ptrdiff_t>(g.stride(ax))] = 0;
                }
        }

        Field div(g.size(), 0.0);
        std::vector<VectorField> gv(d);
        for (int ax = 0; ax < d; ++ax) {
            Field flux(g.size());
            for (std::size_t p = 0; p < g.size(); ++p) flux[p] = f.rho[p] * f.v[ax][p];
            const auto df = derivative(g, flux, 1, ax);
            for (std::size_t p = 0; p < g.size(); ++p) div[p] += df[p];
            gv[ax] = gradient(g, f.v[ax]);
        }
        for (std::size_t p = 0; p < g.size(); ++p) {
            const double rt = (fields[k + 1].rho[p] - fields[k - 1].rho[p]) / (2.0 * dt);
            cont2 += w[p] * (rt + div[p]) * (rt + div[p]);
            const bool ok = f.mask.empty() ||
                            (f.mask[p] && fields[k - 1].mask[p] && fields[k + 1].mask[p]);
            if (!ok || !clear[p]) continue;
            for (int i = 0; i < d; ++i) {
                double r = (fields[k + 1].v[i][p] - fields[k - 1].v[i][p]) / (2.0 * dt) +
                           gPhi[i][p] / phys.mass;
                for (int j = 0; j < d; ++j) r += f.v[j][p] * gv[i][j][p];
                euler2 += w[p] * f.rho[p] * r * r;
            }
            mass += w[p] * f.rho[p];
        }
        ++out.snapshots_used;
    }
    out.continuity = std::sqrt(cont2 / out.snapshots_used);
    out.euler = mass > 0.0 ? std::sqrt(euler2 / mass) : 0.0;
    return out;
}

}  // namespace qhydro

#include "qhydro/kinematics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "qhydro/errors.hpp"

namespace qhydro {

double DeformationTensors::min_jacobian(const NodeMask* excluded) const {
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t n = 0; n < J.size(); ++n) {
        if (excluded && (*excluded)[n]) continue;
        m = std::min(m, J[n]);
    }
    return m;
}

DeformationTensors deformation_from_gradient(int dim, std::vector<Field> F) {
    DeformationTensors t;
    t.dim = dim;
    t.F = std::move(F);
    const std::size_t n = t.F[0].size();
    t.J.assign(n, 0.0);
    t.cof.assign(static_cast<std::size_t>(dim * dim), Field(n, 0.0));
    for (std::size_t p = 0; p < n; ++p) {
        auto f = [&](int i, int j) { return t.F[i * dim + j][p]; };
        if (dim == 1) {
            t.cof[0][p] = 1.0;
            t.J[p] = f(0, 0);
        } else if (dim == 2) {
            t.cof[0][p] = f(1, 1);
            t.cof[1][p] = -f(1, 0);
            t.cof[2][p] = -f(0, 1);
            t.cof[3][p] = f(0, 0);
            t.J[p] = f(0, 0) * f(1, 1) - f(0, 1) * f(1, 0);
        } else {
            for (int i = 0; i < 3; ++i) {
                const int i1 = (i + 1) % 3, i2 = (i + 2) % 3;
                for (int l = 0; l < 3; ++l) {
                    const int l1 = (l + 1) % 3, l2 = (l + 2) % 3;
                    t.cof[i * 3 + l][p] = f(i1, l1) * f(i2, l2) - f(i1, l2) * f(i2, l1);
                }
            }
            double det = 0.0;
            for (int l = 0; l < 3; ++l) det += f(0, l) * t.cof[l][p];
            t.J[p] = det;
        }
    }
    return t;
}

DeformationTensors deformation(const FlowState& flow, const LabelGrid& grid,
                               const NodeMask* excluded) {
    const int dim = grid.dim();
    std::vector<Field> F(static_cast<std::size_t>(dim * dim));
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) F[i * dim + j] = derivative(grid, flow.q[i], 1, j, 4);
    auto t = deformation_from_gradient(dim, std::move(F));
    for (std::size_t n = 0; n < t.J.size(); ++n) {
        if (excluded && (*excluded)[n]) continue;
        if (!std::isfinite(t.J[n])) throw NumericError("non-finite Jacobian", n);
        if (t.J[n] <= 0.0) throw MeshTanglingError(n, flow.t, t.J[n]);
    }
    return t;
}

double cofactor_identity_residual(const DeformationTensors& t) {
    const int d = t.dim;
    double worst = 0.0;
    for (std::size_t p = 0; p < t.J.size(); ++p) {
        for (int i = 0; i < d; ++i) {
            for (int j = 0; j < d; ++j) {
                double sum = 0.0, mag = 0.0;
                for (int k = 0; k < d; ++k) {
                    const double term = t.F[k * d + j][p] * t.cof[k * d + i][p];
                    sum += term;
                    mag += std::abs(term);
                }
                const double target = (i == j) ? t.J[p] : 0.0;
                const double scale = std::max(mag, std::abs(t.J[p]));
                if (scale > 0.0) worst = std::max(worst, std::abs(sum - target) / scale);
            }
        }
    }
    return worst;
}

Field lagrangian_density(const Field& rho0, const DeformationTensors& t) {
    Field rho(rho0.size());
    for (std::size_t p = 0; p < rho.size(); ++p) rho[p] = rho0[p] / t.J[p];
    return rho;
}

VectorField grad_q(const LabelGrid& grid, const Field& f, const DeformationTensors& t) {
    const int d = grid.dim();
    const auto ga = gradient(grid, f, 4);
    VectorField g(d, Field(f.size(), 0.0));
    for (std::size_t p = 0; p < f.size(); ++p) {
        const double inv = 1.0 / t.J[p];
        for (int i = 0; i < d; ++i) {
            double s = 0.0;
            for (int j = 0; j < d; ++j) s += t.cof[i * d + j][p] * ga[j][p];
            g[i][p] = inv * s;
        }
    }
    return g;
}

Field div_q(const LabelGrid& grid, const VectorField& g, const DeformationTensors& t) {
    const int d = grid.dim();
    Field out(g[0].size(), 0.0);
    for (int i = 0; i < d; ++i) {
        const auto gi = grad_q(grid, g[i], t);
        for (std::size_t p = 0; p < out.size(); ++p) out[p] += gi[i][p];
    }
    return out;
}

namespace {

// Solves q(a) = x on the monotone 1D map.
void invert_1d(const FlowState& flow, const LabelGrid& grid, const LabelGrid& xgrid,
               LabelInversion& inv) {
    const Field& q = flow.q[0];
    const int n = grid.count(0);
    for (std::size_t xn = 0; xn < xgrid.size(); ++xn) {
        const double x = xgrid.coord(xn, 0);
        if (x < q.front() || x > q.back()) continue;
        const auto it = std::upper_bound(q.begin(), q.end(), x);
        int k = static_cast<int>(it - q.begin()) - 1;
        k = std::clamp(k, 0, n - 2);
        double lo = grid.lo(0) + grid.spacing(0) * k;
        double hi = lo + grid.spacing(0);
        // linear seed, then safeguarded Newton on the cubic interpolant
        const double frac = (q[k + 1] > q[k]) ? (x - q[k]) / (q[k + 1] - q[k]) : 0.5;
        double a = lo + frac * (hi - lo);
        std::array<double, 1> pt{}, gr{};
        bool ok = false;
        for (int iter = 0; iter < 60; ++iter) {
            pt[0] = a;
            const double r = interpolate_with_gradient(grid, q, pt, gr) - x;
            if (r > 0.0) hi = a; else lo = a;
            if (std::abs(r) <= 1e-14 * (1.0 + std::abs(x))) {
                ok = true;
                break;
            }
            double next = (gr[0] > 0.0) ? a - r / gr[0] : 0.5 * (lo + hi);
            if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
            if (std::abs(next - a) <= 1e-15 * (1.0 + std::abs(a))) {
                ok = true;
                break;
            }
            a = next;
        }
        if (!ok) ++inv.newton_failures;
        inv.labels[0][xn] = a;
        inv.in_hull[xn] = 1;
    }
}

struct BucketIndex {
    int dim;
    std::array<double, kMaxDim> lo{};
    double cell = 1.0;
    std::unordered_map<long long, std::vector<std::size_t>> buckets;

    long long key(const std::array<long long, kMaxDim>& c) const {
        return (c[0] * 1000003LL + c[1]) * 1000033LL + c[2];
    }
    std::array<long long, kMaxDim> cell_of(std::span<const double> x) const {
        std::array<long long, kMaxDim> c{};
        for (int a = 0; a < dim; ++a) c[a] = static_cast<long long>(std::floor((x[a] - lo[a]) / cell));
        return c;
    }
};

void invert_nd(const FlowState& flow, const LabelGrid& grid, const LabelGrid& xgrid,
               LabelInversion& inv) {
    const int d = grid.dim();
    const std::size_t np = grid.size();
    BucketIndex index;
    index.dim = d;
    for (int a = 0; a < d; ++a) {
        index.lo[a] = *std::min_element(flow.q[a].begin(), flow.q[a].end());
    }
    index.cell = 2.0 * grid.min_spacing();
    std::array<double, kMaxDim> qp{};
    for (std::size_t p = 0; p < np; ++p) {
        for (int a = 0; a < d; ++a) qp[a] = flow.q[a][p];
        index.buckets[index.key(index.cell_of(std::span(qp).first(d)))].push_back(p);
    }

    std::array<double, kMaxDim> x{}, a{}, qv{}, delta{};
    std::array<std::array<double, kMaxDim>, kMaxDim> M{};
    for (std::size_t xn = 0; xn < xgrid.size(); ++xn) {
        for (int k = 0; k < d; ++k) x[k] = xgrid.coord(xn, k);
        // nearest particle in an expanding bucket neighbourhood
        const auto c0 = index.cell_of(std::span(x).first(d));
        std::size_t best = np;
        double best_d2 = std::numeric_limits<double>::infinity();
        for (int radius = 1; radius <= 3 && best == np; ++radius) {
            std::array<long long, kMaxDim> c{};
            const int span = 2 * radius + 1;
            int total = 1;
            for (int k = 0; k < d; ++k) total *= span;
            for (int m = 0; m < total; ++m) {
                int rem = m;
                for (int k = 0; k < kMaxDim; ++k) {
                    if (k < d) {
                        c[k] = c0[k] + (rem % span) - radius;
                        rem /= span;
                    } else {
                        c[k] = 0;
                    }
                }
                const auto it = index.buckets.find(index.key(c));
                if (it == index.buckets.end()) continue;
                for (auto p : it->second) {
                    double d2 = 0.0;
                    for (int k = 0; k < d; ++k) {
                        const double dx = flow.q[k][p] - x[k];
                        d2 += dx * dx;
                    }
                    if (d2 < best_d2) {
                        best_d2 = d2;
                        best = p;
                    }
                }
            }
        }
        if (best == np) continue;
        const auto seed = grid.point(best);
        for (int k = 0; k < d; ++k) a[k] = seed[k];

        bool ok = false;
        double prev_res = std::numeric_limits<double>::infinity();
        for (int iter = 0; iter < 50; ++iter) {
            double res = 0.0;
            for (int i = 0; i < d; ++i) {
                std::array<double, kMaxDim> g{};
                qv[i] = interpolate_with_gradient(grid, flow.q[i], std::span(a).first(d),
                                                  std::span(g).first(d));
                for (int j = 0; j < d; ++j) M[i][j] = g[j];
                res = std::max(res, std::abs(qv[i] - x[i]));
            }
            if (res <= 1e-12 * (1.0 + std::abs(x[0]))) {
                ok = true;
                break;
            }
            // solve M delta = x - q
            if (d == 2) {
                const double det = M[0][0] * M[1][1] - M[0][1] * M[1][0];
                if (!(std::abs(det) > 0.0)) break;
                const double r0 = x[0] - qv[0], r1 = x[1] - qv[1];
                delta[0] = (M[1][1] * r0 - M[0][1] * r1) / det;
                delta[1] = (-M[1][0] * r0 + M[0][0] * r1) / det;
            } else {
                // 3x3 via cofactors
                const auto& m = M;
                std::array<std::array<double, 3>, 3> C{};
                for (int i = 0; i < 3; ++i)
                    for (int l = 0; l < 3; ++l) {
                        const int i1 = (i + 1) % 3, i2 = (i + 2) % 3, l1 = (l + 1) % 3,
                                  l2 = (l + 2) % 3;
                        C[i][l] = m[i1][l1] * m[i2][l2] - m[i1][l2] * m[i2][l1];
                    }
                const double det = m[0][0] * C[0][0] + m[0][1] * C[0][1] + m[0][2] * C[0][2];
                if (!(std::abs(det) > 0.0)) break;
                for (int j = 0; j < 3; ++j) {
                    double s = 0.0;
                    for (int i = 0; i < 3; ++i) s += C[i][j] * (x[i] - qv[i]);
                    delta[j] = s / det;
                }
            }
            const double damp = res > prev_res ? 0.5 : 1.0;
            prev_res = res;
            for (int k = 0; k < d; ++k) a[k] += damp * delta[k];
        }
        bool inside = ok;
        for (int k = 0; k < d && inside; ++k) {
            const double tol = 1e-9 * grid.spacing(k);
            if (a[k] < grid.lo(k) - tol || a[k] > grid.hi(k) + tol) inside = false;
        }
        if (!ok) ++inv.newton_failures;
        if (!inside) continue;
        for (int k = 0; k < d; ++k) inv.labels[k][xn] = std::clamp(a[k], grid.lo(k), grid.hi(k));
        inv.in_hull[xn] = 1;
    }
}

}  // namespace

LabelInversion invert_labels(const FlowState& flow, const LabelGrid& grid, const LabelGrid& xgrid) {
    if (xgrid.dim() != grid.dim()) throw ConfigError("x-grid and label grid dimensions differ");
    LabelInversion inv;
    inv.xgrid = xgrid;
    inv.labels.assign(grid.dim(), Field(xgrid.size(), 0.0));
    inv.in_hull.assign(xgrid.size(), 0);
    if (grid.dim() == 1)
        invert_1d(flow, grid, xgrid, inv);
    else
        invert_nd(flow, grid, xgrid, inv);
    return inv;
}

Field sample_at_labels(const LabelGrid& grid, const Field& f, const LabelInversion& inv) {
    Field out(inv.xgrid.size(), 0.0);
    std::array<double, kMaxDim> a{};
    for (std::size_t xn = 0; xn < out.size(); ++xn) {
        if (!inv.in_hull[xn]) continue;
        for (int k = 0; k < grid.dim(); ++k) a[k] = inv.labels[k][xn];
        out[xn] = interpolate(grid, f, std::span(a).first(grid.dim()));
    }
    return out;
}

EulerianField to_eulerian(const FlowState& flow, const DeformationTensors& tensors,
                          const Field& rho0, const LabelGrid& grid, const LabelInversion& inv) {
    EulerianField e;
    e.xgrid = inv.xgrid;
    e.t = flow.t;
    e.mask = inv.in_hull;
    e.rho = sample_at_labels(grid, lagrangian_density(rho0, tensors), inv);
    e.v.resize(grid.dim());
    for (int i = 0; i < grid.dim(); ++i) e.v[i] = sample_at_labels(grid, flow.qdot[i], inv);
    return e;
}

EulerianField to_eulerian(const FlowState& flow, const DeformationTensors& tensors,
                          const Field& rho0, const LabelGrid& grid, const LabelGrid& xgrid) {
    return to_eulerian(flow, tensors, rho0, grid, invert_labels(flow, grid, xgrid));
}

}  // namespace qhydro

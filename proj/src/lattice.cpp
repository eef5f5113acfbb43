#include "qhydro/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "qhydro/errors.hpp"

namespace qhydro {

LabelGrid::LabelGrid(int dim, std::span<const std::array<double, 2>> extents,
                     std::span<const int> counts)
    : dim_(dim) {
    size_ = 1;
    for (int a = 0; a < dim; ++a) {
        lo_[a] = extents[a][0];
        hi_[a] = extents[a][1];
        n_[a] = counts[a];
        h_[a] = (hi_[a] - lo_[a]) / (n_[a] - 1);
        size_ *= static_cast<std::size_t>(n_[a]);
    }
    std::size_t s = 1;
    for (int a = dim - 1; a >= 0; --a) {
        stride_[a] = s;
        s *= static_cast<std::size_t>(n_[a]);
    }
}

double LabelGrid::min_spacing() const {
    double h = h_[0];
    for (int a = 1; a < dim_; ++a) h = std::min(h, h_[a]);
    return h;
}

double LabelGrid::cell_volume() const {
    double v = 1.0;
    for (int a = 0; a < dim_; ++a) v *= h_[a];
    return v;
}

std::size_t LabelGrid::index(std::span<const int> multi) const {
    std::size_t idx = 0;
    for (int a = 0; a < dim_; ++a) idx += stride_[a] * static_cast<std::size_t>(multi[a]);
    return idx;
}

std::array<int, kMaxDim> LabelGrid::multi_index(std::size_t node) const {
    std::array<int, kMaxDim> m{};
    for (int a = 0; a < dim_; ++a) {
        m[a] = static_cast<int>(node / stride_[a]);
        node -= static_cast<std::size_t>(m[a]) * stride_[a];
    }
    return m;
}

double LabelGrid::coord(std::size_t node, int axis) const {
    const auto i = static_cast<int>((node / stride_[axis]) % static_cast<std::size_t>(n_[axis]));
    return lo_[axis] + h_[axis] * i;
}

std::array<double, kMaxDim> LabelGrid::point(std::size_t node) const {
    std::array<double, kMaxDim> p{};
    const auto m = multi_index(node);
    for (int a = 0; a < dim_; ++a) p[a] = lo_[a] + h_[a] * m[a];
    return p;
}

bool LabelGrid::on_boundary(std::size_t node) const {
    const auto m = multi_index(node);
    for (int a = 0; a < dim_; ++a)
        if (m[a] == 0 || m[a] == n_[a] - 1) return true;
    return false;
}

bool LabelGrid::operator==(const LabelGrid& o) const {
    if (dim_ != o.dim_) return false;
    for (int a = 0; a < dim_; ++a)
        if (n_[a] != o.n_[a] || lo_[a] != o.lo_[a] || hi_[a] != o.hi_[a]) return false;
    return true;
}

LabelGrid make_grid(int dim, std::span<const std::array<double, 2>> extents,
                    std::span<const int> counts) {
    if (dim < 1 || dim > kMaxDim) throw ConfigError("grid dimension must be 1, 2 or 3");
    if (extents.size() < static_cast<std::size_t>(dim) ||
        counts.size() < static_cast<std::size_t>(dim))
        throw ConfigError("grid needs one extent and one count per axis");
    for (int a = 0; a < dim; ++a) {
        if (counts[a] < kMinNodesPerAxis) {
            std::ostringstream os;
            os << "grid axis " << a << " has " << counts[a] << " nodes; at least "
               << kMinNodesPerAxis << " required";
            throw ConfigError(os.str());
        }
        if (!std::isfinite(extents[a][0]) || !std::isfinite(extents[a][1]) ||
            !(extents[a][1] > extents[a][0])) {
            std::ostringstream os;
            os << "grid axis " << a << " has degenerate extent [" << extents[a][0] << ", "
               << extents[a][1] << "]";
            throw ConfigError(os.str());
        }
    }
    return LabelGrid(dim, extents, counts);
}

LabelGrid make_grid(int dim, double lo, double hi, int count) {
    std::array<std::array<double, 2>, kMaxDim> ext{};
    std::array<int, kMaxDim> n{};
    for (int a = 0; a < kMaxDim; ++a) {
        ext[a] = {lo, hi};
        n[a] = count;
    }
    return make_grid(dim, std::span(ext).first(static_cast<std::size_t>(std::max(dim, 0))),
                     std::span(n).first(static_cast<std::size_t>(std::max(dim, 0))));
}

std::vector<double> fd_weights(int m, double x0, std::span<const double> x) {
    const int n = static_cast<int>(x.size());
    std::vector<std::vector<double>> c(n, std::vector<double>(m + 1, 0.0));
    double c1 = 1.0;
    double c4 = x[0] - x0;
    c[0][0] = 1.0;
    for (int i = 1; i < n; ++i) {
        const int mn = std::min(i, m);
        double c2 = 1.0;
        const double c5 = c4;
        c4 = x[i] - x0;
        for (int j = 0; j < i; ++j) {
            const double c3 = x[i] - x[j];
            c2 *= c3;
            if (j == i - 1) {
                for (int k = mn; k >= 1; --k)
                    c[i][k] = c1 * (k * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for (int k = mn; k >= 1; --k) c[j][k] = (c4 * c[j][k] - k * c[j][k - 1]) / c3;
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    std::vector<double> w(n);
    for (int j = 0; j < n; ++j) w[j] = c[j][m];
    return w;
}

int default_accuracy(int order) { return order <= 2 ? 4 : 2; }

StencilOperator::StencilOperator(int derivative_order, int accuracy, int axis,
                                 BoundaryScheme boundary)
    : order_(derivative_order), accuracy_(accuracy), axis_(axis), boundary_(boundary) {
    if (order_ < 1 || order_ > 4) throw ConfigError("derivative order must be 1..4");
    if (accuracy_ == 0) accuracy_ = default_accuracy(order_);
    if (accuracy_ != 2 && accuracy_ != 4) throw ConfigError("accuracy order must be 2 or 4");
}

StencilOperator::Line StencilOperator::build_line(int n, double h) const {
    const int r = (order_ + 1) / 2 + accuracy_ / 2 - 1;
    const int width = order_ + accuracy_;
    Line line;
    line.first.resize(n);
    line.weights.resize(n);
    const double scale = 1.0 / std::pow(h, order_);

    auto make = [&](int first, int count, int at) {
        std::vector<double> off(count);
        for (int k = 0; k < count; ++k) off[k] = first + k - at;
        auto w = fd_weights(order_, 0.0, off);
        for (auto& x : w) x *= scale;
        return w;
    };

    const auto central = make(-r, 2 * r + 1, 0);
    for (int i = 0; i < n; ++i) {
        if (i - r >= 0 && i + r <= n - 1) {
            line.first[i] = i - r;
            line.weights[i] = central;
        } else {
            const int first = (i - r < 0) ? 0 : n - width;
            line.first[i] = first;
            line.weights[i] = make(first, width, i);
        }
    }
    return line;
}

template <typename T>
std::vector<T> StencilOperator::apply_impl(const LabelGrid& grid, const std::vector<T>& f) const {
    if (axis_ < 0 || axis_ >= grid.dim()) throw ConfigError("derivative axis out of range");
    const int n = grid.count(axis_);
    const auto line = build_line(n, grid.spacing(axis_));
    const std::size_t stride = grid.stride(axis_);
    std::vector<T> out(f.size(), T{});
    const std::size_t total = grid.size();
    const std::size_t block = stride * static_cast<std::size_t>(n);
    for (std::size_t outer = 0; outer < total; outer += block) {
        for (std::size_t inner = 0; inner < stride; ++inner) {
            const std::size_t base = outer + inner;
            for (int i = 0; i < n; ++i) {
                const auto& w = line.weights[i];
                const std::size_t start = base + stride * static_cast<std::size_t>(line.first[i]);
                // differences against the centre value: weights sum to zero, so constants
                // give exactly zero and the cancellation error does not scale with |f|
                const T centre = f[base + stride * static_cast<std::size_t>(i)];
                T acc{};
                for (std::size_t k = 0; k < w.size(); ++k) acc += w[k] * (f[start + stride * k] - centre);
                out[base + stride * static_cast<std::size_t>(i)] = acc;
            }
        }
    }
    return out;
}

Field StencilOperator::apply(const LabelGrid& grid, const Field& f) const {
    std::size_t bad = 0;
    if (!all_finite(f, &bad)) throw NumericError("non-finite input to derivative", bad);
    return apply_impl(grid, f);
}

ComplexField StencilOperator::apply(const LabelGrid& grid, const ComplexField& f) const {
    for (std::size_t i = 0; i < f.size(); ++i)
        if (!std::isfinite(f[i].real()) || !std::isfinite(f[i].imag()))
            throw NumericError("non-finite input to derivative", i);
    return apply_impl(grid, f);
}

Field derivative(const LabelGrid& grid, const Field& f, int order, int axis, int accuracy) {
    return StencilOperator(order, accuracy, axis).apply(grid, f);
}

ComplexField derivative(const LabelGrid& grid, const ComplexField& f, int order, int axis,
                        int accuracy) {
    return StencilOperator(order, accuracy, axis).apply(grid, f);
}

Field mixed_derivative(const LabelGrid& grid, const Field& f, int axis_i, int axis_j,
                       int accuracy) {
    if (axis_i == axis_j) return derivative(grid, f, 2, axis_i, accuracy);
    const int acc = accuracy == 0 ? default_accuracy(1) : accuracy;
    return derivative(grid, derivative(grid, f, 1, axis_j, acc), 1, axis_i, acc);
}

VectorField gradient(const LabelGrid& grid, const Field& f, int accuracy) {
    VectorField g(grid.dim());
    for (int a = 0; a < grid.dim(); ++a) g[a] = derivative(grid, f, 1, a, accuracy);
    return g;
}

Field quadrature_weights(const LabelGrid& grid) {
    Field w(grid.size(), grid.cell_volume());
    for (std::size_t node = 0; node < grid.size(); ++node) {
        const auto m = grid.multi_index(node);
        for (int a = 0; a < grid.dim(); ++a)
            if (m[a] == 0 || m[a] == grid.count(a) - 1) w[node] *= 0.5;
    }
    return w;
}

double boundary_leakage(const LabelGrid& grid, const Field& f) {
    double interior = 0.0, edge = 0.0;
    for (std::size_t node = 0; node < grid.size(); ++node) {
        const double v = std::abs(f[node]);
        interior = std::max(interior, v);
        if (grid.on_boundary(node)) edge = std::max(edge, v);
    }
    return interior > 0.0 ? edge / interior : 0.0;
}

double integrate(const LabelGrid& grid, const Field& f, Warnings* warnings) {
    const auto w = quadrature_weights(grid);
    double sum = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) sum += w[i] * f[i];
    if (warnings) {
        const double leak = boundary_leakage(grid, f);
        if (leak >= 1e-6) {
            std::ostringstream os;
            os << "boundary leakage " << leak << " exceeds 1e-6 of interior maximum";
            warnings->add(os.str());
        }
    }
    return sum;
}

std::complex<double> integrate(const LabelGrid& grid, const ComplexField& f) {
    const auto w = quadrature_weights(grid);
    std::complex<double> sum{};
    for (std::size_t i = 0; i < f.size(); ++i) sum += w[i] * f[i];
    return sum;
}

InterpStencil interp_stencil(const LabelGrid& grid, int axis, double x) {
    const int n = grid.count(axis);
    const double h = grid.spacing(axis);
    const double s = (x - grid.lo(axis)) / h;
    int first = static_cast<int>(std::floor(s)) - 1;
    first = std::clamp(first, 0, n - 4);
    const double u = s - first;  // position relative to node `first`, nodes at 0,1,2,3
    InterpStencil st;
    st.first = first;
    for (int k = 0; k < 4; ++k) {
        double num = 1.0, den = 1.0, dnum = 0.0;
        for (int j = 0; j < 4; ++j) {
            if (j == k) continue;
            den *= (k - j);
            // derivative of the product via the running-product rule
            dnum = dnum * (u - j) + num;
            num *= (u - j);
        }
        st.w[k] = num / den;
        st.dw[k] = dnum / den / h;
    }
    return st;
}

double interpolate_with_gradient(const LabelGrid& grid, const Field& f,
                                 std::span<const double> point, std::span<double> grad) {
    const int dim = grid.dim();
    std::array<InterpStencil, kMaxDim> st{};
    for (int a = 0; a < dim; ++a) st[a] = interp_stencil(grid, a, point[a]);
    for (int a = 0; a < dim; ++a) grad[a] = 0.0;
    double value = 0.0;
    std::array<int, kMaxDim> k{};
    const int total = 1 << (2 * dim);
    for (int c = 0; c < total; ++c) {
        int rem = c;
        for (int a = 0; a < dim; ++a) {
            k[a] = rem & 3;
            rem >>= 2;
        }
        std::size_t node = 0;
        double w = 1.0;
        for (int a = 0; a < dim; ++a) {
            node += grid.stride(a) * static_cast<std::size_t>(st[a].first + k[a]);
            w *= st[a].w[k[a]];
        }
        const double fv = f[node];
        value += w * fv;
        for (int a = 0; a < dim; ++a) {
            double g = st[a].dw[k[a]];
            for (int b = 0; b < dim; ++b)
                if (b != a) g *= st[b].w[k[b]];
            grad[a] += g * fv;
        }
    }
    return value;
}

double interpolate(const LabelGrid& grid, const Field& f, std::span<const double> point) {
    std::array<double, kMaxDim> g{};
    return interpolate_with_gradient(grid, f, point, g);
}

bool all_finite(const Field& f, std::size_t* bad_node) {
    for (std::size_t i = 0; i < f.size(); ++i) {
        if (!std::isfinite(f[i])) {
            if (bad_node) *bad_node = i;
            return false;
        }
    }
    return true;
}

}  // namespace qhydro

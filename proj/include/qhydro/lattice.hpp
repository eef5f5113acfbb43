#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace qhydro {

using Field = std::vector<double>;
using ComplexField = std::vector<std::complex<double>>;
/// Vector-valued samples stored component-major: v[i][node].
using VectorField = std::vector<Field>;

inline constexpr int kMaxDim = 3;
inline constexpr int kMinNodesPerAxis = 16;

/// Collects non-fatal diagnostics (boundary leakage, resolution warnings).
struct Warnings {
    std::vector<std::string> messages;
    void add(std::string msg) { messages.push_back(std::move(msg)); }
    bool empty() const { return messages.empty(); }
};

/// Uniform rectangular grid. Used both for label space and for Eulerian x-grids.
///
/// Nodes are enumerated row-major: axis 0 varies slowest.
class LabelGrid {
public:
    LabelGrid() = default;
    LabelGrid(int dim, std::span<const std::array<double, 2>> extents, std::span<const int> counts);

    int dim() const { return dim_; }
    std::size_t size() const { return size_; }
    int count(int axis) const { return n_[axis]; }
    double lo(int axis) const { return lo_[axis]; }
    double hi(int axis) const { return hi_[axis]; }
    double spacing(int axis) const { return h_[axis]; }
    std::size_t stride(int axis) const { return stride_[axis]; }
    double min_spacing() const;
    /// Product of spacings.
    double cell_volume() const;

    std::size_t index(std::span<const int> multi) const;
    std::array<int, kMaxDim> multi_index(std::size_t node) const;
    double coord(std::size_t node, int axis) const;
    std::array<double, kMaxDim> point(std::size_t node) const;
    bool on_boundary(std::size_t node) const;

    bool operator==(const LabelGrid& other) const;

private:
    int dim_ = 0;
    std::size_t size_ = 0;
    std::array<double, kMaxDim> lo_{}, hi_{}, h_{};
    std::array<int, kMaxDim> n_{1, 1, 1};
    std::array<std::size_t, kMaxDim> stride_{};
};

/// Throws ConfigError for counts < 16, degenerate extents, or dim outside 1..3.
LabelGrid make_grid(int dim, std::span<const std::array<double, 2>> extents,
                    std::span<const int> counts);
/// Same extent and count on every axis.
LabelGrid make_grid(int dim, double lo, double hi, int count);

/// Finite-difference weights at `x0` for samples at `offsets` (Fornberg's recursion).
std::vector<double> fd_weights(int derivative_order, double x0, std::span<const double> offsets);

enum class BoundaryScheme { OneSided };

/// Default accuracy: 4 for first and second derivatives, 2 for third and fourth.
int default_accuracy(int derivative_order);

/// Single-axis derivative: central stencils in the interior, one-sided stencils of
/// the same accuracy order near the edges.
class StencilOperator {
public:
    StencilOperator(int derivative_order, int accuracy, int axis,
                    BoundaryScheme boundary = BoundaryScheme::OneSided);

    int derivative_order() const { return order_; }
    int accuracy() const { return accuracy_; }
    int axis() const { return axis_; }

    Field apply(const LabelGrid& grid, const Field& f) const;
    ComplexField apply(const LabelGrid& grid, const ComplexField& f) const;

private:
    struct Line {
        // weights[i] and first[i] describe the stencil used at line position i
        std::vector<int> first;
        std::vector<std::vector<double>> weights;
    };
    Line build_line(int n, double h) const;
    template <typename T>
    std::vector<T> apply_impl(const LabelGrid& grid, const std::vector<T>& f) const;

    int order_;
    int accuracy_;
    int axis_;
    BoundaryScheme boundary_;
};

/// d^order f / da_axis^order. accuracy = 0 selects the default for the order.
/// Throws NumericError on non-finite input.
Field derivative(const LabelGrid& grid, const Field& f, int order, int axis, int accuracy = 0);
ComplexField derivative(const LabelGrid& grid, const ComplexField& f, int order, int axis,
                        int accuracy = 0);
/// d^2 f / da_i da_j; for i == j this is the second-derivative stencil.
Field mixed_derivative(const LabelGrid& grid, const Field& f, int axis_i, int axis_j,
                       int accuracy = 0);
/// All first derivatives, one component per axis.
VectorField gradient(const LabelGrid& grid, const Field& f, int accuracy = 0);

/// Trapezoidal quadrature. Adds a warning when the boundary magnitude exceeds
/// 1e-6 of the interior maximum.
double integrate(const LabelGrid& grid, const Field& f, Warnings* warnings = nullptr);
std::complex<double> integrate(const LabelGrid& grid, const ComplexField& f);
/// Trapezoid weight of every node (product of per-axis weights times cell volume).
Field quadrature_weights(const LabelGrid& grid);
/// max |f| on boundary nodes divided by max |f| overall (0 for a zero field).
double boundary_leakage(const LabelGrid& grid, const Field& f);

/// Four-point Lagrange interpolation stencil along one axis at continuous coordinate x.
struct InterpStencil {
    int first = 0;
    std::array<double, 4> w{};
    std::array<double, 4> dw{};  // d/dx of the weights
};
InterpStencil interp_stencil(const LabelGrid& grid, int axis, double x);

/// Tensor-product cubic interpolation at a continuous point. Points outside the
/// grid use the edge stencil (extrapolation); callers mask them.
double interpolate(const LabelGrid& grid, const Field& f, std::span<const double> point);
/// Value and gradient of the interpolant.
double interpolate_with_gradient(const LabelGrid& grid, const Field& f,
                                 std::span<const double> point, std::span<double> grad);

bool all_finite(const Field& f, std::size_t* bad_node = nullptr);

}  // namespace qhydro

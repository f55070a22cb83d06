#pragma once

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "kolstack/errors.hpp"

namespace kolstack {

using Eigen::ArrayXd;
using Eigen::MatrixXd;
using Eigen::VectorXd;

struct GridConfig {
    int n_subsystems = 2;     // n >= 2, chain length
    int d_per_subsystem = 1;  // d >= 1, state dimension per subsystem
    std::vector<int> dims_per_axis;                     // n*d entries, each >= 3
    std::vector<std::pair<double, double>> domain_bounds;  // per-axis [lo, hi]
    int n_time_steps = 32;
    double horizon_T = 1.0;
};

/// Tensor-product discretization of (0,T) x Omega.  Nodes are stored row-major
/// (last axis fastest); spatial quadrature is the trapezoid rule (boundary nodes
/// half-weighted per axis), time integrals use the right-endpoint rule over the
/// steps t_1..t_K.  Immutable after construction, safe to share across threads.
class Grid {
public:
    explicit Grid(GridConfig config);

    int n_axes() const { return static_cast<int>(cfg_.dims_per_axis.size()); }
    int n_subsystems() const { return cfg_.n_subsystems; }
    int d_per_subsystem() const { return cfg_.d_per_subsystem; }
    int dim(int axis) const { return cfg_.dims_per_axis[axis]; }
    double lower(int axis) const { return cfg_.domain_bounds[axis].first; }
    double upper(int axis) const { return cfg_.domain_bounds[axis].second; }
    double spacing(int axis) const { return h_[axis]; }

    int n_time_steps() const { return cfg_.n_time_steps; }
    double horizon() const { return cfg_.horizon_T; }
    double dt() const { return dt_; }
    /// Number of time slices of a spacetime field (t_0 .. t_K).
    int n_slices() const { return cfg_.n_time_steps + 1; }
    double time_at(int k) const { return dt_ * k; }

    int n_nodes() const { return n_nodes_; }
    int n_interior() const { return n_interior_; }

    bool is_boundary(int node) const { return boundary_[node] != 0; }
    /// Interior index of a node, or -1 for boundary nodes.
    int interior_index(int node) const { return interior_of_node_[node]; }
    int node_of_interior(int i) const { return node_of_interior_[i]; }

    /// Coordinates of a node (n_axes entries).
    VectorXd node_coords(int node) const { return coords_.row(node).transpose(); }
    double coord(int node, int axis) const { return coords_(node, axis); }
    /// Flat index of the node nearest the domain center (all dims odd -> exact center).
    int center_node() const;

    int flat_index(const std::vector<int>& multi) const;
    std::vector<int> multi_index(int node) const;
    /// Neighbor along an axis (offset +-1); -1 when it falls outside the grid.
    int neighbor(int node, int axis, int offset) const;

    /// Trapezoid quadrature weight of every node.
    const VectorXd& quad_weights() const { return weights_; }
    /// Weights restricted to interior nodes (uniform on a uniform grid).
    const VectorXd& interior_weights() const { return interior_weights_; }

    const GridConfig& config() const { return cfg_; }

private:
    GridConfig cfg_;
    std::vector<double> h_;
    double dt_ = 0.0;
    int n_nodes_ = 0;
    int n_interior_ = 0;
    std::vector<int> strides_;
    MatrixXd coords_;
    std::vector<char> boundary_;
    std::vector<int> interior_of_node_;
    std::vector<int> node_of_interior_;
    VectorXd weights_;
    VectorXd interior_weights_;
};

/// Validates the configuration and precomputes spacings, coordinates and weights.
Grid build_grid(const GridConfig& config);

enum class MaskLabel { U, U1, U2 };

/// Indicator of an open control subdomain; true only on interior nodes.
struct SubdomainMask {
    MaskLabel label = MaskLabel::U;
    ArrayXd indicator;  // 0/1 per node
    int count = 0;

    bool disjoint_with(const SubdomainMask& other) const {
        return (indicator * other.indicator).sum() == 0.0;
    }
};

/// Mask of the interior nodes lying inside an axis-aligned box.  The box must
/// sit strictly inside the domain; a box that captures no interior node is an error.
SubdomainMask make_mask(const Grid& grid, const std::vector<std::pair<double, double>>& box,
                        MaskLabel label);

enum class FieldKind { slice, spacetime };

/// Scalar function sampled on the grid: one column per time slice
/// (a single column for FieldKind::slice, n_slices() columns for spacetime).
struct Field {
    FieldKind kind = FieldKind::slice;
    MatrixXd values;  // n_nodes x n_slices

    int n_slices() const { return static_cast<int>(values.cols()); }
};

Field zero_slice(const Grid& grid);
Field zero_spacetime(const Grid& grid);
/// Samples f(x) on every node.
Field slice_from_function(const Grid& grid, const std::function<double(const VectorXd&)>& f);
/// Replicates a slice over all time steps.
Field replicate_in_time(const Grid& grid, const Field& slice);
void require_shape(const Grid& grid, const Field& f, const char* where);

/// Extracts one time slice of a spacetime field.
Field time_slice(const Grid& grid, const Field& f, int k);

/// Zeroes the boundary nodes of every slice (Dirichlet data).
Field zero_on_boundary(const Grid& grid, Field f);
bool vanishes_on_boundary(const Grid& grid, const Field& f, double tol = 0.0);

/// Trapezoid-weighted discrete L2 product.  Slice fields pair over Omega;
/// spacetime fields additionally integrate over time with the right-endpoint
/// rule (slice 0 never contributes).
double inner_product(const Grid& grid, const Field& a, const Field& b);
double norm(const Grid& grid, const Field& f);

enum class ControlRole { leader, follower };

/// Space-time control supported on a subdomain; values vanish off the mask by
/// construction at every time step.
struct Control {
    Field values;  // spacetime
    SubdomainMask mask;
    ControlRole role = ControlRole::leader;
};

Control make_control(const Grid& grid, Field values, SubdomainMask mask, ControlRole role);
Control zero_control(const Grid& grid, SubdomainMask mask, ControlRole role);

/// Applies a mask to every slice.
Field masked(const Field& f, const SubdomainMask& mask);

/// Shifts an adjoint-type trajectory (stored at t_0..t_K) into the control/source
/// time convention: slice k of the result is slice k-1 of the input, slice 0 is
/// zero.  The value of an adjoint trajectory acting over the step (t_{k-1}, t_k]
/// is its slice k-1; this shift is what makes the discrete optimality and duality
/// identities exact rather than O(dt).
Field control_view_of_adjoint(const Grid& grid, const Field& adjoint_trajectory);

Control control_from_adjoint(const Grid& grid, const Field& adjoint_trajectory,
                             const SubdomainMask& mask, ControlRole role, double scale);

}  // namespace kolstack

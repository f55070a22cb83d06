#include "kolstack/grid.hpp"

#include <cmath>
#include <functional>
#include <sstream>

namespace kolstack {

Grid::Grid(GridConfig config) : cfg_(std::move(config)) {
    const int nd = cfg_.n_subsystems * cfg_.d_per_subsystem;
    if (cfg_.n_subsystems < 2) throw ConfigError("grid: n_subsystems must be >= 2");
    if (cfg_.d_per_subsystem < 1) throw ConfigError("grid: d_per_subsystem must be >= 1");
    if (static_cast<int>(cfg_.dims_per_axis.size()) != nd)
        throw ConfigError("grid: dims_per_axis must have n_subsystems * d_per_subsystem entries");
    if (cfg_.domain_bounds.size() != cfg_.dims_per_axis.size())
        throw ConfigError("grid: domain_bounds must match dims_per_axis");
    if (cfg_.n_time_steps < 1) throw ConfigError("grid: n_time_steps must be positive");
    if (!(cfg_.horizon_T > 0.0)) throw ConfigError("grid: horizon_T must be positive");

    h_.resize(nd);
    n_nodes_ = 1;
    for (int a = 0; a < nd; ++a) {
        const int m = cfg_.dims_per_axis[a];
        if (m < 3) {
            std::ostringstream os;
            os << "grid: axis " << a << " has " << m << " points, need >= 3";
            throw ConfigError(os.str());
        }
        const auto [lo, hi] = cfg_.domain_bounds[a];
        if (!(hi > lo)) {
            std::ostringstream os;
            os << "grid: axis " << a << " bounds are inverted or degenerate";
            throw ConfigError(os.str());
        }
        h_[a] = (hi - lo) / (m - 1);
        n_nodes_ *= m;
    }
    dt_ = cfg_.horizon_T / cfg_.n_time_steps;

    strides_.assign(nd, 1);
    for (int a = nd - 2; a >= 0; --a) strides_[a] = strides_[a + 1] * cfg_.dims_per_axis[a + 1];

    coords_.resize(n_nodes_, nd);
    boundary_.assign(n_nodes_, 0);
    interior_of_node_.assign(n_nodes_, -1);
    weights_.resize(n_nodes_);

    std::vector<int> mi(nd, 0);
    for (int node = 0; node < n_nodes_; ++node) {
        bool on_boundary = false;
        double w = 1.0;
        for (int a = 0; a < nd; ++a) {
            const int i = mi[a];
            const int m = cfg_.dims_per_axis[a];
            coords_(node, a) = cfg_.domain_bounds[a].first + h_[a] * i;
            const bool edge = (i == 0 || i == m - 1);
            on_boundary = on_boundary || edge;
            w *= edge ? 0.5 * h_[a] : h_[a];
        }
        boundary_[node] = on_boundary ? 1 : 0;
        weights_[node] = w;
        if (!on_boundary) {
            interior_of_node_[node] = n_interior_;
            node_of_interior_.push_back(node);
            ++n_interior_;
        }
        for (int a = nd - 1; a >= 0; --a) {
            if (++mi[a] < cfg_.dims_per_axis[a]) break;
            mi[a] = 0;
        }
    }

    interior_weights_.resize(n_interior_);
    for (int i = 0; i < n_interior_; ++i) interior_weights_[i] = weights_[node_of_interior_[i]];
}

int Grid::center_node() const {
    std::vector<int> mi(n_axes());
    for (int a = 0; a < n_axes(); ++a) mi[a] = (cfg_.dims_per_axis[a] - 1) / 2;
    return flat_index(mi);
}

int Grid::flat_index(const std::vector<int>& multi) const {
    int node = 0;
    for (int a = 0; a < n_axes(); ++a) node += multi[a] * strides_[a];
    return node;
}

std::vector<int> Grid::multi_index(int node) const {
    std::vector<int> mi(n_axes());
    for (int a = 0; a < n_axes(); ++a) {
        mi[a] = node / strides_[a];
        node -= mi[a] * strides_[a];
    }
    return mi;
}

int Grid::neighbor(int node, int axis, int offset) const {
    const int i = (node / strides_[axis]) % cfg_.dims_per_axis[axis];
    const int j = i + offset;
    if (j < 0 || j >= cfg_.dims_per_axis[axis]) return -1;
    return node + offset * strides_[axis];
}

Grid build_grid(const GridConfig& config) { return Grid(config); }

SubdomainMask make_mask(const Grid& grid, const std::vector<std::pair<double, double>>& box,
                        MaskLabel label) {
    if (static_cast<int>(box.size()) != grid.n_axes())
        throw ConfigError("make_mask: box must have one interval per axis");
    for (int a = 0; a < grid.n_axes(); ++a) {
        if (!(box[a].first < box[a].second))
            throw ConfigError("make_mask: box interval is empty or inverted");
        if (box[a].first < grid.lower(a) || box[a].second > grid.upper(a))
            throw ConfigError("make_mask: box must lie inside the domain bounds");
    }
    SubdomainMask mask;
    mask.label = label;
    mask.indicator = ArrayXd::Zero(grid.n_nodes());
    for (int i = 0; i < grid.n_interior(); ++i) {
        const int node = grid.node_of_interior(i);
        bool inside = true;
        for (int a = 0; a < grid.n_axes(); ++a) {
            const double x = grid.coord(node, a);
            if (x < box[a].first || x > box[a].second) { inside = false; break; }
        }
        if (inside) {
            mask.indicator[node] = 1.0;
            ++mask.count;
        }
    }
    if (mask.count == 0) throw ConfigError("make_mask: box contains no interior node");
    return mask;
}

Field zero_slice(const Grid& grid) {
    return Field{FieldKind::slice, MatrixXd::Zero(grid.n_nodes(), 1)};
}

Field zero_spacetime(const Grid& grid) {
    return Field{FieldKind::spacetime, MatrixXd::Zero(grid.n_nodes(), grid.n_slices())};
}

Field slice_from_function(const Grid& grid, const std::function<double(const VectorXd&)>& f) {
    Field out = zero_slice(grid);
    for (int node = 0; node < grid.n_nodes(); ++node) out.values(node, 0) = f(grid.node_coords(node));
    return out;
}

Field replicate_in_time(const Grid& grid, const Field& slice) {
    require_shape(grid, slice, "replicate_in_time");
    if (slice.kind != FieldKind::slice) throw ConfigError("replicate_in_time: expected a slice field");
    Field out = zero_spacetime(grid);
    out.values.colwise() = slice.values.col(0);
    return out;
}

void require_shape(const Grid& grid, const Field& f, const char* where) {
    const int expected_cols = (f.kind == FieldKind::slice) ? 1 : grid.n_slices();
    if (f.values.rows() != grid.n_nodes() || f.values.cols() != expected_cols) {
        std::ostringstream os;
        os << where << ": field shape " << f.values.rows() << "x" << f.values.cols()
           << " does not match grid (" << grid.n_nodes() << " nodes, "
           << expected_cols << " slices)";
        throw ConfigError(os.str());
    }
}

Field time_slice(const Grid& grid, const Field& f, int k) {
    require_shape(grid, f, "time_slice");
    if (f.kind != FieldKind::spacetime) throw ConfigError("time_slice: expected a spacetime field");
    if (k < 0 || k >= grid.n_slices()) throw ConfigError("time_slice: slice index out of range");
    return Field{FieldKind::slice, f.values.col(k)};
}

Field zero_on_boundary(const Grid& grid, Field f) {
    require_shape(grid, f, "zero_on_boundary");
    for (int node = 0; node < grid.n_nodes(); ++node)
        if (grid.is_boundary(node)) f.values.row(node).setZero();
    return f;
}

bool vanishes_on_boundary(const Grid& grid, const Field& f, double tol) {
    for (int node = 0; node < grid.n_nodes(); ++node)
        if (grid.is_boundary(node) && f.values.row(node).cwiseAbs().maxCoeff() > tol) return false;
    return true;
}

double inner_product(const Grid& grid, const Field& a, const Field& b) {
    require_shape(grid, a, "inner_product");
    require_shape(grid, b, "inner_product");
    if (a.kind != b.kind) throw ConfigError("inner_product: fields must have the same kind");
    const VectorXd& w = grid.quad_weights();
    if (a.kind == FieldKind::slice) return a.values.col(0).dot(w.cwiseProduct(b.values.col(0)));
    double acc = 0.0;
    for (int k = 1; k < grid.n_slices(); ++k)
        acc += a.values.col(k).dot(w.cwiseProduct(b.values.col(k)));
    return grid.dt() * acc;
}

double norm(const Grid& grid, const Field& f) { return std::sqrt(inner_product(grid, f, f)); }

Control make_control(const Grid& grid, Field values, SubdomainMask mask, ControlRole role) {
    require_shape(grid, values, "make_control");
    if (values.kind != FieldKind::spacetime)
        throw ConfigError("make_control: control values must be a spacetime field");
    values = masked(values, mask);
    return Control{std::move(values), std::move(mask), role};
}

Control zero_control(const Grid& grid, SubdomainMask mask, ControlRole role) {
    return Control{zero_spacetime(grid), std::move(mask), role};
}

Field masked(const Field& f, const SubdomainMask& mask) {
    Field out = f;
    out.values = f.values.array().colwise() * mask.indicator;
    return out;
}

Field control_view_of_adjoint(const Grid& grid, const Field& adjoint_trajectory) {
    require_shape(grid, adjoint_trajectory, "control_view_of_adjoint");
    if (adjoint_trajectory.kind != FieldKind::spacetime)
        throw ConfigError("control_view_of_adjoint: expected a spacetime field");
    Field out = zero_spacetime(grid);
    const int K = grid.n_time_steps();
    out.values.rightCols(K) = adjoint_trajectory.values.leftCols(K);
    return out;
}

Control control_from_adjoint(const Grid& grid, const Field& adjoint_trajectory,
                             const SubdomainMask& mask, ControlRole role, double scale) {
    Field view = control_view_of_adjoint(grid, adjoint_trajectory);
    view.values *= scale;
    return make_control(grid, std::move(view), mask, role);
}

}  // namespace kolstack

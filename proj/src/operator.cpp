#include "kolstack/operator.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <cmath>
#include <random>
#include <sstream>
#include <vector>

namespace kolstack {

namespace {

void check_finite(double v, const char* what, int node) {
    if (!std::isfinite(v)) {
        std::ostringstream os;
        os << "assemble_generator: " << what << " is not finite at node " << node;
        throw SolveError(os.str());
    }
}

}  // namespace

DiscreteOperator assemble_generator(const Grid& grid, const CoefficientSet& coeffs, double t) {
    if (coeffs.n_subsystems != grid.n_subsystems() ||
        coeffs.d_per_subsystem != grid.d_per_subsystem())
        throw ConfigError("assemble_generator: coefficient chain shape does not match the grid");

    const int d = grid.d_per_subsystem();
    const int n = grid.n_subsystems();
    const int ni = grid.n_interior();

    std::vector<Eigen::Triplet<double>> interior_entries;
    std::vector<Eigen::Triplet<double>> boundary_entries;
    interior_entries.reserve(static_cast<size_t>(ni) * (1 + 2 * grid.n_axes() + d * (d + 1)));

    // Accumulates one stencil leg, routed to the interior or boundary block.
    auto add = [&](int row, int node, double value) {
        if (value == 0.0) return;
        const int j = grid.interior_index(node);
        if (j >= 0)
            interior_entries.emplace_back(row, j, value);
        else
            boundary_entries.emplace_back(row, node, value);
    };

    for (int row = 0; row < ni; ++row) {
        const int node = grid.node_of_interior(row);
        const VectorXd x = grid.node_coords(node);

        const Eigen::MatrixXd a = coeffs.diffusion(t, x);
        for (int r = 0; r < d; ++r)
            for (int s = 0; s < d; ++s) check_finite(a(r, s), "diffusion", node);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (a + a.transpose()));
        if (es.eigenvalues().minCoeff() < coeffs.lambda_min - 1e-12) {
            std::ostringstream os;
            os << "assemble_generator: diffusion eigenvalue "
               << es.eigenvalues().minCoeff() << " below lambda_min = " << coeffs.lambda_min
               << " at node " << node;
            throw SolveError(os.str());
        }

        // (1/2) tr(a D^2) on the first block.
        for (int r = 0; r < d; ++r) {
            const double hr = grid.spacing(r);
            const double c = 0.5 * a(r, r) / (hr * hr);
            add(row, grid.neighbor(node, r, +1), c);
            add(row, grid.neighbor(node, r, -1), c);
            add(row, node, -2.0 * c);
        }
        for (int r = 0; r < d; ++r) {
            for (int s = r + 1; s < d; ++s) {
                const double c = a(r, s) / (4.0 * grid.spacing(r) * grid.spacing(s));
                if (c == 0.0) continue;
                const int pp = grid.neighbor(grid.neighbor(node, r, +1), s, +1);
                const int mm = grid.neighbor(grid.neighbor(node, r, -1), s, -1);
                const int pm = grid.neighbor(grid.neighbor(node, r, +1), s, -1);
                const int mp = grid.neighbor(grid.neighbor(node, r, -1), s, +1);
                add(row, pp, c);
                add(row, mm, c);
                add(row, pm, -c);
                add(row, mp, -c);
            }
        }

        // Transport, upwinded against the local drift sign.
        for (int block = 0; block < n; ++block) {
            const VectorXd f = coeffs.drift[block](t, x);
            for (int c = 0; c < d; ++c) {
                const int axis = block * d + c;
                const double v = f[c];
                check_finite(v, "drift", node);
                if (v == 0.0) continue;
                const double h = grid.spacing(axis);
                if (v > 0.0) {
                    add(row, node, v / h);
                    add(row, grid.neighbor(node, axis, -1), -v / h);
                } else {
                    add(row, grid.neighbor(node, axis, +1), v / h);
                    add(row, node, -v / h);
                }
            }
        }
    }

    DiscreteOperator op;
    op.time = t;
    op.matrix.resize(ni, ni);
    op.matrix.setFromTriplets(interior_entries.begin(), interior_entries.end());
    op.matrix.makeCompressed();
    op.boundary_coupling.resize(ni, grid.n_nodes());
    op.boundary_coupling.setFromTriplets(boundary_entries.begin(), boundary_entries.end());
    op.boundary_coupling.makeCompressed();
    return op;
}

DiscreteOperator adjoint_of(const DiscreteOperator& op, const Grid& grid) {
    const VectorXd& w = grid.interior_weights();
    if (op.matrix.rows() != w.size())
        throw ConfigError("adjoint_of: operator does not match the grid");
    SparseMat at = SparseMat(op.matrix.transpose());
    // A*_{ij} = w_j A_{ji} / w_i
    for (int row = 0; row < at.outerSize(); ++row)
        for (SparseMat::InnerIterator it(at, row); it; ++it)
            it.valueRef() = it.value() * w[it.col()] / w[row];
    DiscreteOperator adj;
    adj.matrix = std::move(at);
    adj.matrix.makeCompressed();
    adj.boundary_coupling.resize(op.matrix.rows(), grid.n_nodes());
    adj.time = op.time;
    adj.convention = op.convention;
    return adj;
}

VectorXd apply_operator(const Grid& grid, const DiscreteOperator& op, const Field& slice) {
    require_shape(grid, slice, "apply_operator");
    if (slice.kind != FieldKind::slice) throw ConfigError("apply_operator: expected a slice field");
    VectorXd out = op.matrix * interior_vector(grid, slice);
    if (op.boundary_coupling.nonZeros() > 0) out += op.boundary_coupling * slice.values.col(0);
    return out;
}

VectorXd interior_vector(const Grid& grid, const Field& slice) {
    require_shape(grid, slice, "interior_vector");
    VectorXd v(grid.n_interior());
    for (int i = 0; i < grid.n_interior(); ++i) v[i] = slice.values(grid.node_of_interior(i), 0);
    return v;
}

Field slice_from_interior(const Grid& grid, const VectorXd& interior) {
    if (interior.size() != grid.n_interior())
        throw ConfigError("slice_from_interior: size mismatch");
    Field out = zero_slice(grid);
    for (int i = 0; i < grid.n_interior(); ++i)
        out.values(grid.node_of_interior(i), 0) = interior[i];
    return out;
}

int hormander_rank(const CoefficientSet& coeffs, const Grid& grid) {
    if (coeffs.time_dependent)
        throw ConfigError("hormander_rank: diagnostic requires autonomous coefficients");
    const int nd = grid.n_axes();
    const int d = grid.d_per_subsystem();
    const VectorXd center = grid.node_coords(grid.center_node());

    auto full_drift = [&](const VectorXd& x) {
        VectorXd f(nd);
        for (int block = 0; block < coeffs.n_subsystems; ++block)
            f.segment(block * d, d) = coeffs.drift[block](0.0, x);
        return f;
    };

    // Affinity of the drift: second differences must vanish, including cross terms.
    std::mt19937_64 rng(11u);
    double scale = 0.0;
    for (int a = 0; a < nd; ++a) scale = std::max(scale, grid.upper(a) - grid.lower(a));
    const double h = 0.05 * scale;
    for (int trial = 0; trial < 4; ++trial) {
        VectorXd x = center;
        if (trial > 0) {
            std::uniform_real_distribution<double> dist(-0.2 * scale, 0.2 * scale);
            for (int a = 0; a < nd; ++a) x[a] += dist(rng);
        }
        const VectorXd f0 = full_drift(x);
        const double tol = 1e-8 * (1.0 + f0.norm());
        for (int a = 0; a < nd; ++a) {
            VectorXd xp = x, xm = x;
            xp[a] += h;
            xm[a] -= h;
            if ((full_drift(xp) + full_drift(xm) - 2.0 * f0).cwiseAbs().maxCoeff() > tol)
                throw ConfigError("hormander_rank: drift is not affine in x");
            for (int b = a + 1; b < nd; ++b) {
                VectorXd xab = xp;
                xab[b] += h;
                VectorXd xb = x;
                xb[b] += h;
                if ((full_drift(xab) - full_drift(xp) - full_drift(xb) + f0).cwiseAbs().maxCoeff() >
                    tol)
                    throw ConfigError("hormander_rank: drift is not affine in x");
            }
        }
        if ((coeffs.sigma(0.0, x) - coeffs.sigma(0.0, center)).cwiseAbs().maxCoeff() >
            1e-10 * (1.0 + coeffs.sigma(0.0, center).norm()))
            throw ConfigError("hormander_rank: diffusion must be constant for the diagnostic");
    }

    // Jacobian of the affine drift (central differences are exact here).
    Eigen::MatrixXd M(nd, nd);
    for (int a = 0; a < nd; ++a) {
        VectorXd xp = center, xm = center;
        xp[a] += h;
        xm[a] -= h;
        M.col(a) = (full_drift(xp) - full_drift(xm)) / (2.0 * h);
    }

    const Eigen::MatrixXd sg = coeffs.sigma(0.0, center);
    const int m = static_cast<int>(sg.cols());
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(nd, m);
    B.topRows(d) = sg;

    Eigen::MatrixXd kalman(nd, nd * m);
    Eigen::MatrixXd power = B;
    for (int k = 0; k < nd; ++k) {
        kalman.middleCols(k * m, m) = power;
        power = M * power;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(kalman);
    qr.setThreshold(1e-8);
    return static_cast<int>(qr.rank());
}

}  // namespace kolstack

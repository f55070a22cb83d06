#include <cmath>
#include <random>

#include "doctest.h"
#include "kolstack/operator.hpp"
#include "test_helpers.hpp"

using namespace kolstack;
using kolstack::testing::random_slice;
using kolstack::testing::square_grid_config;

namespace {

// Independent dense-stencil evaluation of the operator on a slice: plain loops
// over multi-indices, no sparse assembly.  Test-only oracle.
VectorXd dense_stencil_apply(const Grid& grid, const CoefficientSet& coeffs, double t,
                             const Field& y) {
    const int d = grid.d_per_subsystem();
    VectorXd out(grid.n_interior());
    for (int i = 0; i < grid.n_interior(); ++i) {
        const int node = grid.node_of_interior(i);
        const VectorXd x = grid.node_coords(node);
        const Eigen::MatrixXd a = coeffs.diffusion(t, x);
        double acc = 0.0;
        for (int r = 0; r < d; ++r) {
            const double h = grid.spacing(r);
            const double yp = y.values(grid.neighbor(node, r, +1), 0);
            const double ym = y.values(grid.neighbor(node, r, -1), 0);
            const double y0 = y.values(node, 0);
            acc += 0.5 * a(r, r) * (yp - 2.0 * y0 + ym) / (h * h);
        }
        for (int r = 0; r < d; ++r)
            for (int s = r + 1; s < d; ++s) {
                const double hr = grid.spacing(r), hs = grid.spacing(s);
                const double pp = y.values(grid.neighbor(grid.neighbor(node, r, +1), s, +1), 0);
                const double mm = y.values(grid.neighbor(grid.neighbor(node, r, -1), s, -1), 0);
                const double pm = y.values(grid.neighbor(grid.neighbor(node, r, +1), s, -1), 0);
                const double mp = y.values(grid.neighbor(grid.neighbor(node, r, -1), s, +1), 0);
                acc += a(r, s) * (pp - pm - mp + mm) / (4.0 * hr * hs);
            }
        for (int block = 0; block < grid.n_subsystems(); ++block) {
            const VectorXd f = coeffs.drift[block](t, x);
            for (int c = 0; c < d; ++c) {
                const int axis = block * d + c;
                const double h = grid.spacing(axis);
                const double y0 = y.values(node, 0);
                if (f[c] >= 0.0)
                    acc += f[c] * (y0 - y.values(grid.neighbor(node, axis, -1), 0)) / h;
                else
                    acc += f[c] * (y.values(grid.neighbor(node, axis, +1), 0) - y0) / h;
            }
        }
        out[i] = acc;
    }
    return out;
}

Field sampled(const Grid& grid, double (*f)(double, double)) {
    return slice_from_function(grid, [f](const VectorXd& x) { return f(x[0], x[1]); });
}

}  // namespace

TEST_CASE("assemble_generator: centered differences are exact on quadratics") {
    Grid grid = build_grid(square_grid_config(17, 8));
    CoefficientSet coeffs = make_coefficients("constant", {{"diffusion", 2.0}});
    DiscreteOperator op = assemble_generator(grid, coeffs, 0.0);
    Field y = sampled(grid, [](double x1, double) { return x1 * x1; });
    VectorXd ay = apply_operator(grid, op, y);
    for (int i = 0; i < grid.n_interior(); ++i) CHECK(ay[i] == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("assemble_generator: transport of a linear function is exact") {
    Grid grid = build_grid(square_grid_config(17, 8));
    CoefficientSet coeffs = make_coefficients("kolmogorov");
    DiscreteOperator op = assemble_generator(grid, coeffs, 0.0);
    Field y = sampled(grid, [](double, double x2) { return x2; });
    VectorXd ay = apply_operator(grid, op, y);
    for (int i = 0; i < grid.n_interior(); ++i) {
        const double x1 = grid.coord(grid.node_of_interior(i), 0);
        CHECK(ay[i] == doctest::Approx(x1).epsilon(1e-13));
    }
}

TEST_CASE("assemble_generator: matches the dense-stencil oracle on random fields") {
    Grid grid = build_grid(square_grid_config(9, 4));
    std::mt19937_64 rng(17);
    for (const char* name : {"kolmogorov", "rotation", "constant"}) {
        CoefficientSet coeffs = make_coefficients(name);
        DiscreteOperator op = assemble_generator(grid, coeffs, 0.0);
        for (int trial = 0; trial < 3; ++trial) {
            Field y = random_slice(grid, rng, false);
            VectorXd sparse = apply_operator(grid, op, y);
            VectorXd dense = dense_stencil_apply(grid, coeffs, 0.0, y);
            CHECK((sparse - dense).cwiseAbs().maxCoeff() <= 1e-13 * (1.0 + dense.cwiseAbs().maxCoeff()));
        }
    }
}

TEST_CASE("assemble_generator: sparsity stays within the stencil bound") {
    Grid grid = build_grid(square_grid_config(9, 4));
    CoefficientSet coeffs = make_coefficients("rotation");
    DiscreteOperator op = assemble_generator(grid, coeffs, 0.0);
    const int nd = grid.n_axes();
    const int d = grid.d_per_subsystem();
    const int bound = 1 + 2 * nd + d * (d + 1);
    for (int r = 0; r < op.matrix.outerSize(); ++r) {
        int nnz = 0;
        for (SparseMat::InnerIterator it(op.matrix, r); it; ++it) ++nnz;
        for (SparseMat::InnerIterator it(op.boundary_coupling, r); it; ++it) ++nnz;
        CHECK(nnz <= bound);
    }
}

TEST_CASE("assemble_generator: diffusion below the declared bound is rejected") {
    Grid grid = build_grid(square_grid_config(9, 4));
    CoefficientSet coeffs = make_coefficients("constant");
    coeffs.lambda_min = 2.0;  // actual diffusion is 1.0
    CHECK_THROWS_AS(assemble_generator(grid, coeffs, 0.0), SolveError);

    CoefficientSet bad = make_coefficients("constant");
    bad.drift[0] = [](double, const VectorXd&) {
        return VectorXd::Constant(1, std::nan(""));
    };
    CHECK_THROWS_AS(assemble_generator(grid, bad, 0.0), SolveError);
}

TEST_CASE("adjoint_of: self-adjoint pure diffusion and exact duality") {
    Grid grid = build_grid(square_grid_config(17, 8));
    CoefficientSet diff = make_coefficients("constant");
    DiscreteOperator a = assemble_generator(grid, diff, 0.0);
    DiscreteOperator astar = adjoint_of(a, grid);
    CHECK((SparseMat(a.matrix - astar.matrix)).coeffs().cwiseAbs().maxCoeff() <= 1e-14);

    CoefficientSet kol = make_coefficients("kolmogorov");
    DiscreteOperator k = assemble_generator(grid, kol, 0.0);
    DiscreteOperator kstar = adjoint_of(k, grid);
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        Field y = random_slice(grid, rng);
        Field p = random_slice(grid, rng);
        Field ay = slice_from_interior(grid, apply_operator(grid, k, y));
        Field asp = slice_from_interior(grid, apply_operator(grid, kstar, p));
        const double lhs = inner_product(grid, ay, p);
        const double rhs = inner_product(grid, y, asp);
        CHECK(std::abs(lhs - rhs) <= 1e-12 * norm(grid, y) * norm(grid, p));
    }

    DiscreteOperator back = adjoint_of(kstar, grid);
    CHECK((SparseMat(back.matrix - k.matrix)).coeffs().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("consistency order: O(h) on upwinded transport, O(h^2) on diffusion") {
    auto sup_error = [](int points, const CoefficientSet& coeffs,
                        double (*exact_L)(double, double), double (*yfun)(double, double)) {
        Grid grid = build_grid(square_grid_config(points, 4));
        DiscreteOperator op = assemble_generator(grid, coeffs, 0.0);
        Field y = sampled(grid, yfun);
        VectorXd ay = apply_operator(grid, op, y);
        double err = 0.0;
        for (int i = 0; i < grid.n_interior(); ++i) {
            const int node = grid.node_of_interior(i);
            err = std::max(err, std::abs(ay[i] - exact_L(grid.coord(node, 0), grid.coord(node, 1))));
        }
        return err;
    };
    auto slope = [](double e_coarse, double e_fine) { return std::log2(e_coarse / e_fine); };

    // Transport-dominated: y quadratic in x1 so the diffusion part is exact and
    // the upwind O(h) error is the whole story.
    CoefficientSet kol = make_coefficients("kolmogorov");
    auto y_t = [](double x1, double x2) { return (x1 + 0.3 * x1 * x1) * std::sin(M_PI * x2); };
    auto l_t = [](double x1, double x2) {
        return 0.5 * 0.6 * std::sin(M_PI * x2) +
               x1 * (x1 + 0.3 * x1 * x1) * M_PI * std::cos(M_PI * x2);
    };
    const double t9 = sup_error(9, kol, l_t, y_t);
    const double t17 = sup_error(17, kol, l_t, y_t);
    const double t33 = sup_error(33, kol, l_t, y_t);
    CHECK(slope(t9, t17) == doctest::Approx(1.0).epsilon(0.3));
    CHECK(slope(t17, t33) == doctest::Approx(1.0).epsilon(0.3));

    CoefficientSet diff = make_coefficients("constant", {{"diffusion", 2.0}});
    auto y_d = [](double x1, double x2) { return std::sin(M_PI * x1) * std::sin(M_PI * x2); };
    auto l_d = [](double x1, double x2) {
        return -M_PI * M_PI * std::sin(M_PI * x1) * std::sin(M_PI * x2);
    };
    const double d9 = sup_error(9, diff, l_d, y_d);
    const double d17 = sup_error(17, diff, l_d, y_d);
    const double d33 = sup_error(33, diff, l_d, y_d);
    CHECK(slope(d9, d17) == doctest::Approx(2.0).epsilon(0.15));
    CHECK(slope(d17, d33) == doctest::Approx(2.0).epsilon(0.15));
}

TEST_CASE("hormander_rank: coupled, decoupled and three-subsystem chains") {
    Grid grid2 = build_grid(square_grid_config(9, 4));
    CHECK(hormander_rank(make_coefficients("kolmogorov"), grid2) == 2);
    CHECK(hormander_rank(make_coefficients("constant"), grid2) == 1);
    CHECK(hormander_rank(make_coefficients("rotation"), grid2) == 2);

    GridConfig cfg3;
    cfg3.n_subsystems = 3;
    cfg3.d_per_subsystem = 1;
    cfg3.dims_per_axis = {7, 7, 7};
    cfg3.domain_bounds = {{-1.0, 1.0}, {-1.0, 1.0}, {-1.0, 1.0}};
    cfg3.n_time_steps = 4;
    cfg3.horizon_T = 1.0;
    Grid grid3 = build_grid(cfg3);
    CHECK(hormander_rank(make_coefficients("chain3"), grid3) == 3);
}

TEST_CASE("hormander_rank: refuses non-affine drift instead of guessing") {
    Grid grid = build_grid(square_grid_config(9, 4));
    CoefficientSet coeffs = make_coefficients("kolmogorov");
    coeffs.drift[1] = [](double, const VectorXd& x) {
        return VectorXd::Constant(1, x[0] * x[0]);
    };
    CHECK_THROWS_AS(hormander_rank(coeffs, grid), ConfigError);
}

TEST_CASE("chain structure: excluded coordinates are rejected and inert") {
    GridConfig cfg3;
    cfg3.n_subsystems = 3;
    cfg3.d_per_subsystem = 1;
    cfg3.dims_per_axis = {7, 7, 7};
    cfg3.domain_bounds = {{-1.0, 1.0}, {-1.0, 1.0}, {-1.0, 1.0}};
    cfg3.n_time_steps = 4;
    cfg3.horizon_T = 1.0;
    Grid grid = build_grid(cfg3);

    CoefficientSet bad = make_coefficients("chain3");
    bad.drift[2] = [](double, const VectorXd& x) { return VectorXd::Constant(1, x[0]); };
    CHECK_THROWS_AS(validate_coefficients(bad, grid), ConfigError);

    // A valid f3 never reads x1: scrambling that coordinate before the call
    // must leave the assembled matrix bit-identical.
    CoefficientSet base = make_coefficients("chain3");
    CoefficientSet scrambled = base;
    auto f3 = base.drift[2];
    scrambled.drift[2] = [f3](double t, const VectorXd& x) {
        VectorXd xs = x;
        xs[0] = 1e6 * x[0] + 13.0;
        return f3(t, xs);
    };
    DiscreteOperator a = assemble_generator(grid, base, 0.0);
    DiscreteOperator b = assemble_generator(grid, scrambled, 0.0);
    CHECK((SparseMat(a.matrix - b.matrix)).coeffs().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("validate_coefficients: sigma consistency and shape checks") {
    Grid grid = build_grid(square_grid_config(9, 4));
    CoefficientSet ok = make_coefficients("kolmogorov");
    CHECK_NOTHROW(validate_coefficients(ok, grid));

    CoefficientSet bad = ok;
    bad.sigma = [](double, const VectorXd&) { return Eigen::MatrixXd::Constant(1, 1, 3.0); };
    CHECK_THROWS_AS(validate_coefficients(bad, grid), ConfigError);
}

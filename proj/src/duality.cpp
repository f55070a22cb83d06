#include "kolstack/duality.hpp"

#include <cmath>

namespace kolstack {

double conjugate_J1(const Grid& grid, const Control& u1_star) { return eval_J1(grid, u1_star); }

double conjugate_J2(const Grid& grid, const DualVariable& xi, const Field& target,
                    const Field& y0_T, double alpha) {
    require_shape(grid, xi.xi, "conjugate_J2 xi");
    require_shape(grid, target, "conjugate_J2 target");
    require_shape(grid, y0_T, "conjugate_J2 y0_T");
    Field diff = target;
    diff.values -= y0_T.values;
    return inner_product(grid, xi.xi, diff) + alpha * norm(grid, xi.xi);
}

DualityReport duality_report(const Problem& problem, const StackelbergSolution& sol,
                             const Field& target, double alpha) {
    const Grid& grid = problem.grid();
    DualityReport report;
    report.primal_value = conjugate_J1(grid, sol.u1_star);

    // D(xi*) = J1*(H* xi*) + J2*(-xi*), evaluated through the two conjugates.
    DualVariable neg{sol.xi_star.xi};
    neg.xi.values = -neg.xi.values;
    report.dual_value = conjugate_J1(grid, sol.u1_star) +
                        conjugate_J2(grid, neg, target, sol.y0_terminal, alpha);
    report.gap = report.primal_value + report.dual_value;

    // Pairing identity, both sides from fresh solves.
    Field zT = apply_H(problem, sol.u1_star);
    const double lhs = inner_product(grid, zT, sol.xi_star.xi);
    Control phi = apply_H_star(problem, sol.xi_star);
    const double rhs = inner_product(grid, sol.u1_star.values, phi.values);
    report.adjoint_identity_error = std::abs(lhs - rhs);
    return report;
}

}  // namespace kolstack

#include "kolstack/follower.hpp"

namespace kolstack {

namespace {

void require_role(const Control& c, ControlRole role, const char* where) {
    if (c.role != role) throw ConfigError(std::string(where) + ": control has the wrong role");
}

}  // namespace

BestResponse best_response(const Problem& problem, const Control& u1, const Field& y_rf,
                           CoupledMethod method) {
    require_role(u1, ControlRole::leader, "best_response");
    require_shape(problem.grid(), y_rf, "best_response y_rf");
    if (y_rf.kind != FieldKind::spacetime)
        throw ConfigError("best_response: y_rf must be a spacetime field");

    CoupledSolution sol = problem.solve_coupled(u1.values, y_rf, nullptr, method);
    BestResponse br;
    br.u2_star = control_from_adjoint(problem.grid(), sol.p, problem.u2_mask(),
                                      ControlRole::follower, -1.0 / problem.beta());
    br.y = std::move(sol.y);
    br.p = std::move(sol.p);
    br.residual = sol.report.residual;
    br.report = sol.report;
    return br;
}

double eval_J1(const Grid& grid, const Control& u1) {
    require_role(u1, ControlRole::leader, "eval_J1");
    return 0.5 * inner_product(grid, u1.values, u1.values);
}

double eval_J2(const Problem& problem, const Control& u1, const Control& u2, const Field& y_rf) {
    require_role(u1, ControlRole::leader, "eval_J2");
    require_role(u2, ControlRole::follower, "eval_J2");
    const Grid& grid = problem.grid();
    Field source = u1.values;
    source.values += u2.values.values;
    Field y = problem.forward(source, zero_slice(grid));
    Field misfit = y;
    misfit.values -= y_rf.values;
    return 0.5 * inner_product(grid, misfit, misfit) +
           0.5 * problem.beta() * inner_product(grid, u2.values, u2.values);
}

double stationarity_residual(const Problem& problem, const BestResponse& br, const Control& u1,
                             const Field& y_rf) {
    const Grid& grid = problem.grid();
    Field source = u1.values;
    source.values += br.u2_star.values.values;
    Field y = problem.forward(source, zero_slice(grid));
    Field misfit = y;
    misfit.values -= y_rf.values;
    Field p = problem.backward(misfit, zero_slice(grid));

    Field residual = masked(control_view_of_adjoint(grid, p), problem.u2_mask());
    residual.values += problem.beta() * br.u2_star.values.values;
    return norm(grid, residual) / (1.0 + norm(grid, br.u2_star.values));
}

}  // namespace kolstack

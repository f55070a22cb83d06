#pragma once

#include "kolstack/problem.hpp"

namespace kolstack {

/// Result of the follower's best-response map: u2 = -(1/beta) p chi_U2 with
/// (y, p) solving the coupled optimality system at the given leader control.
/// `u2_star` satisfies its defining relation exactly by construction; the
/// reported residual measures convergence of the coupled solve instead.
struct BestResponse {
    Control u2_star;
    Field y;
    Field p;
    double residual = 0.0;
    SolverReport report;
};

/// Solves the follower's optimality system for a given leader control and
/// returns the best response.  Monolithic space-time solve on small instances,
/// damped Picard otherwise (or as forced by `method`).
BestResponse best_response(const Problem& problem, const Control& u1, const Field& y_rf,
                           CoupledMethod method = CoupledMethod::automatic);

/// Leader cost (1/2) * integral of u1^2 over (0,T) x U1.
double eval_J1(const Grid& grid, const Control& u1);

/// Follower cost at controls (u1, u2): tracking misfit plus (beta/2) * ||u2||^2,
/// with the state from a plain forward solve at u1 chi_U1 + u2 chi_U2.
double eval_J2(const Problem& problem, const Control& u1, const Control& u2, const Field& y_rf);

/// Recomputes the adjoint from a fresh forward+backward pass at (u1, u2*) and
/// returns || p chi_U2 + beta u2* || / (1 + ||u2*||) -- the genuine first-order
/// residual, independent of how u2* was constructed.
double stationarity_residual(const Problem& problem, const BestResponse& br, const Control& u1,
                             const Field& y_rf);

}  // namespace kolstack

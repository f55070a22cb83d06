#pragma once

#include <optional>
#include <vector>

#include "kolstack/follower.hpp"

namespace kolstack {

/// Terminal-layer dual variable xi in L^2(Omega); vanishes on the boundary.
struct DualVariable {
    Field xi;  // slice
};

enum class DualMethod {
    prox_gradient,  // proximal gradient with exact L2 soft-thresholding (alpha > 0)
    cg_smooth       // conjugate gradient on the smooth part (alpha = 0 cross-check)
};

struct DualOptions {
    double tol = 1e-7;       // prox fixed-point residual (absolute)
    int max_iter = 200000;
    /// Nesterov momentum with the strong-convexity coefficient estimated from
    /// the alpha ||xi|| term; plain (textbook, per-step monotone) proximal
    /// gradient when false.
    bool accelerate = true;
    double backtrack_start = 1.0;
    double backtrack_shrink = 0.5;
    /// Step regrowth factor per iteration; 1.0 keeps the step monotone, which
    /// the damped momentum needs (step jumps kick its slow modes).
    double backtrack_grow = 1.0;
    bool materialize_gramian = true;  // assemble the dense H H* when small enough
    int gramian_limit = 4096;         // max interior nodes for materialization
    DualMethod method = DualMethod::prox_gradient;
    int vi_samples = 100;
    unsigned seed = 2024;
    double controllability_tol = 1e-6;  // slack beyond alpha for the terminal constraint
};

struct DualHistory {
    /// D at the incumbent iterate; non-increasing (per-step in plain mode,
    /// best-so-far under acceleration).
    std::vector<double> objective;
    std::vector<double> residual;  // prox fixed-point residual
    std::vector<double> step_size;
    int iterations = 0;
    bool converged = false;
    double final_residual = 0.0;
};

struct DualSolution {
    DualVariable xi;
    DualHistory history;
};

/// Thrown when the dual iteration exhausts max_iter; carries the history.
class DualNonConvergence : public SolveError {
public:
    DualNonConvergence(const std::string& what, DualHistory history)
        : SolveError(what, history.final_residual, history.iterations),
          history(std::move(history)) {}
    DualHistory history;
};

struct StackelbergSolution {
    Control u1_star;
    Control u2_star;
    DualVariable xi_star;
    Field y;  // closed-loop state trajectory
    Field p;  // follower adjoint
    Field y0_terminal;          // background terminal slice y0(T)
    double terminal_error = 0.0;  // || y(T) - target ||
    double dual_value = 0.0;      // D(xi*); primal_value + dual_value -> 0 at optimality
    double primal_value = 0.0;    // J1(u1*)
    DualHistory dual_history;
    SolverReport follower_report;
};

/// Background (leader-free) coupled system: the trajectory the follower settles
/// into with no leader action.  y0(T) shifts the controllability target.
CoupledSolution solve_background(const Problem& problem, const Field& y_rf);

/// Control-to-terminal-state map: z(T; u1) through the coupled (z, q) system
/// with zero tracking.  Linear in u1.
Field apply_H(const Problem& problem, const Control& u1);

/// Adjoint of apply_H: backward phi with terminal value xi coupled to forward
/// theta, returning phi restricted to U1 as a leader control.  Satisfies
/// (H u1, xi) = <u1, H* xi> exactly in the discrete pairing.
Control apply_H_star(const Problem& problem, const DualVariable& xi);

/// Minimizes D(xi) = 1/2 ||H* xi||^2 + alpha ||xi|| - (xi, target - y0(T)) by
/// proximal gradient with backtracking; the nonsmooth term is handled exactly
/// by L2 soft-thresholding.  `warm_start`, when given, seeds the iteration
/// (the default start is xi = 0).
DualSolution solve_dual(const Problem& problem, const Field& target, double alpha,
                        const Field& y_rf, const DualOptions& opts = {},
                        const DualVariable* warm_start = nullptr);

/// Evaluates V(xi_hat) = (y(T;xi) - target, xi_hat - xi) + alpha(||xi_hat|| - ||xi||)
/// over n_samples random candidates plus deterministic probes (0, 2 xi and
/// steepest-violation directions) and returns the minimum; >= -tol certifies
/// the variational inequality, a clearly negative value flags a bogus xi.
/// y(T;xi) comes from the full coupled pipeline, not from the dual iteration.
double check_variational_inequality(const Problem& problem, const DualVariable& xi,
                                    const Field& target, double alpha, int n_samples,
                                    const Field& y_rf, unsigned seed = 2024);

/// Full pipeline: background -> dual solve -> u1* = H* xi* -> follower best
/// response.  Throws InvariantError when the terminal constraint
/// ||y(T) - target|| <= alpha + controllability_tol fails, DualNonConvergence
/// when the dual iteration stalls.
StackelbergSolution solve_stackelberg(const Problem& problem, const Field& target, double alpha,
                                      const Field& y_rf, const DualOptions& opts = {},
                                      const DualVariable* warm_start = nullptr);

}  // namespace kolstack

#pragma once

#include "kolstack/leader.hpp"

namespace kolstack {

/// Primal/dual bookkeeping at a computed solution.  Sign convention: dual_value
/// is the dual objective D(xi*) itself, so gap = primal_value + dual_value and
/// strong duality drives the sum to zero at optimality.
struct DualityReport {
    double primal_value = 0.0;
    double dual_value = 0.0;
    double gap = 0.0;
    /// |(z(T), xi) - <u1, H* xi>| with both sides from independent solves.
    double adjoint_identity_error = 0.0;
};

/// The quadratic leader cost is its own conjugate under the pairing; returns
/// J1(u1*) bit-for-bit.
double conjugate_J1(const Grid& grid, const Control& u1_star);

/// Conjugate of the target-ball indicator: (xi, target - y0_T) + alpha ||xi||.
double conjugate_J2(const Grid& grid, const DualVariable& xi, const Field& target,
                    const Field& y0_T, double alpha);

/// Evaluates primal and dual objectives at a computed solution plus the
/// adjoint-pairing identity with freshly solved trajectories.
DualityReport duality_report(const Problem& problem, const StackelbergSolution& sol,
                             const Field& target, double alpha);

}  // namespace kolstack

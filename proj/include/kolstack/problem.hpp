#pragma once

#include <memory>

#include "kolstack/solvers.hpp"

namespace kolstack {

/// Aggregates the static data of one control problem instance (grid, operator
/// coefficients, the two control subdomains, the follower weight beta) together
/// with the solver caches that every pipeline stage shares: assembled operators,
/// step factorizations, and the monolithic space-time factorization.  All
/// shared state is immutable after construction; const use is thread-safe.
class Problem {
public:
    Problem(Grid grid, CoefficientSet coeffs, SubdomainMask u1_mask, SubdomainMask u2_mask,
            double beta, SolverOptions options = {});

    const Grid& grid() const { return *grid_; }
    const CoefficientSet& coeffs() const { return engine_->coeffs(); }
    const SubdomainMask& u1_mask() const { return u1_; }
    const SubdomainMask& u2_mask() const { return u2_; }
    double beta() const { return coupled_->beta(); }
    const SolverOptions& options() const { return engine_->options(); }

    const PdeEngine& engine() const { return *engine_; }
    const CoupledEngine& coupled() const { return *coupled_; }

    Field forward(const Field& source, const Field& initial) const {
        return engine_->march_forward(source, initial);
    }
    Field backward(const Field& source, const Field& terminal,
                   OperatorSide side = OperatorSide::adjoint) const {
        return engine_->march_backward(source, terminal, side);
    }
    CoupledSolution solve_coupled(const Field& forcing, const Field& tracking,
                                  const Field* terminal = nullptr,
                                  CoupledMethod method = CoupledMethod::automatic) const {
        return coupled_->solve(forcing, tracking, terminal, method);
    }

private:
    std::unique_ptr<Grid> grid_;
    SubdomainMask u1_;
    SubdomainMask u2_;
    std::unique_ptr<PdeEngine> engine_;
    std::unique_ptr<CoupledEngine> coupled_;
};

}  // namespace kolstack

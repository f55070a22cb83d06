#include "kolstack/problem.hpp"

namespace kolstack {

Problem::Problem(Grid grid, CoefficientSet coeffs, SubdomainMask u1_mask, SubdomainMask u2_mask,
                 double beta, SolverOptions options)
    : grid_(std::make_unique<Grid>(std::move(grid))), u1_(std::move(u1_mask)),
      u2_(std::move(u2_mask)) {
    if (!u1_.disjoint_with(u2_))
        throw ConfigError("Problem: the leader and follower subdomains must be disjoint");
    validate_coefficients(coeffs, *grid_);
    engine_ = std::make_unique<PdeEngine>(*grid_, std::move(coeffs), options);
    coupled_ = std::make_unique<CoupledEngine>(*engine_, u2_, beta);
}

}  // namespace kolstack

#pragma once

#include <cstdint>
#include <optional>

#include "kolstack/coefficients.hpp"
#include "kolstack/grid.hpp"

namespace kolstack {

/// Terminal samples of the chain.  Reproducible: the same seed produces the
/// same ensemble, independent of the thread count.
struct PathEnsemble {
    int n_paths = 0;
    double dt = 0.0;
    Eigen::MatrixXd states;      // nd x n_paths terminal states
    std::vector<char> exited;    // path was absorbed at the domain boundary
    std::uint64_t seed = 0;
};

/// Euler-Maruyama simulation of the chain: noise enters only through the first
/// d coordinates, drift block j >= 2 reads its restricted arguments.  When
/// `absorb_bounds` is given, paths leaving the box are frozen where they
/// crossed and flagged.  dt must divide T within rounding.
PathEnsemble simulate_chain(const CoefficientSet& coeffs, const VectorXd& x0, double T, double dt,
                            int n_paths, std::uint64_t seed,
                            const std::vector<std::pair<double, double>>* absorb_bounds = nullptr,
                            int n_threads = 1);

struct FeynmanKacResult {
    double mc_value = 0.0;
    double pde_value = 0.0;
    double std_error = 0.0;
    int n_exited = 0;
};

/// Compares E[payoff(X_T)] started at the domain center (Monte Carlo with
/// absorption, payoff 0 on exit) against the terminal-value PDE march of the
/// generator evaluated at the center node.  This is the consistency oracle
/// pinning the operator sign convention to the simulated chain.
FeynmanKacResult feynman_kac_check(const Grid& grid, const CoefficientSet& coeffs,
                                   const Field& payoff, double T, double dt, int n_paths,
                                   std::uint64_t seed, int pde_steps = 64, int n_threads = 1);

}  // namespace kolstack

#pragma once

#include <Eigen/Dense>

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "kolstack/grid.hpp"

namespace kolstack {

/// Data of the degenerate operator and the underlying chain dynamics:
/// a(t,x) = sigma sigma^T is the d x d diffusion acting on the first block,
/// drift block j (1-based) is f_j, and f_j for j >= 2 may depend only on
/// blocks j-1..n.  Functions receive the full nd-dimensional point; the chain
/// restriction is a contract checked by validate() through sampling.
struct CoefficientSet {
    int n_subsystems = 2;
    int d_per_subsystem = 1;
    double lambda_min = 0.0;  // declared uniform lower bound on eig(a)
    bool time_dependent = false;
    std::string name;

    std::function<Eigen::MatrixXd(double t, const VectorXd& x)> diffusion;  // d x d
    std::function<Eigen::MatrixXd(double t, const VectorXd& x)> sigma;      // d x m
    std::vector<std::function<VectorXd(double t, const VectorXd& x)>> drift;  // n entries, R^d each

    int nd() const { return n_subsystems * d_per_subsystem; }
    /// First full-space axis a drift block j (0-based) is allowed to read:
    /// block 0 reads everything, block j >= 1 reads blocks j-1..n-1.
    int first_allowed_axis(int block) const {
        return block == 0 ? 0 : (block - 1) * d_per_subsystem;
    }
};

/// Samples the declared contracts: eig(a) >= lambda_min > 0, a = sigma sigma^T,
/// and the chain structure (perturbing an excluded coordinate leaves f_j
/// unchanged).  Throws ConfigError naming the violated contract.
void validate_coefficients(const CoefficientSet& coeffs, const Grid& grid, int n_samples = 32,
                           unsigned seed = 7u);

/// Built-in coefficient sets, selected by name with numeric parameters:
///   "kolmogorov"  n=2, d=1: a = diffusion, f1 = 0, f2 = coupling * x1
///   "constant"    n=2, d=1: a = diffusion, f = 0
///   "rotation"    n=2, d=1: a = diffusion, f1 = -omega * x2, f2 = omega * x1
///   "chain3"      n=3, d=1: a = diffusion, f2 = coupling * x1, f3 = coupling * x2
CoefficientSet make_coefficients(const std::string& name,
                                 const std::map<std::string, double>& params = {});

std::vector<std::string> coefficient_registry_names();

}  // namespace kolstack

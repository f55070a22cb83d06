#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <memory>
#include <mutex>
#include <vector>

#include "kolstack/operator.hpp"

namespace kolstack {

struct SolverReport {
    int iterations = 0;
    double residual = 0.0;
    bool converged = false;
    double wall_time = 0.0;  // seconds, excluded from serialized summaries
};

struct SolverOptions {
    double picard_tol = 1e-8;     // successive-iterate change
    int picard_max_iter = 400;
    double damping = 0.5;         // Picard relaxation, halved automatically on growth
    double linear_tol = 1e-10;    // iterative linear solves
    int linear_max_iter = 2000;
    int monolithic_cutoff = 50000;  // max space-time unknowns (2*N*K) for one sparse solve
    double coupled_tol = 1e-8;
};

/// Which operator drives a backward-in-time march: the discrete adjoint A*
/// (adjoint equations of the optimality systems) or the generator A itself
/// (terminal-value equations, e.g. expectation functionals of the chain).
enum class OperatorSide { adjoint, generator };

/// BiCGStab with diagonal preconditioning.  Deterministic; on breakdown or
/// iteration exhaustion returns the best iterate with converged = false.
std::pair<VectorXd, SolverReport> linear_solve(const SparseMat& M, const VectorXd& rhs,
                                               double tol, int max_iter);

/// Cached time-stepping engine: owns the assembled operators and the sparse LU
/// factorizations of the implicit-Euler step matrices (I - dt A) and their
/// transposes.  Direct factorizations keep the forward/backward step matrices
/// exactly transpose pairs, which the discrete duality identities rely on.
///
/// Time conventions (used consistently by every caller):
///   forward:   (I - dt A_k) y^k = y^{k-1} + dt * source[k],   k = 1..K
///   backward:  (I - dt A*_k) p[k-1] = p[k] + dt * source[k],  k = K..1
/// Spacetime fields store slices at t_0..t_K; source slice 0 is never read.
/// A backward trajectory's slice k-1 is the value acting over step k.
class PdeEngine {
public:
    PdeEngine(const Grid& grid, CoefficientSet coeffs, SolverOptions opts = {});

    const Grid& grid() const { return grid_; }
    const CoefficientSet& coeffs() const { return coeffs_; }
    const SolverOptions& options() const { return opts_; }

    const DiscreteOperator& generator_at(int k) const;
    const DiscreteOperator& adjoint_at(int k) const;
    /// Step matrix I - dt A_k acting on interior unknowns.
    const SparseMat& step_matrix(int k) const;
    const SparseMat& step_matrix_adjoint(int k) const;

    VectorXd step_solve(int k, const VectorXd& rhs) const;          // (I - dt A_k) x = rhs
    VectorXd step_solve_adjoint(int k, const VectorXd& rhs) const;  // (I - dt A*_k) x = rhs

    Field march_forward(const Field& source, const Field& initial) const;
    Field march_backward(const Field& source, const Field& terminal,
                         OperatorSide side = OperatorSide::adjoint) const;

private:
    struct StepData {
        DiscreteOperator op;
        DiscreteOperator op_adjoint;
        SparseMat step;          // I - dt A
        SparseMat step_adjoint;  // I - dt A*
        Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
        Eigen::SparseLU<Eigen::SparseMatrix<double>> lu_transpose;
    };
    const StepData& data_at(int k) const;

    const Grid& grid_;
    CoefficientSet coeffs_;
    SolverOptions opts_;
    std::vector<std::unique_ptr<StepData>> steps_;  // one entry when autonomous
};

struct CoupledSolution {
    Field y;  // forward trajectory (slices t_0..t_K, slice 0 = initial)
    Field p;  // adjoint trajectory (slice K = terminal data)
    SolverReport report;
};

enum class CoupledMethod { automatic, monolithic, picard };

/// Forward-backward optimality system
///   dy/dt = A y + forcing - (1/beta) p chi_U2,      y(0) = 0
///   -dp/dt = A* p + (y - tracking),                 p(T) = terminal (default 0)
/// solved either monolithically (one space-time sparse LU over all unknowns,
/// the ground-truth path, cached across calls) or by damped Picard iteration.
class CoupledEngine {
public:
    CoupledEngine(const PdeEngine& engine, SubdomainMask u2_mask, double beta);

    CoupledSolution solve(const Field& forcing, const Field& tracking,
                          const Field* terminal = nullptr,
                          CoupledMethod method = CoupledMethod::automatic) const;

    bool monolithic_allowed() const;
    double beta() const { return beta_; }
    const SubdomainMask& u2_mask() const { return u2_; }

private:
    CoupledSolution solve_monolithic(const Field& forcing, const Field& tracking,
                                     const Field* terminal) const;
    CoupledSolution solve_picard(const Field& forcing, const Field& tracking,
                                 const Field* terminal) const;
    void ensure_kkt() const;

    const PdeEngine& engine_;
    SubdomainMask u2_;
    double beta_;
    VectorXd chi2_interior_;
    mutable std::mutex kkt_mutex_;
    mutable std::unique_ptr<Eigen::SparseLU<Eigen::SparseMatrix<double>>> kkt_lu_;
};

Field solve_forward(const Grid& grid, const CoefficientSet& coeffs, const Field& source,
                    const Field& initial, const SolverOptions& opts = {});

Field solve_backward(const Grid& grid, const CoefficientSet& coeffs, const Field& source,
                     const Field& terminal, const SolverOptions& opts = {},
                     OperatorSide side = OperatorSide::adjoint);

CoupledSolution solve_coupled(const Grid& grid, const CoefficientSet& coeffs,
                              const SubdomainMask& u2_mask, double beta, const Field& forcing,
                              const Field& tracking, const SolverOptions& opts = {},
                              CoupledMethod method = CoupledMethod::automatic);

}  // namespace kolstack

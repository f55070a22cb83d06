#pragma once

#include <Eigen/Sparse>

#include "kolstack/coefficients.hpp"
#include "kolstack/grid.hpp"

namespace kolstack {

/// CSR sparse matrix (row offsets, sorted column indices, values).
using SparseMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;

enum class OperatorConvention { generator };

/// Discretization of the degenerate second-order operator at one time slice:
/// centered second differences for the x^1-block diffusion, first-order upwind
/// (against the local drift sign) for every transport term.  `matrix` acts on
/// interior unknowns; `boundary_coupling` carries the stencil legs that reach
/// boundary nodes, so the operator can be applied to fields that do not vanish
/// on the boundary.  Immutable once assembled.
struct DiscreteOperator {
    SparseMat matrix;             // n_interior x n_interior
    SparseMat boundary_coupling;  // n_interior x n_nodes (nonzeros on boundary columns only)
    double time = 0.0;
    OperatorConvention convention = OperatorConvention::generator;
};

/// Assembles the generator at time t.  Throws when a coefficient evaluates to
/// NaN or the diffusion drops below the declared lambda_min bound.
DiscreteOperator assemble_generator(const Grid& grid, const CoefficientSet& coeffs, double t);

/// Exact discrete adjoint with respect to the quadrature-weighted product:
/// A* = W^{-1} A^T W on interior unknowns, so (A y, p) = (y, A* p) holds to
/// machine precision for fields vanishing on the boundary.  The boundary
/// coupling of the adjoint is empty (the pairing assumes Dirichlet zero).
DiscreteOperator adjoint_of(const DiscreteOperator& op, const Grid& grid);

/// Applies the operator to a slice field over the full grid (uses the boundary
/// coupling); result is an interior-node vector.
VectorXd apply_operator(const Grid& grid, const DiscreteOperator& op, const Field& slice);

/// Gathers the interior entries of a slice / scatters them back with zero boundary.
VectorXd interior_vector(const Grid& grid, const Field& slice);
Field slice_from_interior(const Grid& grid, const VectorXd& interior);

/// Rank of the Kalman-type matrix [B, MB, ..., M^{nd-1}B] for the linearized
/// chain at the domain center, with M the drift Jacobian and B = G sigma
/// (noise entering through the first block).  Requires affine drift and
/// constant diffusion, both checked by sampling; refuses (throws ConfigError)
/// otherwise rather than returning a misleading rank.
int hormander_rank(const CoefficientSet& coeffs, const Grid& grid);

}  // namespace kolstack

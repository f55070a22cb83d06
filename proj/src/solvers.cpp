#include "kolstack/solvers.hpp"

#include <Eigen/IterativeLinearSolvers>

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

namespace kolstack {

namespace {

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

SparseMat identity_minus(double dt, const SparseMat& a, int n) {
    SparseMat eye(n, n);
    eye.setIdentity();
    SparseMat m = eye - dt * a;
    m.makeCompressed();
    return m;
}

}  // namespace

std::pair<VectorXd, SolverReport> linear_solve(const SparseMat& M, const VectorXd& rhs,
                                               double tol, int max_iter) {
    if (M.rows() != M.cols()) throw ConfigError("linear_solve: matrix must be square");
    if (M.rows() != rhs.size()) throw ConfigError("linear_solve: rhs size mismatch");
    const auto t0 = std::chrono::steady_clock::now();
    Eigen::BiCGSTAB<SparseMat, Eigen::DiagonalPreconditioner<double>> solver;
    solver.setTolerance(tol);
    solver.setMaxIterations(max_iter);
    solver.compute(M);
    VectorXd x = solver.solve(rhs);
    SolverReport report;
    report.iterations = static_cast<int>(solver.iterations());
    report.residual = solver.error();
    report.converged = (solver.info() == Eigen::Success) && std::isfinite(report.residual);
    report.wall_time = seconds_since(t0);
    if (!x.allFinite()) {
        x.setZero();
        report.converged = false;
    }
    return {std::move(x), report};
}

PdeEngine::PdeEngine(const Grid& grid, CoefficientSet coeffs, SolverOptions opts)
    : grid_(grid), coeffs_(std::move(coeffs)), opts_(opts) {
    const int unique_steps = coeffs_.time_dependent ? grid_.n_time_steps() : 1;
    steps_.resize(unique_steps);
    for (int s = 0; s < unique_steps; ++s) {
        auto data = std::make_unique<StepData>();
        const double t = coeffs_.time_dependent ? grid_.time_at(s + 1) : grid_.time_at(1);
        data->op = assemble_generator(grid_, coeffs_, t);
        data->op_adjoint = adjoint_of(data->op, grid_);
        data->step = identity_minus(grid_.dt(), data->op.matrix, grid_.n_interior());
        data->step_adjoint =
            identity_minus(grid_.dt(), data->op_adjoint.matrix, grid_.n_interior());
        Eigen::SparseMatrix<double> col = data->step;
        data->lu.compute(col);
        if (data->lu.info() != Eigen::Success)
            throw SolveError("PdeEngine: step matrix factorization failed");
        Eigen::SparseMatrix<double> colT = data->step.transpose();
        data->lu_transpose.compute(colT);
        if (data->lu_transpose.info() != Eigen::Success)
            throw SolveError("PdeEngine: transposed step matrix factorization failed");
        steps_[s] = std::move(data);
    }
}

const PdeEngine::StepData& PdeEngine::data_at(int k) const {
    if (k < 1 || k > grid_.n_time_steps())
        throw ConfigError("PdeEngine: step index out of range");
    return coeffs_.time_dependent ? *steps_[k - 1] : *steps_[0];
}

const DiscreteOperator& PdeEngine::generator_at(int k) const { return data_at(k).op; }
const DiscreteOperator& PdeEngine::adjoint_at(int k) const { return data_at(k).op_adjoint; }
const SparseMat& PdeEngine::step_matrix(int k) const { return data_at(k).step; }
const SparseMat& PdeEngine::step_matrix_adjoint(int k) const { return data_at(k).step_adjoint; }

VectorXd PdeEngine::step_solve(int k, const VectorXd& rhs) const {
    VectorXd x = data_at(k).lu.solve(rhs);
    if (data_at(k).lu.info() != Eigen::Success)
        throw SolveError("PdeEngine: forward step solve failed");
    return x;
}

VectorXd PdeEngine::step_solve_adjoint(int k, const VectorXd& rhs) const {
    // (I - dt A*) x = rhs with A* = W^{-1} (A^T) W  <=>  (I - dt A)^T (W x) = W rhs.
    const VectorXd& w = grid_.interior_weights();
    VectorXd wx = data_at(k).lu_transpose.solve(w.cwiseProduct(rhs).eval());
    if (data_at(k).lu_transpose.info() != Eigen::Success)
        throw SolveError("PdeEngine: adjoint step solve failed");
    return wx.cwiseQuotient(w);
}

Field PdeEngine::march_forward(const Field& source, const Field& initial) const {
    require_shape(grid_, source, "march_forward source");
    require_shape(grid_, initial, "march_forward initial");
    if (source.kind != FieldKind::spacetime)
        throw ConfigError("march_forward: source must be a spacetime field");
    if (initial.kind != FieldKind::slice)
        throw ConfigError("march_forward: initial must be a slice field");
    if (!vanishes_on_boundary(grid_, initial))
        throw ConfigError("march_forward: initial data must vanish on the boundary");

    Field y = zero_spacetime(grid_);
    y.values.col(0) = initial.values.col(0);
    VectorXd v = interior_vector(grid_, initial);
    VectorXd src(grid_.n_interior());
    for (int k = 1; k <= grid_.n_time_steps(); ++k) {
        for (int i = 0; i < grid_.n_interior(); ++i)
            src[i] = source.values(grid_.node_of_interior(i), k);
        v = step_solve(k, (v + grid_.dt() * src).eval());
        for (int i = 0; i < grid_.n_interior(); ++i)
            y.values(grid_.node_of_interior(i), k) = v[i];
    }
    return y;
}

Field PdeEngine::march_backward(const Field& source, const Field& terminal,
                                OperatorSide side) const {
    require_shape(grid_, source, "march_backward source");
    require_shape(grid_, terminal, "march_backward terminal");
    if (source.kind != FieldKind::spacetime)
        throw ConfigError("march_backward: source must be a spacetime field");
    if (terminal.kind != FieldKind::slice)
        throw ConfigError("march_backward: terminal must be a slice field");
    if (!vanishes_on_boundary(grid_, terminal))
        throw ConfigError("march_backward: terminal data must vanish on the boundary");

    Field p = zero_spacetime(grid_);
    const int K = grid_.n_time_steps();
    p.values.col(K) = terminal.values.col(0);
    VectorXd v = interior_vector(grid_, terminal);
    VectorXd src(grid_.n_interior());
    for (int k = K; k >= 1; --k) {
        for (int i = 0; i < grid_.n_interior(); ++i)
            src[i] = source.values(grid_.node_of_interior(i), k);
        const VectorXd rhs = v + grid_.dt() * src;
        v = (side == OperatorSide::adjoint) ? step_solve_adjoint(k, rhs) : step_solve(k, rhs);
        for (int i = 0; i < grid_.n_interior(); ++i)
            p.values(grid_.node_of_interior(i), k - 1) = v[i];
    }
    return p;
}

CoupledEngine::CoupledEngine(const PdeEngine& engine, SubdomainMask u2_mask, double beta)
    : engine_(engine), u2_(std::move(u2_mask)), beta_(beta) {
    if (!(beta_ > 0.0)) throw ConfigError("CoupledEngine: beta must be positive");
    const Grid& g = engine_.grid();
    chi2_interior_.resize(g.n_interior());
    for (int i = 0; i < g.n_interior(); ++i)
        chi2_interior_[i] = u2_.indicator[g.node_of_interior(i)];
}

bool CoupledEngine::monolithic_allowed() const {
    const Grid& g = engine_.grid();
    const long unknowns = 2L * g.n_interior() * g.n_time_steps();
    return unknowns <= engine_.options().monolithic_cutoff;
}

void CoupledEngine::ensure_kkt() const {
    std::lock_guard<std::mutex> lock(kkt_mutex_);
    if (kkt_lu_) return;
    const Grid& g = engine_.grid();
    const int N = g.n_interior();
    const int K = g.n_time_steps();
    const double dt = g.dt();

    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<size_t>(K) * N * 14);
    for (int k = 1; k <= K; ++k) {
        const int frow = (k - 1) * N;      // forward block
        const int arow = K * N + frow;     // adjoint block
        const SparseMat& M = engine_.step_matrix(k);
        const SparseMat& Ms = engine_.step_matrix_adjoint(k);
        for (int r = 0; r < M.outerSize(); ++r)
            for (SparseMat::InnerIterator it(M, r); it; ++it)
                trips.emplace_back(frow + r, frow + it.col(), it.value());
        for (int r = 0; r < Ms.outerSize(); ++r)
            for (SparseMat::InnerIterator it(Ms, r); it; ++it)
                trips.emplace_back(arow + r, K * N + frow + it.col(), it.value());
        for (int i = 0; i < N; ++i) {
            if (k >= 2) trips.emplace_back(frow + i, frow - N + i, -1.0);
            if (k <= K - 1) trips.emplace_back(arow + i, K * N + frow + N + i, -1.0);
            if (chi2_interior_[i] != 0.0)
                trips.emplace_back(frow + i, arow + i, dt / beta_ * chi2_interior_[i]);
            trips.emplace_back(arow + i, frow + i, -dt);
        }
    }
    Eigen::SparseMatrix<double> kkt(2 * N * K, 2 * N * K);
    kkt.setFromTriplets(trips.begin(), trips.end());
    kkt.makeCompressed();
    auto lu = std::make_unique<Eigen::SparseLU<Eigen::SparseMatrix<double>>>();
    lu->compute(kkt);
    if (lu->info() != Eigen::Success)
        throw SolveError("solve_coupled: space-time system factorization failed (singular?)");
    kkt_lu_ = std::move(lu);
}

CoupledSolution CoupledEngine::solve_monolithic(const Field& forcing, const Field& tracking,
                                                const Field* terminal) const {
    const auto t0 = std::chrono::steady_clock::now();
    ensure_kkt();
    const Grid& g = engine_.grid();
    const int N = g.n_interior();
    const int K = g.n_time_steps();
    const double dt = g.dt();

    VectorXd rhs = VectorXd::Zero(2 * N * K);
    for (int k = 1; k <= K; ++k) {
        const int frow = (k - 1) * N;
        const int arow = K * N + frow;
        for (int i = 0; i < N; ++i) {
            const int node = g.node_of_interior(i);
            rhs[frow + i] = dt * forcing.values(node, k);
            rhs[arow + i] = -dt * tracking.values(node, k);
            if (k == K && terminal) rhs[arow + i] += terminal->values(node, 0);
        }
    }

    VectorXd x = kkt_lu_->solve(rhs);
    if (kkt_lu_->info() != Eigen::Success)
        throw SolveError("solve_coupled: space-time solve failed");

    CoupledSolution sol;
    sol.y = zero_spacetime(g);
    sol.p = zero_spacetime(g);
    if (terminal) sol.p.values.col(K) = terminal->values.col(0);
    for (int k = 1; k <= K; ++k) {
        const int frow = (k - 1) * N;
        const int arow = K * N + frow;
        for (int i = 0; i < N; ++i) {
            const int node = g.node_of_interior(i);
            sol.y.values(node, k) = x[frow + i];
            sol.p.values(node, k - 1) = x[arow + i];  // adjoint unknown k lives at t_{k-1}
        }
    }

    // Residual of the full space-time system, reported for the record.
    double num = 0.0;
    {
        // Recompute KKT*x - rhs block-wise without materializing the matrix again.
        for (int k = 1; k <= K; ++k) {
            const int frow = (k - 1) * N;
            const int arow = K * N + frow;
            VectorXd yk = x.segment(frow, N);
            VectorXd pk = x.segment(arow, N);
            VectorXd r1 = engine_.step_matrix(k) * yk;
            if (k >= 2) r1 -= x.segment(frow - N, N);
            r1 += (dt / beta_) * chi2_interior_.cwiseProduct(pk);
            r1 -= rhs.segment(frow, N);
            VectorXd r2 = engine_.step_matrix_adjoint(k) * pk;
            if (k <= K - 1) r2 -= x.segment(arow + N, N);
            r2 -= dt * yk;
            r2 -= rhs.segment(arow, N);
            num += r1.squaredNorm() + r2.squaredNorm();
        }
    }
    sol.report.iterations = 1;
    sol.report.residual = std::sqrt(num) / (1.0 + rhs.norm());
    sol.report.converged = sol.report.residual <= engine_.options().coupled_tol;
    sol.report.wall_time = seconds_since(t0);
    return sol;
}

CoupledSolution CoupledEngine::solve_picard(const Field& forcing, const Field& tracking,
                                            const Field* terminal) const {
    const auto t0 = std::chrono::steady_clock::now();
    const Grid& g = engine_.grid();
    const SolverOptions& opts = engine_.options();
    const Field terminal_field = terminal ? *terminal : zero_slice(g);

    auto forward_of = [&](const Field& p) {
        Field feedback = control_view_of_adjoint(g, p);
        feedback.values *= -1.0 / beta_;
        Field src = masked(feedback, u2_);
        src.values += forcing.values;
        return engine_.march_forward(src, zero_slice(g));
    };
    auto backward_of = [&](const Field& y) {
        Field src = y;
        src.values -= tracking.values;
        return engine_.march_backward(src, terminal_field);
    };

    Field p = zero_spacetime(g);
    Field y = forward_of(p);
    double omega = opts.damping;
    double last_change = std::numeric_limits<double>::infinity();
    SolverReport report;
    for (int iter = 1; iter <= opts.picard_max_iter; ++iter) {
        Field p_new = backward_of(y);
        const double dp = (p_new.values - p.values).norm() / (1.0 + p.values.norm());
        p.values += omega * (p_new.values - p.values);
        Field y_new = forward_of(p);
        const double dy = (y_new.values - y.values).norm() / (1.0 + y.values.norm());
        y = std::move(y_new);
        const double change = dp + dy;
        report.iterations = iter;
        report.residual = change;
        if (change <= opts.picard_tol) {
            report.converged = true;
            break;
        }
        if (change > last_change && omega > 1.0 / 256.0) omega *= 0.5;
        last_change = change;
    }
    report.wall_time = seconds_since(t0);
    if (!report.converged) {
        std::ostringstream os;
        os << "solve_coupled: Picard iteration did not reach " << opts.picard_tol << " in "
           << opts.picard_max_iter << " sweeps (last change " << report.residual << ")";
        throw SolveError(os.str(), report.residual, report.iterations);
    }
    CoupledSolution sol;
    sol.y = std::move(y);
    sol.p = std::move(p);
    sol.report = report;
    return sol;
}

CoupledSolution CoupledEngine::solve(const Field& forcing, const Field& tracking,
                                     const Field* terminal, CoupledMethod method) const {
    require_shape(engine_.grid(), forcing, "solve_coupled forcing");
    require_shape(engine_.grid(), tracking, "solve_coupled tracking");
    if (method == CoupledMethod::automatic)
        method = monolithic_allowed() ? CoupledMethod::monolithic : CoupledMethod::picard;
    if (method == CoupledMethod::monolithic && !monolithic_allowed())
        throw ConfigError("solve_coupled: instance exceeds the monolithic-solve cutoff");
    return method == CoupledMethod::monolithic ? solve_monolithic(forcing, tracking, terminal)
                                               : solve_picard(forcing, tracking, terminal);
}

Field solve_forward(const Grid& grid, const CoefficientSet& coeffs, const Field& source,
                    const Field& initial, const SolverOptions& opts) {
    PdeEngine engine(grid, coeffs, opts);
    return engine.march_forward(source, initial);
}

Field solve_backward(const Grid& grid, const CoefficientSet& coeffs, const Field& source,
                     const Field& terminal, const SolverOptions& opts, OperatorSide side) {
    PdeEngine engine(grid, coeffs, opts);
    return engine.march_backward(source, terminal, side);
}

CoupledSolution solve_coupled(const Grid& grid, const CoefficientSet& coeffs,
                              const SubdomainMask& u2_mask, double beta, const Field& forcing,
                              const Field& tracking, const SolverOptions& opts,
                              CoupledMethod method) {
    PdeEngine engine(grid, coeffs, opts);
    CoupledEngine coupled(engine, u2_mask, beta);
    return coupled.solve(forcing, tracking, nullptr, method);
}

}  // namespace kolstack

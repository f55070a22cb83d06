#include "kolstack/leader.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <random>
#include <sstream>

namespace kolstack {

namespace {

double wdot(const VectorXd& w, const VectorXd& a, const VectorXd& b) {
    return a.dot(w.cwiseProduct(b));
}

double wnorm(const VectorXd& w, const VectorXd& a) { return std::sqrt(wdot(w, a, a)); }

/// L2 soft-thresholding: prox of tau * ||.||_W at v.
VectorXd soft_threshold(const VectorXd& w, const VectorXd& v, double tau) {
    const double n = wnorm(w, v);
    if (n <= tau) return VectorXd::Zero(v.size());
    return (1.0 - tau / n) * v;
}

/// Applies H H* in interior coordinates, optionally through a dense
/// materialization (the map is applied thousands of times on a small space;
/// each column costs two coupled solves against the cached factorization).
class DualOperator {
public:
    DualOperator(const Problem& problem, const DualOptions& opts) : problem_(problem) {
        const Grid& grid = problem.grid();
        const int n = grid.n_interior();
        if (opts.materialize_gramian && n <= opts.gramian_limit) {
            dense_.resize(n, n);
            VectorXd e = VectorXd::Zero(n);
            for (int j = 0; j < n; ++j) {
                e[j] = 1.0;
                dense_.col(j) = apply_direct(e);
                e[j] = 0.0;
            }
            const double asym = (dense_ - dense_.transpose()).cwiseAbs().maxCoeff();
            if (asym > 1e-8 * (1.0 + dense_.cwiseAbs().maxCoeff()))
                throw InvariantError("solve_dual: H H* materialization is not symmetric");
            dense_ = 0.5 * (dense_ + dense_.transpose().eval());
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense_, Eigen::EigenvaluesOnly);
            lipschitz_ = std::max(es.eigenvalues().maxCoeff(), 0.0);
        } else {
            // Power iteration for a Lipschitz estimate of the smooth gradient.
            std::mt19937_64 rng(99u);
            std::normal_distribution<double> normal;
            VectorXd v(n);
            for (int i = 0; i < n; ++i) v[i] = normal(rng);
            const VectorXd& w = grid.interior_weights();
            double lambda = 0.0;
            for (int it = 0; it < 20; ++it) {
                const double nv = wnorm(w, v);
                if (nv == 0.0) break;
                v /= nv;
                VectorXd gv = apply_direct(v);
                lambda = wdot(w, v, gv);
                v = std::move(gv);
            }
            lipschitz_ = std::max(lambda, 0.0) * 1.1;
        }
    }

    VectorXd apply(const VectorXd& xi) const {
        if (dense_.size() > 0) return dense_ * xi;
        return apply_direct(xi);
    }

    double lipschitz() const { return lipschitz_; }

private:
    VectorXd apply_direct(const VectorXd& xi_int) const {
        const Grid& grid = problem_.grid();
        Field xi = slice_from_interior(grid, xi_int);
        Control u1 = apply_H_star(problem_, DualVariable{xi});
        Field zT = apply_H(problem_, u1);
        return interior_vector(grid, zT);
    }

    const Problem& problem_;
    Eigen::MatrixXd dense_;
    double lipschitz_ = 0.0;
};

struct BacktrackResult {
    VectorXd cand;
    VectorXd g_cand;  // G * cand, reused for the objective
    double step = 0.0;
};

}  // namespace

CoupledSolution solve_background(const Problem& problem, const Field& y_rf) {
    require_shape(problem.grid(), y_rf, "solve_background y_rf");
    return problem.solve_coupled(zero_spacetime(problem.grid()), y_rf);
}

Field apply_H(const Problem& problem, const Control& u1) {
    if (u1.role != ControlRole::leader) throw ConfigError("apply_H: expected a leader control");
    CoupledSolution sol = problem.solve_coupled(u1.values, zero_spacetime(problem.grid()));
    return time_slice(problem.grid(), sol.y, problem.grid().n_time_steps());
}

Control apply_H_star(const Problem& problem, const DualVariable& xi) {
    const Grid& grid = problem.grid();
    require_shape(grid, xi.xi, "apply_H_star xi");
    if (xi.xi.kind != FieldKind::slice)
        throw ConfigError("apply_H_star: xi must be a slice field");
    if (!vanishes_on_boundary(grid, xi.xi))
        throw ConfigError("apply_H_star: xi must vanish on the boundary");
    CoupledSolution sol =
        problem.solve_coupled(zero_spacetime(grid), zero_spacetime(grid), &xi.xi);
    return control_from_adjoint(grid, sol.p, problem.u1_mask(), ControlRole::leader, 1.0);
}

DualSolution solve_dual(const Problem& problem, const Field& target, double alpha,
                        const Field& y_rf, const DualOptions& opts,
                        const DualVariable* warm_start) {
    const Grid& grid = problem.grid();
    require_shape(grid, target, "solve_dual target");
    if (target.kind != FieldKind::slice) throw ConfigError("solve_dual: target must be a slice");
    if (!vanishes_on_boundary(grid, target))
        throw ConfigError("solve_dual: target must vanish on the boundary");
    if (opts.method == DualMethod::prox_gradient && !(alpha > 0.0))
        throw ConfigError("solve_dual: alpha must be positive");
    if (opts.method == DualMethod::cg_smooth && alpha != 0.0)
        throw ConfigError("solve_dual: the CG cross-check runs the alpha = 0 problem");

    const VectorXd& w = grid.interior_weights();
    const CoupledSolution background = solve_background(problem, y_rf);
    const VectorXd y0T =
        interior_vector(grid, time_slice(grid, background.y, grid.n_time_steps()));
    const VectorXd b = interior_vector(grid, target) - y0T;

    DualOperator G(problem, opts);
    DualHistory history;

    auto smooth = [&](const VectorXd& x, const VectorXd& gx) {
        return 0.5 * wdot(w, x, gx) - wdot(w, x, b);
    };
    auto objective = [&](const VectorXd& x, const VectorXd& gx) {
        return smooth(x, gx) + alpha * wnorm(w, x);
    };

    VectorXd x = warm_start ? interior_vector(grid, warm_start->xi)
                            : VectorXd::Zero(grid.n_interior());

    if (opts.method == DualMethod::cg_smooth) {
        // Plain CG on the (possibly rank-deficient) smooth part; cross-check mode.
        VectorXd r = b - G.apply(x);
        VectorXd p = r;
        double rs = wdot(w, r, r);
        const double b_norm = wnorm(w, b);
        for (int it = 0; it < opts.max_iter; ++it) {
            history.residual.push_back(std::sqrt(rs));
            VectorXd gx = G.apply(x);
            history.objective.push_back(smooth(x, gx));
            history.step_size.push_back(0.0);
            history.iterations = it;
            if (std::sqrt(rs) <= opts.tol * (1.0 + b_norm)) {
                history.converged = true;
                break;
            }
            VectorXd gp = G.apply(p);
            const double pgp = wdot(w, p, gp);
            if (pgp <= 0.0) break;  // hit the null space
            const double a = rs / pgp;
            x += a * p;
            r -= a * gp;
            const double rs_new = wdot(w, r, r);
            p = r + (rs_new / rs) * p;
            rs = rs_new;
        }
        history.final_residual = std::sqrt(rs);
        return DualSolution{DualVariable{slice_from_interior(grid, x)}, history};
    }

    const double L = G.lipschitz();
    VectorXd gx_cache = G.apply(x);
    double obj = objective(x, gx_cache);

    // One backtracked prox step anchored at `u` (gradient from gu_cache = G*u).
    // The acceptance slack is proportional to the roundoff of the dot products
    // involved, and any s <= 1/L is accepted outright (the smooth part is
    // quadratic, so majorization holds there exactly); both guards keep noise
    // from shrinking the step once increments reach machine precision.
    double step = opts.backtrack_start;
    const double safe_step = L > 0.0 ? 1.0 / L : 1e12;
    auto backtrack = [&](const VectorXd& u, const VectorXd& gu_cache) -> BacktrackResult {
        const VectorXd grad_u = gu_cache - b;
        const double f_u = smooth(u, gu_cache);
        double s = std::min(step * std::max(opts.backtrack_grow, 1.0), 1e12);
        for (;;) {
            VectorXd cand = soft_threshold(w, u - s * grad_u, s * alpha);
            VectorXd g_cand = G.apply(cand);
            if (s <= safe_step) return {std::move(cand), std::move(g_cand), s};
            const VectorXd delta = cand - u;
            const double quad =
                f_u + wdot(w, grad_u, delta) + 0.5 * wdot(w, delta, delta) / s;
            const double slack =
                1e-12 * (1.0 + std::abs(f_u) + wnorm(w, u) * wnorm(w, grad_u));
            if (smooth(cand, g_cand) <= quad + slack)
                return {std::move(cand), std::move(g_cand), s};
            s *= opts.backtrack_shrink;
        }
    };

    // Accelerated proximal gradient.  The alpha ||xi|| term is strongly convex
    // tangentially with modulus alpha/||xi|| and the quadratic part contributes
    // (xi, G xi)/||xi||^2 radially, so a conservative strong-convexity estimate
    // is available at every iterate; the momentum coefficient uses it in the
    // constant-momentum form beta = (1 - sqrt(s mu))/(1 + sqrt(s mu)), which
    // stays damped near the optimum and needs no restart heuristics.
    //
    // Two stopping rules, both certified at the candidate z that is returned:
    //   (a) the prox fixed-point residual (1/s + L)||z - y|| <= opts.tol;
    //   (b) solution-quality certificates: the terminal ball reached within
    //       half the controllability slack, the duality gap closed, and the
    //       subgradient alignment v = g(z) + alpha z/||z|| small enough that
    //       no variational-inequality probe of size ~||z|| can dip below the
    //       tolerance.  (b) matters because the fixed-point residual has a
    //       double-precision floor ~sqrt(eps/s) on ill-conditioned instances,
    //       while the certificates are plain vector evaluations.
    VectorXd y_base = x;
    VectorXd z_prev = x;

    for (int iter = 1; iter <= opts.max_iter; ++iter) {
        const bool base_is_x = (iter == 1) || !opts.accelerate;
        const VectorXd gy = base_is_x ? gx_cache : G.apply(y_base);
        BacktrackResult z = backtrack(base_is_x ? x : y_base, gy);
        step = z.step;
        const double residual =
            (1.0 / z.step + L) * wnorm(w, (z.cand - (base_is_x ? x : y_base)).eval());
        const double obj_z = objective(z.cand, z.g_cand);

        // Certificates at z.
        const double z_norm = wnorm(w, z.cand);
        const double primal = 0.5 * wdot(w, z.cand, z.g_cand);
        const double gap = wdot(w, z.cand, z.g_cand) + alpha * z_norm - wdot(w, z.cand, b);
        const double feas_excess = wnorm(w, (z.g_cand - b).eval()) - alpha;
        VectorXd v = z.g_cand - b;
        double align;
        if (z_norm > 0.0) {
            v += (alpha / z_norm) * z.cand;
            align = wnorm(w, v) * std::max(z_norm, 1.0);
        } else {
            align = std::max(0.0, wnorm(w, v) - alpha);
        }
        // Two-sided: a negative gap flags an eps-infeasible primal (the gap is
        // -||xi|| * feasibility excess to first order), which the certificates
        // must not wave through.
        const bool gap_ok = std::abs(gap) <= 1e-6 * (1.0 + std::abs(primal));
        const bool stop_fixed_point = residual <= opts.tol && gap_ok;
        const bool stop_certified = gap_ok &&
                                    feas_excess <= 0.5 * opts.controllability_tol &&
                                    align <= 0.2e-6 * (1.0 + z_norm);
        const bool stop = stop_fixed_point || stop_certified;

        if (!opts.accelerate || stop) {
            y_base = z.cand;
        } else {
            double mu = L;
            if (z_norm > 0.0) {
                mu = std::min(mu, alpha / z_norm);
                if (primal > 0.0) mu = std::min(mu, 2.0 * primal / (z_norm * z_norm));
            }
            const double q = std::min(z.step * mu, 1.0);
            const double beta_momentum = (1.0 - std::sqrt(q)) / (1.0 + std::sqrt(q));
            y_base = z.cand + beta_momentum * (z.cand - z_prev);
        }
        z_prev = z.cand;
        x = z.cand;
        gx_cache = z.g_cand;
        obj = std::min(obj, obj_z);

        history.objective.push_back(opts.accelerate ? obj : obj_z);
        history.residual.push_back(residual);
        history.step_size.push_back(step);
        history.iterations = iter;
        history.final_residual = residual;

        if (stop) {
            history.converged = true;
            break;
        }
    }

    if (!history.converged) {
        std::ostringstream os;
        os << "solve_dual: proximal gradient did not converge in " << opts.max_iter
           << " iterations (residual " << history.final_residual << ", tol " << opts.tol << ")";
        throw DualNonConvergence(os.str(), std::move(history));
    }
    return DualSolution{DualVariable{slice_from_interior(grid, x)}, history};
}

double check_variational_inequality(const Problem& problem, const DualVariable& xi,
                                    const Field& target, double alpha, int n_samples,
                                    const Field& y_rf, unsigned seed) {
    const Grid& grid = problem.grid();
    const VectorXd& w = grid.interior_weights();

    // y(T; xi) through the full coupled pipeline, independent of the dual solver.
    Control u1 = apply_H_star(problem, xi);
    BestResponse br = best_response(problem, u1, y_rf);
    const VectorXd yT = interior_vector(grid, time_slice(grid, br.y, grid.n_time_steps()));
    const VectorXd rho = yT - interior_vector(grid, target);
    const VectorXd xin = interior_vector(grid, xi.xi);
    const double xi_norm = wnorm(w, xin);

    auto V = [&](const VectorXd& cand) {
        return wdot(w, rho, (cand - xin).eval()) + alpha * (wnorm(w, cand) - xi_norm);
    };

    double vmin = V(xin);  // exactly zero
    vmin = std::min(vmin, V(VectorXd::Zero(xin.size())));
    vmin = std::min(vmin, V((2.0 * xin).eval()));

    // Steepest-violation probes: descend along the (sub)gradient direction at xi.
    VectorXd v = rho;
    if (xi_norm > 0.0) v += (alpha / xi_norm) * xin;
    const double v_norm = wnorm(w, v);
    if (v_norm > 0.0) {
        const VectorXd vhat = v / v_norm;
        for (double t : {0.1, 1.0})
            vmin = std::min(vmin, V(xin - t * std::max(xi_norm, 1.0) * vhat));
    }

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    const double base = xi_norm + 1.0;
    for (int s = 0; s < n_samples; ++s) {
        VectorXd eta(xin.size());
        for (int i = 0; i < eta.size(); ++i) eta[i] = normal(rng);
        const double en = wnorm(w, eta);
        if (en == 0.0) continue;
        eta /= en;
        const double scale = base * ((s % 3 == 0) ? 1.0 : (s % 3 == 1) ? 0.3 : 0.05);
        vmin = std::min(vmin, V(((s % 2 == 0) ? (xin + scale * eta).eval()
                                              : (scale * eta).eval())));
    }
    return vmin;
}

StackelbergSolution solve_stackelberg(const Problem& problem, const Field& target, double alpha,
                                      const Field& y_rf, const DualOptions& opts,
                                      const DualVariable* warm_start) {
    const Grid& grid = problem.grid();
    const int K = grid.n_time_steps();

    CoupledSolution background = solve_background(problem, y_rf);
    Field y0T = time_slice(grid, background.y, K);

    DualSolution dual = solve_dual(problem, target, alpha, y_rf, opts, warm_start);

    Control u1 = apply_H_star(problem, dual.xi);
    BestResponse br = best_response(problem, u1, y_rf);

    Field terminal_misfit = time_slice(grid, br.y, K);
    terminal_misfit.values -= target.values;

    StackelbergSolution sol;
    sol.u1_star = std::move(u1);
    sol.u2_star = br.u2_star;
    sol.xi_star = dual.xi;
    sol.y = std::move(br.y);
    sol.p = std::move(br.p);
    sol.y0_terminal = y0T;
    sol.terminal_error = norm(grid, terminal_misfit);
    sol.primal_value = eval_J1(grid, sol.u1_star);

    Field diff = target;
    diff.values -= y0T.values;
    sol.dual_value = sol.primal_value + alpha * norm(grid, dual.xi.xi) -
                     inner_product(grid, dual.xi.xi, diff);
    sol.dual_history = std::move(dual.history);
    sol.follower_report = br.report;

    if (sol.terminal_error > alpha + opts.controllability_tol) {
        std::ostringstream os;
        os << "solve_stackelberg: terminal constraint violated: ||y(T) - target|| = "
           << sol.terminal_error << " > alpha + tol = " << alpha + opts.controllability_tol
           << " (dual iterations " << sol.dual_history.iterations << ", residual "
           << sol.dual_history.final_residual << ")";
        throw InvariantError(os.str());
    }
    return sol;
}

}  // namespace kolstack

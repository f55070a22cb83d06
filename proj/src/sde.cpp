#include "kolstack/sde.hpp"

#include <cmath>
#include <sstream>
#include <thread>

#include "kolstack/rng.hpp"
#include "kolstack/solvers.hpp"

namespace kolstack {

namespace {

bool inside(const std::vector<std::pair<double, double>>& bounds, const VectorXd& x) {
    for (int a = 0; a < x.size(); ++a)
        if (x[a] < bounds[a].first || x[a] > bounds[a].second) return false;
    return true;
}

/// Multilinear interpolation of a slice field at an arbitrary point.
double interpolate(const Grid& grid, const Field& slice, const VectorXd& x) {
    const int nd = grid.n_axes();
    std::vector<int> base(nd);
    std::vector<double> frac(nd);
    for (int a = 0; a < nd; ++a) {
        const double s = (x[a] - grid.lower(a)) / grid.spacing(a);
        int i = static_cast<int>(std::floor(s));
        i = std::max(0, std::min(i, grid.dim(a) - 2));
        base[a] = i;
        frac[a] = std::min(std::max(s - i, 0.0), 1.0);
    }
    double value = 0.0;
    for (int corner = 0; corner < (1 << nd); ++corner) {
        double weight = 1.0;
        std::vector<int> mi(nd);
        for (int a = 0; a < nd; ++a) {
            const int up = (corner >> a) & 1;
            mi[a] = base[a] + up;
            weight *= up ? frac[a] : 1.0 - frac[a];
        }
        value += weight * slice.values(grid.flat_index(mi), 0);
    }
    return value;
}

}  // namespace

PathEnsemble simulate_chain(const CoefficientSet& coeffs, const VectorXd& x0, double T, double dt,
                            int n_paths, std::uint64_t seed,
                            const std::vector<std::pair<double, double>>* absorb_bounds,
                            int n_threads) {
    if (!(dt > 0.0)) throw ConfigError("simulate_chain: dt must be positive");
    if (n_paths < 1) throw ConfigError("simulate_chain: n_paths must be >= 1");
    const int n_steps = static_cast<int>(std::llround(T / dt));
    if (n_steps < 1 || std::abs(n_steps * dt - T) > 1e-9 * std::max(T, 1.0))
        throw ConfigError("simulate_chain: dt must divide T within rounding");
    const int nd = coeffs.nd();
    const int d = coeffs.d_per_subsystem;
    if (x0.size() != nd) throw ConfigError("simulate_chain: x0 has the wrong dimension");
    const int m = static_cast<int>(coeffs.sigma(0.0, x0).cols());

    PathEnsemble ensemble;
    ensemble.n_paths = n_paths;
    ensemble.dt = dt;
    ensemble.seed = seed;
    ensemble.states.resize(nd, n_paths);
    ensemble.exited.assign(n_paths, 0);

    const double sqrt_dt = std::sqrt(dt);
    auto run_range = [&](int begin, int end) {
        VectorXd x(nd), xn(nd), dw(m);
        for (int path = begin; path < end; ++path) {
            NormalSampler normals(mix_seed(seed, static_cast<std::uint64_t>(path)));
            x = x0;
            bool exited = false;
            for (int step = 0; step < n_steps && !exited; ++step) {
                const double t = step * dt;
                for (int j = 0; j < m; ++j) dw[j] = sqrt_dt * normals.sample();
                xn.segment(0, d) =
                    x.segment(0, d) + coeffs.drift[0](t, x) * dt + coeffs.sigma(t, x) * dw;
                for (int block = 1; block < coeffs.n_subsystems; ++block)
                    xn.segment(block * d, d) =
                        x.segment(block * d, d) + coeffs.drift[block](t, x) * dt;
                if (!xn.allFinite()) {
                    std::ostringstream os;
                    os << "simulate_chain: path " << path << " blew up at step " << step;
                    throw SolveError(os.str());
                }
                x = xn;
                if (absorb_bounds && !inside(*absorb_bounds, x)) exited = true;
            }
            ensemble.states.col(path) = x;
            ensemble.exited[path] = exited ? 1 : 0;
        }
    };

    if (n_threads <= 1) {
        run_range(0, n_paths);
    } else {
        const int chunks = std::min(n_threads, n_paths);
        std::vector<std::thread> workers;
        std::exception_ptr error;
        std::mutex error_mutex;
        for (int c = 0; c < chunks; ++c) {
            const int begin = static_cast<int>(static_cast<long>(n_paths) * c / chunks);
            const int end = static_cast<int>(static_cast<long>(n_paths) * (c + 1) / chunks);
            workers.emplace_back([&, begin, end] {
                try {
                    run_range(begin, end);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            });
        }
        for (auto& w : workers) w.join();
        if (error) std::rethrow_exception(error);
    }
    return ensemble;
}

FeynmanKacResult feynman_kac_check(const Grid& grid, const CoefficientSet& coeffs,
                                   const Field& payoff, double T, double dt, int n_paths,
                                   std::uint64_t seed, int pde_steps, int n_threads) {
    require_shape(grid, payoff, "feynman_kac_check payoff");
    if (payoff.kind != FieldKind::slice)
        throw ConfigError("feynman_kac_check: payoff must be a slice field");
    if (!vanishes_on_boundary(grid, payoff))
        throw ConfigError("feynman_kac_check: payoff must vanish on the boundary");

    std::vector<std::pair<double, double>> bounds(grid.n_axes());
    for (int a = 0; a < grid.n_axes(); ++a) bounds[a] = {grid.lower(a), grid.upper(a)};
    const VectorXd x0 = grid.node_coords(grid.center_node());

    PathEnsemble paths = simulate_chain(coeffs, x0, T, dt, n_paths, seed, &bounds, n_threads);
    double sum = 0.0, sum_sq = 0.0;
    int exited = 0;
    for (int p = 0; p < paths.n_paths; ++p) {
        double value = 0.0;
        if (paths.exited[p])
            ++exited;  // absorbed: Dirichlet payoff 0
        else
            value = interpolate(grid, payoff, paths.states.col(p));
        sum += value;
        sum_sq += value * value;
    }
    const double mean = sum / n_paths;
    const double variance = std::max(0.0, sum_sq / n_paths - mean * mean);
    const double std_error = std::sqrt(variance / n_paths);

    // Terminal-value march with the generator over the same horizon.
    GridConfig fk_cfg = grid.config();
    fk_cfg.horizon_T = T;
    fk_cfg.n_time_steps = pde_steps;
    Grid fk_grid = build_grid(fk_cfg);
    Field v = solve_backward(fk_grid, coeffs, zero_spacetime(fk_grid), payoff, {},
                             OperatorSide::generator);
    const double pde_value = v.values(fk_grid.center_node(), 0);

    return FeynmanKacResult{mean, pde_value, std_error, exited};
}

}  // namespace kolstack

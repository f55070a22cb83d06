#include "kolstack/cli.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "json.hpp"
#include "kolstack/duality.hpp"
#include "kolstack/io.hpp"
#include "kolstack/sde.hpp"

namespace kolstack {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr double kStationarityTol = 1e-7;
constexpr double kAdjointIdentityTol = 1e-10;
constexpr double kGapTol = 1e-5;
constexpr double kViTol = 1e-6;

int log_rank(const std::string& level) {
    if (level == "quiet") return 0;
    if (level == "debug") return 2;
    return 1;
}

void log(const CliOptions& opts, int rank, const std::string& message) {
    if (log_rank(opts.log_level) >= rank) std::cerr << message << "\n";
}

json report_json(const SolverReport& r) {
    // wall_time deliberately omitted: summaries must be byte-identical across runs.
    return json{{"iterations", r.iterations}, {"residual", r.residual}, {"converged", r.converged}};
}

json dual_history_json(const DualHistory& h) {
    json j{{"iterations", h.iterations},
           {"converged", h.converged},
           {"final_residual", h.final_residual}};
    if (!h.objective.empty()) j["final_objective"] = h.objective.back();
    return j;
}

fs::path prepare_out_dir(const Scenario& scenario, const std::string& command,
                         const CliOptions& opts) {
    fs::path dir;
    if (!opts.out_dir.empty()) {
        dir = opts.out_dir;
    } else if (const char* env = std::getenv("KOLSTACK_OUT_DIR")) {
        dir = fs::path(env) / (scenario.name + "-" + command);
    } else {
        dir = fs::path("runs") / (scenario.name + "-" + command);
    }
    fs::create_directories(dir / "fields");
    return dir;
}

void write_summary(const fs::path& dir, const json& summary) {
    std::ofstream os(dir / "summary.json");
    if (!os) throw ConfigError("cannot write '" + (dir / "summary.json").string() + "'");
    os << summary.dump(2) << "\n";
}

double resolve_alpha(const Scenario& scenario, const Grid& grid, const Field& target) {
    if (scenario.alpha_relative) return *scenario.alpha_relative * norm(grid, target);
    return scenario.alpha;
}

double max_off_mask(const Grid& grid, const Control& c) {
    double worst = 0.0;
    for (int node = 0; node < grid.n_nodes(); ++node)
        if (c.mask.indicator[node] == 0.0)
            worst = std::max(worst, c.values.values.row(node).cwiseAbs().maxCoeff());
    return worst;
}

json run_follower(const Scenario& scenario, const CliOptions& opts, const fs::path& dir) {
    Problem problem = build_problem(scenario);
    const Grid& grid = problem.grid();
    Field y_rf = make_spacetime_field(grid, scenario.reference);
    Control u1 = make_control(grid, make_spacetime_field(grid, scenario.leader_control),
                              problem.u1_mask(), ControlRole::leader);

    BestResponse br = best_response(problem, u1, y_rf);
    const double j1 = eval_J1(grid, u1);
    const double j2 = eval_J2(problem, u1, br.u2_star, y_rf);
    const double stationarity = stationarity_residual(problem, br, u1, y_rf);

    dump_field_binary(grid, br.y, (dir / "fields" / "y.bin").string());
    dump_field_binary(grid, br.p, (dir / "fields" / "p.bin").string());
    dump_field_binary(grid, br.u2_star.values, (dir / "fields" / "u2.bin").string());
    dump_field_csv(grid, time_slice(grid, br.y, grid.n_time_steps()),
                   (dir / "fields" / "y_terminal.csv").string());

    const bool ok = stationarity <= kStationarityTol && br.report.converged;
    json summary{{"command", "follower"},
                 {"scenario", scenario.name},
                 {"j1", j1},
                 {"j2", j2},
                 {"stationarity_residual", stationarity},
                 {"u2_norm", norm(grid, br.u2_star.values)},
                 {"solver", report_json(br.report)},
                 {"checks", {{"stationarity", stationarity <= kStationarityTol},
                             {"solver_converged", br.report.converged}}},
                 {"passed", ok}};
    log(opts, 1, "follower: J2 = " + std::to_string(j2) +
                     ", stationarity residual = " + std::to_string(stationarity));
    return summary;
}

json stackelberg_metrics(const Problem& problem, const Scenario& scenario,
                         const StackelbergSolution& sol, const Field& target, const Field& y_rf,
                         double alpha, std::uint64_t seed) {
    const Grid& grid = problem.grid();
    DualityReport duality = duality_report(problem, sol, target, alpha);

    BestResponse br;
    br.u2_star = sol.u2_star;
    br.y = sol.y;
    br.p = sol.p;
    br.residual = sol.follower_report.residual;
    br.report = sol.follower_report;
    const double stationarity = stationarity_residual(problem, br, sol.u1_star, y_rf);

    const double vi_min = check_variational_inequality(problem, sol.xi_star, target, alpha,
                                                       scenario.dual.vi_samples, y_rf,
                                                       static_cast<unsigned>(seed));
    const double xi_norm = norm(grid, sol.xi_star.xi);
    const double u1_norm = norm(grid, sol.u1_star.values);
    const double identity_tol = kAdjointIdentityTol * (1.0 + u1_norm) * (1.0 + xi_norm);

    json checks{{"terminal_constraint", sol.terminal_error <= alpha + scenario.dual.controllability_tol},
                {"stationarity", stationarity <= kStationarityTol},
                {"vi", vi_min >= -kViTol * (1.0 + xi_norm)},
                {"gap", std::abs(duality.gap) <= kGapTol * (1.0 + std::abs(duality.primal_value))},
                {"adjoint_identity", duality.adjoint_identity_error <= identity_tol},
                {"u1_support", max_off_mask(grid, sol.u1_star) == 0.0},
                {"u2_support", max_off_mask(grid, sol.u2_star) == 0.0}};
    bool ok = true;
    for (const auto& [key, value] : checks.items()) ok = ok && value.get<bool>();

    return json{{"alpha", alpha},
                {"beta", scenario.beta},
                {"terminal_error", sol.terminal_error},
                {"primal_value", sol.primal_value},
                {"dual_value", sol.dual_value},
                {"gap", duality.gap},
                {"adjoint_identity_error", duality.adjoint_identity_error},
                {"vi_min", vi_min},
                {"stationarity_residual", stationarity},
                {"xi_norm", xi_norm},
                {"u1_norm", u1_norm},
                {"u2_norm", norm(grid, sol.u2_star.values)},
                {"dual", dual_history_json(sol.dual_history)},
                {"follower", report_json(sol.follower_report)},
                {"checks", checks},
                {"passed", ok}};
}

json run_stackelberg(const Scenario& scenario, const CliOptions& opts, const fs::path& dir,
                     std::uint64_t seed) {
    Problem problem = build_problem(scenario);
    const Grid& grid = problem.grid();
    Field y_rf = make_spacetime_field(grid, scenario.reference);
    Field target = make_slice_field(grid, scenario.target);
    const double alpha = resolve_alpha(scenario, grid, target);

    StackelbergSolution sol = solve_stackelberg(problem, target, alpha, y_rf, scenario.dual);
    json summary = stackelberg_metrics(problem, scenario, sol, target, y_rf, alpha, seed);
    summary["command"] = "stackelberg";
    summary["scenario"] = scenario.name;

    dump_field_binary(grid, sol.u1_star.values, (dir / "fields" / "u1.bin").string());
    dump_field_binary(grid, sol.u2_star.values, (dir / "fields" / "u2.bin").string());
    dump_field_binary(grid, sol.xi_star.xi, (dir / "fields" / "xi.bin").string());
    dump_field_csv(grid, sol.xi_star.xi, (dir / "fields" / "xi.csv").string());
    dump_field_binary(grid, sol.y, (dir / "fields" / "y.bin").string());
    Field yT = time_slice(grid, sol.y, grid.n_time_steps());
    dump_field_csv(grid, yT, (dir / "fields" / "y_terminal.csv").string());
    dump_field_binary(grid, target, (dir / "fields" / "target.bin").string());
    dump_field_csv(grid, target, (dir / "fields" / "target.csv").string());

    log(opts, 1, "stackelberg: terminal error " + std::to_string(sol.terminal_error) +
                     " (alpha " + std::to_string(alpha) + "), J1 = " +
                     std::to_string(sol.primal_value));
    return summary;
}

json run_sweep(const Scenario& scenario, const CliOptions& opts, const fs::path& dir) {
    Problem problem = build_problem(scenario);
    const Grid& grid = problem.grid();
    Field y_rf = make_spacetime_field(grid, scenario.reference);
    Field target = make_slice_field(grid, scenario.target);
    const double target_norm = norm(grid, target);

    std::vector<double> alphas;
    for (double rel : scenario.sweep_alphas_relative) alphas.push_back(rel * target_norm);
    std::sort(alphas.rbegin(), alphas.rend());  // descending; warm start tightens

    json levels = json::array();
    bool all_feasible = true;
    bool j1_monotone = true;
    double previous_j1 = -1.0;
    std::optional<DualVariable> warm;
    int level_index = 0;
    for (double alpha : alphas) {
        StackelbergSolution sol = solve_stackelberg(problem, target, alpha, y_rf, scenario.dual,
                                                    warm ? &*warm : nullptr);
        warm = sol.xi_star;
        std::ostringstream stem;
        stem << "level" << level_index++;
        dump_field_binary(grid, sol.xi_star.xi, (dir / "fields" / (stem.str() + "_xi.bin")).string());
        dump_field_csv(grid, time_slice(grid, sol.y, grid.n_time_steps()),
                       (dir / "fields" / (stem.str() + "_y_terminal.csv")).string());
        const bool feasible =
            sol.terminal_error <= alpha + scenario.dual.controllability_tol;
        all_feasible = all_feasible && feasible;
        if (sol.primal_value < previous_j1 - 1e-10 * (1.0 + previous_j1)) j1_monotone = false;
        previous_j1 = sol.primal_value;
        levels.push_back(json{{"alpha", alpha},
                              {"terminal_error", sol.terminal_error},
                              {"j1", sol.primal_value},
                              {"xi_norm", norm(grid, sol.xi_star.xi)},
                              {"dual", dual_history_json(sol.dual_history)},
                              {"feasible", feasible}});
        log(opts, 1, "sweep-alpha: alpha " + std::to_string(alpha) + " -> terminal error " +
                         std::to_string(sol.terminal_error) + ", J1 " +
                         std::to_string(sol.primal_value));
    }
    const bool ok = all_feasible && j1_monotone;
    json summary{{"command", "sweep-alpha"},
                 {"scenario", scenario.name},
                 {"target_norm", target_norm},
                 {"levels", levels},
                 {"checks", {{"all_feasible", all_feasible}, {"j1_monotone", j1_monotone}}},
                 {"passed", ok}};
    return summary;
}

json run_fk_check(const Scenario& scenario, const CliOptions& opts, std::uint64_t seed) {
    Grid grid = build_grid(scenario.grid_config);
    CoefficientSet coeffs = make_coefficients(scenario.coeff_name, scenario.coeff_params);
    validate_coefficients(coeffs, grid);
    Field payoff = make_slice_field(grid, scenario.fk_payoff);

    FeynmanKacResult r = feynman_kac_check(grid, coeffs, payoff, scenario.fk_horizon,
                                           scenario.fk_dt, scenario.fk_paths, seed,
                                           scenario.fk_pde_steps, opts.threads);
    double h_max = 0.0;
    for (int a = 0; a < grid.n_axes(); ++a) h_max = std::max(h_max, grid.spacing(a));
    const double margin = 0.5 * (h_max + scenario.fk_dt);
    const bool ok = std::abs(r.mc_value - r.pde_value) <= 3.0 * r.std_error + margin;

    log(opts, 1, "fk-check: mc " + std::to_string(r.mc_value) + ", pde " +
                     std::to_string(r.pde_value) + ", stderr " + std::to_string(r.std_error));
    json summary{{"command", "fk-check"},
                 {"scenario", scenario.name},
                 {"mc_value", r.mc_value},
                 {"pde_value", r.pde_value},
                 {"std_error", r.std_error},
                 {"n_paths", scenario.fk_paths},
                 {"n_exited", r.n_exited},
                 {"margin", margin},
                 {"passed", ok}};
    return summary;
}

Scenario selftest_scenario() {
    Scenario s = default_scenario();
    s.name = "selftest";
    s.grid_config.dims_per_axis = {9, 9};
    s.grid_config.n_time_steps = 8;
    s.fk_paths = 20000;
    s.fk_horizon = 0.1;
    return s;
}

json run_selftest(const CliOptions& opts, std::uint64_t seed) {
    Scenario scenario = selftest_scenario();
    Problem problem = build_problem(scenario);
    const Grid& grid = problem.grid();
    Field y_rf = make_spacetime_field(grid, scenario.reference);
    json checks = json::object();
    auto record = [&](const std::string& name, double value, double tol) {
        const bool ok = value <= tol;
        checks[name] = json{{"value", value}, {"tol", tol}, {"passed", ok}};
        std::ostringstream line;
        line.precision(3);
        line << (ok ? "[ok]   " : "[FAIL] ") << name << ": " << std::scientific << value
             << " (tol " << tol << ")";
        log(opts, 1, line.str());
        return ok;
    };
    bool ok = true;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    auto random_interior_slice = [&]() {
        Field f = zero_slice(grid);
        for (int i = 0; i < grid.n_interior(); ++i)
            f.values(grid.node_of_interior(i), 0) = unit(rng);
        return f;
    };
    auto random_spacetime_field = [&]() {
        Field f = zero_spacetime(grid);
        for (int k = 0; k < grid.n_slices(); ++k)
            for (int i = 0; i < grid.n_interior(); ++i)
                f.values(grid.node_of_interior(i), k) = unit(rng);
        return f;
    };

    {  // discrete adjoint identity
        DiscreteOperator a = problem.engine().generator_at(1);
        DiscreteOperator astar = problem.engine().adjoint_at(1);
        double worst = 0.0;
        for (int trial = 0; trial < 20; ++trial) {
            Field y = random_interior_slice();
            Field p = random_interior_slice();
            Field ay = slice_from_interior(grid, apply_operator(grid, a, y));
            Field ap = slice_from_interior(grid, apply_operator(grid, astar, p));
            const double err = std::abs(inner_product(grid, ay, p) - inner_product(grid, y, ap)) /
                               (norm(grid, y) * norm(grid, p));
            worst = std::max(worst, err);
        }
        ok = record("adjoint_identity", worst, 1e-12) && ok;
    }
    {  // control-to-state pairing identity
        double worst = 0.0;
        for (int trial = 0; trial < 10; ++trial) {
            Control u1 = make_control(grid, random_spacetime_field(), problem.u1_mask(),
                                      ControlRole::leader);
            DualVariable xi{random_interior_slice()};
            const double lhs = inner_product(grid, apply_H(problem, u1), xi.xi);
            const double rhs = inner_product(grid, u1.values, apply_H_star(problem, xi).values);
            worst = std::max(worst, std::abs(lhs - rhs) /
                                        (norm(grid, u1.values) * norm(grid, xi.xi)));
        }
        ok = record("pairing_identity", worst, 1e-10) && ok;
    }
    {  // trivial target: nothing for the leader to do, all diagnostics exact
        Field y0T = time_slice(grid, solve_background(problem, y_rf).y, grid.n_time_steps());
        StackelbergSolution sol = solve_stackelberg(problem, y0T, 0.1, y_rf, scenario.dual);
        DualityReport rep = duality_report(problem, sol, y0T, 0.1);
        ok = record("trivial_terminal_error", sol.terminal_error, 1e-10) && ok;
        ok = record("trivial_u1_norm", norm(grid, sol.u1_star.values), 1e-10) && ok;
        ok = record("trivial_gap", std::abs(rep.gap), 1e-10) && ok;
        ok = record("trivial_identity_error", rep.adjoint_identity_error, 1e-12) && ok;
    }
    {  // follower stationarity at a random leader control
        Control u1 = make_control(grid, random_spacetime_field(), problem.u1_mask(),
                                  ControlRole::leader);
        BestResponse br = best_response(problem, u1, y_rf);
        ok = record("stationarity", stationarity_residual(problem, br, u1, y_rf),
                    kStationarityTol) && ok;
    }
    {  // Picard vs monolithic on a small instance
        Scenario tiny = scenario;
        tiny.grid_config.dims_per_axis = {5, 5};
        tiny.grid_config.n_time_steps = 4;
        Problem small = build_problem(tiny);
        Field f = zero_spacetime(small.grid());
        for (int k = 0; k < small.grid().n_slices(); ++k)
            for (int i = 0; i < small.grid().n_interior(); ++i)
                f.values(small.grid().node_of_interior(i), k) = unit(rng);
        Control u1 = make_control(small.grid(), f, small.u1_mask(), ControlRole::leader);
        Field small_rf = make_spacetime_field(small.grid(), tiny.reference);
        BestResponse mono = best_response(small, u1, small_rf, CoupledMethod::monolithic);
        BestResponse pic = best_response(small, u1, small_rf, CoupledMethod::picard);
        const double scale = 1.0 + mono.y.values.norm() + mono.p.values.norm();
        const double diff = ((mono.u2_star.values.values - pic.u2_star.values.values).norm() +
                             (mono.y.values - pic.y.values).norm() +
                             (mono.p.values - pic.p.values).norm()) / scale;
        ok = record("picard_vs_monolithic", diff, 1e-8) && ok;
    }
    {  // chain-expectation consistency
        CoefficientSet coeffs = make_coefficients(scenario.coeff_name, scenario.coeff_params);
        Field payoff = make_slice_field(grid, scenario.fk_payoff);
        FeynmanKacResult r = feynman_kac_check(grid, coeffs, payoff, scenario.fk_horizon,
                                               scenario.fk_dt, scenario.fk_paths, seed,
                                               scenario.fk_pde_steps, opts.threads);
        double h_max = 0.0;
        for (int a = 0; a < grid.n_axes(); ++a) h_max = std::max(h_max, grid.spacing(a));
        ok = record("feynman_kac", std::abs(r.mc_value - r.pde_value),
                    3.0 * r.std_error + 0.5 * (h_max + scenario.fk_dt)) && ok;
    }

    return json{{"command", "selftest"}, {"scenario", scenario.name}, {"checks", checks},
                {"passed", ok}};
}

}  // namespace

std::string run_pipeline(const std::string& command, const Scenario& scenario,
                         const CliOptions& opts) {
    Eigen::setNbThreads(std::max(1, opts.threads));
    const std::uint64_t seed = opts.seed.value_or(scenario.seed);
    const fs::path dir = prepare_out_dir(scenario, command, opts);

    json summary;
    if (command == "follower")
        summary = run_follower(scenario, opts, dir);
    else if (command == "stackelberg")
        summary = run_stackelberg(scenario, opts, dir, seed);
    else if (command == "sweep-alpha")
        summary = run_sweep(scenario, opts, dir);
    else if (command == "fk-check")
        summary = run_fk_check(scenario, opts, seed);
    else if (command == "selftest")
        summary = run_selftest(opts, seed);
    else
        throw ConfigError("unknown command '" + command + "'");

    write_summary(dir, summary);
    if (summary.contains("passed") && !summary["passed"].get<bool>())
        throw InvariantError(command + ": checks failed; diagnostics in " +
                             (dir / "summary.json").string());
    return summary.dump(2);
}

int run_command(const std::string& command, const CliOptions& opts) {
    try {
        Scenario scenario;
        if (command == "selftest") {
            scenario = selftest_scenario();  // built-in instance, --scenario is ignored
        } else {
            if (opts.scenario_path.empty())
                throw ConfigError("command '" + command + "' requires --scenario <path>");
            scenario = load_scenario(opts.scenario_path);
        }
        run_pipeline(command, scenario, opts);
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const SolveError& e) {
        std::cerr << "solver failure: " << e.what() << "\n";
        return 3;
    } catch (const InvariantError& e) {
        std::cerr << "invariant violation: " << e.what() << "\n";
        return 4;
    }
}

}  // namespace kolstack

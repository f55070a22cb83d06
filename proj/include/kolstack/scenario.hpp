#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kolstack/leader.hpp"

namespace kolstack {

/// Named-field parameters; scalars are single-entry vectors.
using FieldParams = std::map<std::string, std::vector<double>>;

struct FieldSpec {
    std::string name = "zero";
    FieldParams params;
};

/// One run's static data, loaded from a JSON scenario file and validated.
struct Scenario {
    std::string name = "scenario";
    GridConfig grid_config;
    std::string coeff_name = "kolmogorov";
    std::map<std::string, double> coeff_params;
    std::vector<std::pair<double, double>> u1_box;
    std::vector<std::pair<double, double>> u2_box;
    FieldSpec target;
    FieldSpec reference;
    FieldSpec leader_control;  // used by the follower-only pipeline
    double alpha = 0.1;        // absolute when alpha_relative is unset
    std::optional<double> alpha_relative;  // fraction of ||target||
    double beta = 1.0;
    std::uint64_t seed = 12345;
    SolverOptions solver;
    DualOptions dual;
    std::vector<double> sweep_alphas_relative = {0.4, 0.2, 0.1, 0.05};

    // Chain-expectation consistency check parameters.
    FieldSpec fk_payoff;
    double fk_horizon = 0.1;
    double fk_dt = 1e-3;
    int fk_paths = 100000;
    int fk_pde_steps = 64;
};

/// Parses and validates a scenario file; errors name the offending key.
Scenario load_scenario(const std::string& path);
/// The built-in default instance (used by selftest and as a template).
Scenario default_scenario();
/// Serializes a scenario back to its JSON form.
std::string scenario_to_json(const Scenario& scenario);

Problem build_problem(const Scenario& scenario);

/// Field registry: "zero", "gaussian_bump" (center, width, amplitude),
/// "eigenmode" (amplitude, mode per axis), "constant" (value).  Slices are
/// zeroed on the boundary except for "constant".
Field make_slice_field(const Grid& grid, const FieldSpec& spec);
/// Reference trajectories and leader controls: the slice replicated in time.
Field make_spacetime_field(const Grid& grid, const FieldSpec& spec);

}  // namespace kolstack

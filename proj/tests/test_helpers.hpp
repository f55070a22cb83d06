#pragma once

#include <random>

#include "kolstack/grid.hpp"

namespace kolstack::testing {

inline Field random_slice(const Grid& grid, std::mt19937_64& rng, bool zero_boundary = true) {
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    Field f = zero_slice(grid);
    for (int node = 0; node < grid.n_nodes(); ++node) {
        if (zero_boundary && grid.is_boundary(node)) continue;
        f.values(node, 0) = dist(rng);
    }
    return f;
}

inline Field random_spacetime(const Grid& grid, std::mt19937_64& rng, bool zero_boundary = true) {
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    Field f = zero_spacetime(grid);
    for (int k = 0; k < grid.n_slices(); ++k)
        for (int node = 0; node < grid.n_nodes(); ++node) {
            if (zero_boundary && grid.is_boundary(node)) continue;
            f.values(node, k) = dist(rng);
        }
    return f;
}

inline GridConfig square_grid_config(int points_per_axis, int n_time_steps, double horizon = 1.0) {
    GridConfig cfg;
    cfg.n_subsystems = 2;
    cfg.d_per_subsystem = 1;
    cfg.dims_per_axis = {points_per_axis, points_per_axis};
    cfg.domain_bounds = {{-1.0, 1.0}, {-1.0, 1.0}};
    cfg.n_time_steps = n_time_steps;
    cfg.horizon_T = horizon;
    return cfg;
}

}  // namespace kolstack::testing

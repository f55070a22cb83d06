#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "kolstack/scenario.hpp"

namespace kolstack {

struct CliOptions {
    std::string scenario_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    int threads = 1;
    std::string log_level = "info";  // quiet | info | debug
};

/// Executes one pipeline on an already loaded scenario and returns the summary
/// JSON (also written to <out>/summary.json together with field dumps).
/// Throws ConfigError / SolveError / InvariantError on failure.
std::string run_pipeline(const std::string& command, const Scenario& scenario,
                         const CliOptions& opts);

/// Command-line entry: loads the scenario (selftest uses the built-in one),
/// runs the pipeline and maps outcomes to exit codes:
///   0 success, 2 configuration error, 3 solver failure, 4 invariant violation.
int run_command(const std::string& command, const CliOptions& opts);

}  // namespace kolstack

#pragma once

#include <stdexcept>
#include <string>

namespace kolstack {

/// Invalid configuration or precondition violation (bad grid dims, empty mask, ...).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// A linear or coupled solve failed to converge or factorize.
class SolveError : public std::runtime_error {
public:
    explicit SolveError(const std::string& what, double residual = -1.0, int iterations = -1)
        : std::runtime_error(what), residual(residual), iterations(iterations) {}

    double residual;
    int iterations;
};

/// A computed solution violates a contract it is required to satisfy
/// (e.g. the terminal-constraint tolerance of the full pipeline).
class InvariantError : public std::runtime_error {
public:
    explicit InvariantError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace kolstack

#pragma once

#include <cmath>
#include <cstdint>

namespace kolstack {

/// splitmix64 counter generator.  Per-path streams are derived as
/// SplitMix64(mix(seed, path_index)), so parallel path generation draws the
/// same numbers regardless of the thread layout.
struct SplitMix64 {
    std::uint64_t state;

    explicit SplitMix64(std::uint64_t s) : state(s) {}

    std::uint64_t next() {
        state += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform in (0, 1].
    double uniform_open() { return (static_cast<double>(next() >> 11) + 1.0) * 0x1.0p-53; }
    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
};

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
    SplitMix64 s(seed + (index + 1) * 0xD1B54A32D192ED03ULL);
    return s.next();
}

/// Box-Muller standard normals on top of SplitMix64; platform-independent.
struct NormalSampler {
    SplitMix64 rng;
    bool has_spare = false;
    double spare = 0.0;

    explicit NormalSampler(std::uint64_t seed) : rng(seed) {}

    double sample() {
        if (has_spare) {
            has_spare = false;
            return spare;
        }
        const double u1 = rng.uniform_open();
        const double u2 = rng.uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * M_PI * u2;
        spare = r * std::sin(theta);
        has_spare = true;
        return r * std::cos(theta);
    }
};

}  // namespace kolstack

#pragma once

#include <string>

#include "kolstack/grid.hpp"

namespace kolstack {

enum class FieldFormat { binary, csv };

/// Binary layout: magic "KSFLD001", u32 kind, u32 n_axes, u64 dims[n_axes],
/// u64 n_slices, then node-row-major doubles per slice.  Lossless round trip.
void dump_field_binary(const Grid& grid, const Field& field, const std::string& path);
Field load_field_binary(const Grid& grid, const std::string& path);

/// CSV with node coordinates and value columns; spacetime fields emit one file
/// per slice with zero-padded indices (<stem>_t0007.csv).
void dump_field_csv(const Grid& grid, const Field& field, const std::string& path);

void dump_field(const Grid& grid, const Field& field, const std::string& path,
                FieldFormat format);

}  // namespace kolstack

#pragma once

#include "stns/mesh.hpp"

#include <filesystem>

namespace stns {

/// Legacy VTK ASCII structured-points file with cell-centered u, v, w, p
/// (one SCALARS block per component). `state` must cover the whole grid.
void write_vtk(const std::filesystem::path& path, const FlowState& state, const GridSpec& grid);

/// Binary field dump used for references and restarts:
///   "STNS1" | int64 Nx | int64 Ny | int64 Nz | u | v | w | p
/// Each component holds Nx*Ny*Nz native-endian float64 values of the interior
/// staggered array in row-major [i][j][k] order (k fastest). The upper wall
/// face of a non-periodic axis is always zero and is not stored.
void write_binary(const std::filesystem::path& path, const FlowState& state);

/// Reads a dump; ghosts are zero and must be refreshed before stepping.
FlowState read_binary(const std::filesystem::path& path);

} // namespace stns

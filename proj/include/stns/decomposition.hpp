#pragma once

#include "stns/mesh.hpp"
#include "stns/runtime.hpp"

#include <array>
#include <span>
#include <vector>

namespace stns {

struct ProcessLayout {
    int P = 1;
    Index3 dims{1, 1, 1}; // Px, Py, Pz

    bool operator==(const ProcessLayout&) const = default;
};

/// Every ordered triple (Px, Py, Pz) of positive integers with product P.
std::vector<Index3> factorizations(int P);

/// Surface cost of a decomposition: (I/Px)(J/Py) + (J/Py)(K/Pz) + (I/Px)(K/Pz),
/// real division.
double comm_cost(const Index3& dims, const Index3& cells);

/// Every local extent of the decomposition keeps at least 3 cells.
bool feasible(const Index3& dims, const Index3& cells);

/// Cost-minimal feasible factorization. Ties (relative 1e-12) go to the larger
/// Px, then the larger Py. Throws when no factorization is feasible.
ProcessLayout select_decomposition(int P, const Index3& cells);

struct Subdomain {
    int rank = 0;
    Index3 coords{}; // position in the process grid
    Block block;
    std::array<std::array<int, 2>, 3> neighbor{}; // -1: physical wall

    bool operator==(const Subdomain&) const = default;
};

/// Spatial rank of process-grid coordinates, x fastest.
int layout_rank(const ProcessLayout& layout, const Index3& coords) noexcept;

/// Split [0, N) into `parts` contiguous ranges; the first N mod parts get one
/// extra cell. Returns the range starts plus N.
std::vector<int> split_axis(int N, int parts);

/// Even tiling of the grid; periodic axes wrap the neighbor table.
std::vector<Subdomain> partition(const GridSpec& grid, const ProcessLayout& layout, const BoundarySpec& bc);

Domain make_domain(const GridSpec& grid, const BoundarySpec& bc, const CellFlags& flags, const Subdomain& sub);

enum class ReduceOp { Sum, Max };

/// Combine one partial per rank: SUM folds left in ascending rank order,
/// MAX is order free. Throws on an empty list.
double global_reduce(std::span<const double> partials, ReduceOp op);

/// Copy neighbor interiors into velocity ghosts (width 2), axis by axis,
/// over the full ghost-inclusive extent of the other axes. Wall and wrap
/// sides are not touched.
void exchange_velocity_halos(FlowState& state, const Domain& domain, CommGroup& space);
void exchange_pressure_halos(Field& p, const Domain& domain, CommGroup& space);

/// Per axis: neighbor exchange, then walls and wraps. Reproduces the ghost
/// state of the undecomposed field exactly.
void refresh_velocity_ghosts(FlowState& state, const Domain& domain, CommGroup& space);
void refresh_pressure_ghosts(Field& p, const Domain& domain, CommGroup& space);

/// Extract one block of a whole-grid state (interior only, ghosts zero).
FlowState extract_block(const FlowState& global, const Block& block);

/// Assemble the whole-grid state on spatial rank 0 (interior values, ghosts
/// zero); other ranks get an empty state.
FlowState gather_state(const FlowState& local, const std::vector<Subdomain>& subs, CommGroup& space);

} // namespace stns

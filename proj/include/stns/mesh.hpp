#pragma once

/**
 * @file mesh.hpp
 * @brief Uniform staggered (MAC) mesh, flow state, boundary conditions and
 *        first-order obstacle enumeration.
 *
 * Indexing conventions used throughout the library:
 *   - cell (i,j,k) covers [i*hx, (i+1)*hx] x ... ;
 *   - u(i,j,k) lives on the west x-face of cell (i,j,k), i.e. at x = i*hx;
 *     v and w likewise on the south y-face and bottom z-face.
 * Every velocity array therefore has the same interior extents as the cells.
 * On a non-periodic axis the wall face at the upper end (global index N)
 * sits in the first ghost layer of the last block along that axis.
 */

#include "stns/array3.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace stns {

inline constexpr int kVelocityGhost = 2;
inline constexpr int kPressureGhost = 1;

using Index3 = std::array<int, 3>;

struct GridSpec {
    Index3 cells{};                 // Nx, Ny, Nz
    std::array<double, 3> length{}; // Lx, Ly, Lz

    double h(int axis) const noexcept { return length[axis] / cells[axis]; }
    long long total_cells() const noexcept
    {
        return static_cast<long long>(cells[0]) * cells[1] * cells[2];
    }
    /// Throws std::invalid_argument unless every N >= 3 and every L > 0.
    void validate() const;

    bool operator==(const GridSpec&) const = default;
};

/// Contiguous range of cells owned by one worker: [lo, lo + n) per axis.
struct Block {
    Index3 lo{};
    Index3 n{};

    bool operator==(const Block&) const = default;
};

enum class BoundaryKind : std::uint8_t { NoSlip, Slip, Periodic, MovingLid };

const char* to_string(BoundaryKind kind);
BoundaryKind boundary_kind_from_string(const std::string& name);

/// Per-face boundary conditions. Index as face[axis][side], side 0 = low, 1 = high.
/// A moving lid drives the x velocity component with `lid_speed`.
struct BoundarySpec {
    std::array<std::array<BoundaryKind, 2>, 3> face{};
    double lid_speed = 0.0;

    bool periodic(int axis) const noexcept { return face[axis][0] == BoundaryKind::Periodic; }
    /// Rejects half-periodic axes and lids on x-faces.
    void validate() const;

    /// Closed box with no-slip walls, a lid on y-max and periodic z.
    static BoundarySpec cavity(double lid_speed);
    static BoundarySpec all_periodic();

    bool operator==(const BoundarySpec&) const = default;
};

enum class CellTag : std::uint8_t { Fluid = 0, Obstacle = 1, Outside = 2 };

/// Global FLUID/OBSTACLE enumeration. Immutable once built.
class CellFlags {
public:
    explicit CellFlags(Index3 cells);
    CellFlags(Index3 cells, std::vector<CellTag> tags);

    const Index3& cells() const noexcept { return cells_; }
    CellTag operator()(int i, int j, int k) const noexcept
    {
        return tags_[static_cast<std::size_t>(i) +
                     static_cast<std::size_t>(cells_[0]) * (j + static_cast<std::size_t>(cells_[1]) * k)];
    }
    long long count(CellTag tag) const;

    bool operator==(const CellFlags&) const = default;

private:
    Index3 cells_{};
    std::vector<CellTag> tags_;
};

/// Axis-aligned box in physical coordinates.
struct Box {
    std::array<double, 3> lo{};
    std::array<double, 3> hi{};

    bool operator==(const Box&) const = default;
};

/// A cell is OBSTACLE iff its center lies inside some box.
CellFlags build_obstacle_flags(const GridSpec& grid, std::span<const Box> obstacles);

/// 7x7 array of cubes of side 1/16 at x,y in {4,8,...,28}/32 and z = 0.5,
/// scaled to the domain extents.
std::vector<Box> cube_array_preset(const GridSpec& grid);

/// How a block's face connects to the rest of the world along one axis side.
enum class LinkKind : std::uint8_t { Wall, SelfWrap, Neighbor };

struct SideLink {
    LinkKind kind = LinkKind::Wall;
    int rank = -1;
};

/// Everything a worker needs to know about its part of the mesh: geometry,
/// boundary conditions, local cell tags (with a 2-cell halo), face masks and
/// neighbor links. Built once and shared read-only by all kernels.
class Domain {
public:
    /// `neighbor[axis][side]` is the spatial rank across that face, or -1 when
    /// the face is a physical wall. A periodic axis spanned by this block alone
    /// must pass its own rank (or -1); it becomes a local wrap.
    Domain(GridSpec grid, BoundarySpec bc, const CellFlags& flags, Block block,
           std::array<std::array<int, 2>, 3> neighbor, int rank);

    /// Single block covering the whole grid.
    static Domain whole(GridSpec grid, BoundarySpec bc, const CellFlags& flags);

    const GridSpec& grid() const noexcept { return grid_; }
    const BoundarySpec& bc() const noexcept { return bc_; }
    const Block& block() const noexcept { return block_; }
    int rank() const noexcept { return rank_; }
    double h(int axis) const noexcept { return grid_.h(axis); }

    const SideLink& link(int axis, int side) const noexcept { return links_[axis][side]; }
    /// True when this side of the block is a physical, non-periodic wall.
    bool wall(int axis, int side) const noexcept
    {
        return links_[axis][side].kind == LinkKind::Wall;
    }

    /// Local cell tags, valid on [-2, n+2) per axis.
    const Mask& tags() const noexcept { return tags_; }
    bool fluid(int i, int j, int k) const noexcept
    {
        return tags_(i, j, k) == static_cast<std::uint8_t>(CellTag::Fluid);
    }
    /// Face of component `c` at local index is free (updated by the stepper)
    /// iff both adjacent cells are fluid. Valid on [0, n] per axis.
    const Mask& active(int c) const noexcept { return active_[c]; }
    /// Per-cell bitmask of open pressure legs: bit 2*axis + side.
    const Mask& legs() const noexcept { return legs_; }

    long long fluid_cells_local() const noexcept { return fluid_local_; }

private:
    GridSpec grid_;
    BoundarySpec bc_;
    Block block_;
    int rank_ = 0;
    std::array<std::array<SideLink, 2>, 3> links_{};
    Mask tags_;
    std::array<Mask, 3> active_;
    Mask legs_;
    long long fluid_local_ = 0;
};

/// Velocities on faces (2 ghost layers), pressure at cell centers (1 ghost layer).
struct FlowState {
    Block block;
    std::array<Field, 3> vel;
    Field p;
    double t = 0.0;

    Field& u() noexcept { return vel[0]; }
    Field& v() noexcept { return vel[1]; }
    Field& w() noexcept { return vel[2]; }
    const Field& u() const noexcept { return vel[0]; }
    const Field& v() const noexcept { return vel[1]; }
    const Field& w() const noexcept { return vel[2]; }

    bool operator==(const FlowState&) const = default;
};

/// Zero state covering the whole grid; throws on an invalid GridSpec.
FlowState new_state(const GridSpec& grid);
/// Zero state for one block.
FlowState new_state(const Domain& domain);

/// Fill the ghost layers of one axis from physical boundaries and local
/// periodic wraps over the full (ghost-inclusive) extent of the other axes.
/// Faces with a Neighbor link are left untouched.
void apply_boundary_conditions_axis(FlowState& state, const Domain& domain, int axis);

/// Zero obstacle faces, then apply the wall/wrap rules axis by axis (x, y, z).
/// On a whole-grid Domain this fills every ghost value.
void apply_boundary_conditions(FlowState& state, const Domain& domain);

/// Pressure-like cell field: homogeneous Neumann copy at walls, wrap on
/// periodic self-links, one axis.
void apply_pressure_bc_axis(Field& p, const Domain& domain, int axis);

/// Per-cell staggered divergence; obstacle cells report 0. Needs valid ghosts.
Field discrete_divergence(const FlowState& state, const Domain& domain);

/// Max |div u| over local fluid cells.
double max_abs_divergence(const FlowState& state, const Domain& domain);

struct CenterFields {
    Field u, v, w, p;
};

/// Velocities averaged from the two faces of each cell; p copied.
CenterFields interpolate_to_centers(const FlowState& state);

/// Interior-only copy of a FlowState (u, v, w, p in that order, x fastest).
struct PackedState {
    std::vector<double> values;
    double t = 0.0;
};

PackedState pack_interior(const FlowState& state);
void unpack_interior(const PackedState& packed, FlowState& state);

/// Largest |value| over the interior of the three velocity arrays; NaN if any is non-finite.
double max_abs_velocity(const FlowState& state);

} // namespace stns

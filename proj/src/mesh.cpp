#include "stns/mesh.hpp"

#include <cmath>
#include <stdexcept>

namespace stns {

void GridSpec::validate() const
{
    for (int a = 0; a < 3; ++a) {
        if (cells[a] < 3)
            throw std::invalid_argument("grid needs at least 3 cells per axis, got " +
                                        std::to_string(cells[a]) + " on axis " + std::to_string(a));
        if (!(length[a] > 0.0) || !std::isfinite(length[a]))
            throw std::invalid_argument("grid edge lengths must be positive and finite");
    }
}

const char* to_string(BoundaryKind kind)
{
    switch (kind) {
    case BoundaryKind::NoSlip: return "noslip";
    case BoundaryKind::Slip: return "slip";
    case BoundaryKind::Periodic: return "periodic";
    case BoundaryKind::MovingLid: return "lid";
    }
    return "?";
}

BoundaryKind boundary_kind_from_string(const std::string& name)
{
    if (name == "noslip") return BoundaryKind::NoSlip;
    if (name == "slip") return BoundaryKind::Slip;
    if (name == "periodic") return BoundaryKind::Periodic;
    if (name == "lid") return BoundaryKind::MovingLid;
    throw std::invalid_argument("unknown boundary kind '" + name + "'");
}

void BoundarySpec::validate() const
{
    for (int a = 0; a < 3; ++a) {
        const bool lo = face[a][0] == BoundaryKind::Periodic;
        const bool hi = face[a][1] == BoundaryKind::Periodic;
        if (lo != hi)
            throw std::invalid_argument("periodic boundary must be set on both faces of axis " +
                                        std::to_string(a));
    }
    if (face[0][0] == BoundaryKind::MovingLid || face[0][1] == BoundaryKind::MovingLid)
        throw std::invalid_argument("a moving lid drives u and cannot sit on an x-face");
    if (!std::isfinite(lid_speed))
        throw std::invalid_argument("lid speed must be finite");
}

BoundarySpec BoundarySpec::cavity(double lid_speed)
{
    BoundarySpec bc;
    bc.face[0] = {BoundaryKind::NoSlip, BoundaryKind::NoSlip};
    bc.face[1] = {BoundaryKind::NoSlip, BoundaryKind::MovingLid};
    bc.face[2] = {BoundaryKind::Periodic, BoundaryKind::Periodic};
    bc.lid_speed = lid_speed;
    return bc;
}

BoundarySpec BoundarySpec::all_periodic()
{
    BoundarySpec bc;
    for (auto& f : bc.face)
        f = {BoundaryKind::Periodic, BoundaryKind::Periodic};
    return bc;
}

CellFlags::CellFlags(Index3 cells)
    : cells_(cells),
      tags_(static_cast<std::size_t>(cells[0]) * cells[1] * cells[2], CellTag::Fluid)
{
}

CellFlags::CellFlags(Index3 cells, std::vector<CellTag> tags) : cells_(cells), tags_(std::move(tags))
{
    if (tags_.size() != static_cast<std::size_t>(cells[0]) * cells[1] * cells[2])
        throw std::invalid_argument("cell flag count does not match grid");
}

long long CellFlags::count(CellTag tag) const
{
    long long c = 0;
    for (auto t : tags_)
        c += (t == tag);
    return c;
}

CellFlags build_obstacle_flags(const GridSpec& grid, std::span<const Box> obstacles)
{
    grid.validate();
    for (const auto& box : obstacles) {
        for (int a = 0; a < 3; ++a) {
            const double eps = 1e-12 * grid.length[a];
            if (!(box.lo[a] < box.hi[a]) || box.lo[a] < -eps || box.hi[a] > grid.length[a] + eps)
                throw std::invalid_argument("obstacle box outside the domain or empty on axis " +
                                            std::to_string(a));
        }
    }
    const auto& n = grid.cells;
    std::vector<CellTag> tags(static_cast<std::size_t>(n[0]) * n[1] * n[2], CellTag::Fluid);
    std::size_t idx = 0;
    for (int k = 0; k < n[2]; ++k)
        for (int j = 0; j < n[1]; ++j)
            for (int i = 0; i < n[0]; ++i, ++idx) {
                const std::array<double, 3> c = {(i + 0.5) * grid.h(0), (j + 0.5) * grid.h(1),
                                                 (k + 0.5) * grid.h(2)};
                for (const auto& box : obstacles) {
                    if (c[0] >= box.lo[0] && c[0] <= box.hi[0] && c[1] >= box.lo[1] &&
                        c[1] <= box.hi[1] && c[2] >= box.lo[2] && c[2] <= box.hi[2]) {
                        tags[idx] = CellTag::Obstacle;
                        break;
                    }
                }
            }
    return CellFlags(n, std::move(tags));
}

std::vector<Box> cube_array_preset(const GridSpec& grid)
{
    std::vector<Box> boxes;
    const auto& L = grid.length;
    const double half = 1.0 / 32.0;
    for (int jy = 1; jy <= 7; ++jy)
        for (int ix = 1; ix <= 7; ++ix) {
            const double cx = 4.0 * ix / 32.0;
            const double cy = 4.0 * jy / 32.0;
            boxes.push_back(Box{{(cx - half) * L[0], (cy - half) * L[1], (0.5 - half) * L[2]},
                                {(cx + half) * L[0], (cy + half) * L[1], (0.5 + half) * L[2]}});
        }
    return boxes;
}

// ---------------------------------------------------------------------------

Domain::Domain(GridSpec grid, BoundarySpec bc, const CellFlags& flags, Block block,
               std::array<std::array<int, 2>, 3> neighbor, int rank)
    : grid_(grid), bc_(bc), block_(block), rank_(rank)
{
    grid_.validate();
    bc_.validate();
    if (flags.cells() != grid_.cells)
        throw std::invalid_argument("cell flags do not match the grid");

    for (int a = 0; a < 3; ++a) {
        if (block_.n[a] < 1 || block_.lo[a] < 0 || block_.lo[a] + block_.n[a] > grid_.cells[a])
            throw std::invalid_argument("block does not fit inside the grid");
        const bool spans = block_.lo[a] == 0 && block_.n[a] == grid_.cells[a];
        for (int s = 0; s < 2; ++s) {
            auto& link = links_[a][s];
            if (bc_.periodic(a) && spans) {
                link = {LinkKind::SelfWrap, rank_};
            } else if (neighbor[a][s] >= 0 && neighbor[a][s] != rank_) {
                link = {LinkKind::Neighbor, neighbor[a][s]};
            } else {
                const bool at_edge = s == 0 ? block_.lo[a] == 0 : block_.lo[a] + block_.n[a] == grid_.cells[a];
                if (!at_edge || bc_.periodic(a))
                    throw std::invalid_argument("interior block face has no neighbor on axis " +
                                                std::to_string(a));
                link = {LinkKind::Wall, -1};
            }
        }
    }

    const auto& n = block_.n;
    tags_ = Mask(n, kVelocityGhost, static_cast<std::uint8_t>(CellTag::Outside));
    const auto& N = grid_.cells;
    for (int k = -kVelocityGhost; k < n[2] + kVelocityGhost; ++k)
        for (int j = -kVelocityGhost; j < n[1] + kVelocityGhost; ++j)
            for (int i = -kVelocityGhost; i < n[0] + kVelocityGhost; ++i) {
                Index3 g = {block_.lo[0] + i, block_.lo[1] + j, block_.lo[2] + k};
                bool inside = true;
                for (int a = 0; a < 3; ++a) {
                    if (g[a] < 0 || g[a] >= N[a]) {
                        if (bc_.periodic(a))
                            g[a] = ((g[a] % N[a]) + N[a]) % N[a];
                        else
                            inside = false;
                    }
                }
                if (inside)
                    tags_(i, j, k) = static_cast<std::uint8_t>(flags(g[0], g[1], g[2]));
            }

    for (int c = 0; c < 3; ++c) {
        active_[c] = Mask(n, 1, 0);
        for (int k = 0; k <= n[2]; ++k)
            for (int j = 0; j <= n[1]; ++j)
                for (int i = 0; i <= n[0]; ++i) {
                    Index3 m = {i, j, k};
                    m[c] -= 1;
                    active_[c](i, j, k) = fluid(i, j, k) && fluid(m[0], m[1], m[2]);
                }
    }

    legs_ = Mask(n, 0, 0);
    for_interior(legs_, [&](int i, int j, int k) {
        if (!fluid(i, j, k))
            return;
        ++fluid_local_;
        std::uint8_t bits = 0;
        for (int a = 0; a < 3; ++a) {
            Index3 lo = {i, j, k}, hi = {i, j, k};
            lo[a] -= 1;
            hi[a] += 1;
            if (fluid(lo[0], lo[1], lo[2]))
                bits |= static_cast<std::uint8_t>(1u << (2 * a));
            if (fluid(hi[0], hi[1], hi[2]))
                bits |= static_cast<std::uint8_t>(1u << (2 * a + 1));
        }
        legs_(i, j, k) = bits;
    });
}

Domain Domain::whole(GridSpec grid, BoundarySpec bc, const CellFlags& flags)
{
    std::array<std::array<int, 2>, 3> none{};
    for (auto& s : none)
        s = {-1, -1};
    return Domain(grid, bc, flags, Block{{0, 0, 0}, grid.cells}, none, 0);
}

// ---------------------------------------------------------------------------

FlowState new_state(const GridSpec& grid)
{
    grid.validate();
    FlowState s;
    s.block = Block{{0, 0, 0}, grid.cells};
    for (auto& f : s.vel)
        f = Field(grid.cells, kVelocityGhost, 0.0);
    s.p = Field(grid.cells, kPressureGhost, 0.0);
    s.t = 0.0;
    return s;
}

FlowState new_state(const Domain& domain)
{
    FlowState s;
    s.block = domain.block();
    for (auto& f : s.vel)
        f = Field(s.block.n, kVelocityGhost, 0.0);
    s.p = Field(s.block.n, kPressureGhost, 0.0);
    return s;
}

namespace {

// Calls fn(base) for every ghost-inclusive position of the plane orthogonal
// to `axis`; base is the memory offset of axis index 0 at that position.
template <typename Fn>
void for_plane(const Field& f, int axis, Fn&& fn)
{
    const int g = f.ghost();
    const int a1 = (axis + 1) % 3;
    const int a2 = (axis + 2) % 3;
    for (int q2 = -g; q2 < f.n(a2) + g; ++q2)
        for (int q1 = -g; q1 < f.n(a1) + g; ++q1) {
            Index3 idx{};
            idx[axis] = 0;
            idx[a1] = q1;
            idx[a2] = q2;
            fn(f.offset(idx[0], idx[1], idx[2]));
        }
}

void wrap_axis(Field& f, int axis, int side)
{
    const int n = f.n(axis);
    const int g = f.ghost();
    const auto s = f.stride(axis);
    double* d = f.data();
    for_plane(f, axis, [&](std::ptrdiff_t base) {
        for (int m = 1; m <= g; ++m) {
            if (side == 0)
                d[base - m * s] = d[base + (n - m) * s];
            else
                d[base + (n - 1 + m) * s] = d[base + (m - 1) * s];
        }
    });
}

} // namespace

void apply_pressure_bc_axis(Field& p, const Domain& domain, int axis)
{
    const int n = p.n(axis);
    const auto s = p.stride(axis);
    double* d = p.data();
    for (int side = 0; side < 2; ++side) {
        switch (domain.link(axis, side).kind) {
        case LinkKind::Neighbor: break;
        case LinkKind::SelfWrap: wrap_axis(p, axis, side); break;
        case LinkKind::Wall:
            for_plane(p, axis, [&](std::ptrdiff_t base) {
                for (int m = 1; m <= p.ghost(); ++m) {
                    if (side == 0)
                        d[base - m * s] = d[base + (m - 1) * s];
                    else
                        d[base + (n - 1 + m) * s] = d[base + (n - m) * s];
                }
            });
            break;
        }
    }
}

void apply_boundary_conditions_axis(FlowState& state, const Domain& domain, int axis)
{
    const auto& bc = domain.bc();
    for (int side = 0; side < 2; ++side) {
        const auto kind = domain.link(axis, side).kind;
        if (kind == LinkKind::Neighbor)
            continue;
        if (kind == LinkKind::SelfWrap) {
            for (auto& f : state.vel)
                wrap_axis(f, axis, side);
            continue;
        }
        const BoundaryKind wall = bc.face[axis][side];
        for (int c = 0; c < 3; ++c) {
            Field& f = state.vel[c];
            const int n = f.n(axis);
            const auto s = f.stride(axis);
            double* d = f.data();
            if (c == axis) {
                // Normal component: zero on the wall face, odd mirror beyond it.
                for_plane(f, axis, [&](std::ptrdiff_t base) {
                    if (side == 0) {
                        d[base] = 0.0;
                        d[base - s] = -d[base + s];
                        d[base - 2 * s] = -d[base + 2 * s];
                    } else {
                        d[base + n * s] = 0.0;
                        d[base + (n + 1) * s] = -d[base + (n - 1) * s];
                    }
                });
                continue;
            }
            double sign = -1.0;
            double target = 0.0;
            if (wall == BoundaryKind::Slip)
                sign = 1.0;
            else if (wall == BoundaryKind::MovingLid && c == 0)
                target = 2.0 * bc.lid_speed;
            for_plane(f, axis, [&](std::ptrdiff_t base) {
                for (int m = 1; m <= kVelocityGhost; ++m) {
                    if (side == 0)
                        d[base - m * s] = target + sign * d[base + (m - 1) * s];
                    else
                        d[base + (n - 1 + m) * s] = target + sign * d[base + (n - m) * s];
                }
            });
        }
    }
    apply_pressure_bc_axis(state.p, domain, axis);
}

void apply_boundary_conditions(FlowState& state, const Domain& domain)
{
    for (int c = 0; c < 3; ++c) {
        auto& f = state.vel[c];
        const auto& act = domain.active(c);
        for_interior(f, [&](int i, int j, int k) {
            if (!act(i, j, k))
                f(i, j, k) = 0.0;
        });
    }
    for (int axis = 0; axis < 3; ++axis)
        apply_boundary_conditions_axis(state, domain, axis);
}

Field discrete_divergence(const FlowState& state, const Domain& domain)
{
    const auto& n = state.block.n;
    Field div(n, 0, 0.0);
    const double ihx = 1.0 / domain.h(0), ihy = 1.0 / domain.h(1), ihz = 1.0 / domain.h(2);
    const Field& u = state.u();
    const Field& v = state.v();
    const Field& w = state.w();
    for_interior(div, [&](int i, int j, int k) {
        if (!domain.fluid(i, j, k))
            return;
        div(i, j, k) = (u(i + 1, j, k) - u(i, j, k)) * ihx + (v(i, j + 1, k) - v(i, j, k)) * ihy +
                       (w(i, j, k + 1) - w(i, j, k)) * ihz;
    });
    return div;
}

double max_abs_divergence(const FlowState& state, const Domain& domain)
{
    const Field div = discrete_divergence(state, domain);
    double m = 0.0;
    for_interior(div, [&](int i, int j, int k) { m = std::max(m, std::abs(div(i, j, k))); });
    return m;
}

CenterFields interpolate_to_centers(const FlowState& state)
{
    const auto& n = state.block.n;
    CenterFields c{Field(n, 0), Field(n, 0), Field(n, 0), Field(n, 0)};
    for_interior(c.u, [&](int i, int j, int k) {
        c.u(i, j, k) = 0.5 * (state.u()(i, j, k) + state.u()(i + 1, j, k));
        c.v(i, j, k) = 0.5 * (state.v()(i, j, k) + state.v()(i, j + 1, k));
        c.w(i, j, k) = 0.5 * (state.w()(i, j, k) + state.w()(i, j, k + 1));
        c.p(i, j, k) = state.p(i, j, k);
    });
    return c;
}

PackedState pack_interior(const FlowState& state)
{
    PackedState out;
    out.t = state.t;
    const std::size_t cells = state.p.interior_size();
    out.values.reserve(4 * cells);
    auto push = [&](const Field& f) {
        for_interior(f, [&](int i, int j, int k) { out.values.push_back(f(i, j, k)); });
    };
    for (const auto& f : state.vel)
        push(f);
    push(state.p);
    return out;
}

void unpack_interior(const PackedState& packed, FlowState& state)
{
    const std::size_t cells = state.p.interior_size();
    if (packed.values.size() != 4 * cells)
        throw std::invalid_argument("packed state size does not match the block");
    std::size_t idx = 0;
    auto pull = [&](Field& f) {
        for_interior(f, [&](int i, int j, int k) { f(i, j, k) = packed.values[idx++]; });
    };
    for (auto& f : state.vel)
        pull(f);
    pull(state.p);
    state.t = packed.t;
}

double max_abs_velocity(const FlowState& state)
{
    double m = 0.0;
    for (const auto& f : state.vel) {
        for (int k = 0; k < f.n(2); ++k)
            for (int j = 0; j < f.n(1); ++j) {
                const double* row = f.data() + f.offset(0, j, k);
                for (int i = 0; i < f.n(0); ++i) {
                    const double a = std::abs(row[i]);
                    if (!std::isfinite(a))
                        return std::numeric_limits<double>::quiet_NaN();
                    m = std::max(m, a);
                }
            }
    }
    return m;
}

} // namespace stns

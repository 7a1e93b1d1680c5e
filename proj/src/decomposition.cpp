#include "stns/decomposition.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace stns {

std::vector<Index3> factorizations(int P)
{
    if (P < 1)
        throw std::invalid_argument("worker count must be at least 1");
    std::vector<Index3> out;
    for (int px = 1; px <= P; ++px) {
        if (P % px != 0)
            continue;
        const int rest = P / px;
        for (int py = 1; py <= rest; ++py)
            if (rest % py == 0)
                out.push_back({px, py, rest / py});
    }
    return out;
}

double comm_cost(const Index3& dims, const Index3& cells)
{
    const double a = static_cast<double>(cells[0]) / dims[0];
    const double b = static_cast<double>(cells[1]) / dims[1];
    const double c = static_cast<double>(cells[2]) / dims[2];
    return a * b + b * c + a * c;
}

bool feasible(const Index3& dims, const Index3& cells)
{
    for (int a = 0; a < 3; ++a)
        if (cells[a] / dims[a] < 3)
            return false;
    return true;
}

ProcessLayout select_decomposition(int P, const Index3& cells)
{
    bool found = false;
    Index3 best{};
    double best_cost = std::numeric_limits<double>::infinity();
    for (const auto& f : factorizations(P)) {
        if (!feasible(f, cells))
            continue;
        const double c = comm_cost(f, cells);
        bool take = !found;
        if (found) {
            const double tol = 1e-12 * std::max(std::abs(c), std::abs(best_cost));
            if (c < best_cost - tol)
                take = true;
            else if (std::abs(c - best_cost) <= tol)
                take = f[0] > best[0] || (f[0] == best[0] && f[1] > best[1]);
        }
        if (take) {
            found = true;
            best = f;
            best_cost = c;
        }
    }
    if (!found)
        throw std::invalid_argument("no decomposition of " + std::to_string(P) + " workers keeps 3 cells per axis on a " +
                                    std::to_string(cells[0]) + "x" + std::to_string(cells[1]) + "x" +
                                    std::to_string(cells[2]) + " grid");
    return ProcessLayout{P, best};
}

int layout_rank(const ProcessLayout& layout, const Index3& c) noexcept
{
    return c[0] + layout.dims[0] * (c[1] + layout.dims[1] * c[2]);
}

std::vector<int> split_axis(int N, int parts)
{
    std::vector<int> starts(static_cast<std::size_t>(parts) + 1, 0);
    const int base = N / parts;
    const int extra = N % parts;
    for (int r = 0; r < parts; ++r)
        starts[r + 1] = starts[r] + base + (r < extra ? 1 : 0);
    return starts;
}

std::vector<Subdomain> partition(const GridSpec& grid, const ProcessLayout& layout, const BoundarySpec& bc)
{
    grid.validate();
    const auto& d = layout.dims;
    if (d[0] * d[1] * d[2] != layout.P || d[0] < 1 || d[1] < 1 || d[2] < 1)
        throw std::invalid_argument("layout dims do not multiply to P");
    if (!feasible(d, grid.cells))
        throw std::invalid_argument("layout leaves a subdomain with fewer than 3 cells on some axis");

    std::array<std::vector<int>, 3> starts;
    for (int a = 0; a < 3; ++a)
        starts[a] = split_axis(grid.cells[a], d[a]);

    std::vector<Subdomain> out(static_cast<std::size_t>(layout.P));
    for (int pz = 0; pz < d[2]; ++pz)
        for (int py = 0; py < d[1]; ++py)
            for (int px = 0; px < d[0]; ++px) {
                const Index3 c = {px, py, pz};
                Subdomain s;
                s.rank = layout_rank(layout, c);
                s.coords = c;
                for (int a = 0; a < 3; ++a) {
                    s.block.lo[a] = starts[a][c[a]];
                    s.block.n[a] = starts[a][c[a] + 1] - starts[a][c[a]];
                    for (int side = 0; side < 2; ++side) {
                        Index3 nc = c;
                        nc[a] += side == 0 ? -1 : 1;
                        if (nc[a] < 0 || nc[a] >= d[a]) {
                            if (!bc.periodic(a)) {
                                s.neighbor[a][side] = -1;
                                continue;
                            }
                            nc[a] = (nc[a] + d[a]) % d[a];
                        }
                        s.neighbor[a][side] = layout_rank(layout, nc);
                    }
                }
                out[static_cast<std::size_t>(s.rank)] = s;
            }
    return out;
}

Domain make_domain(const GridSpec& grid, const BoundarySpec& bc, const CellFlags& flags, const Subdomain& sub)
{
    return Domain(grid, bc, flags, sub.block, sub.neighbor, sub.rank);
}

double global_reduce(std::span<const double> partials, ReduceOp op)
{
    if (partials.empty())
        throw std::invalid_argument("global_reduce: missing contributions");
    double acc = partials[0];
    for (std::size_t r = 1; r < partials.size(); ++r)
        acc = op == ReduceOp::Sum ? acc + partials[r] : std::max(acc, partials[r]);
    return acc;
}

// ---------------------------------------------------------------------------

namespace {

constexpr int kTagVelocityHalo = 100;
constexpr int kTagPressureHalo = 120;
constexpr int kTagGather = 300;

// Visits layers [q0, q0 + width) along `axis`, full ghost-inclusive extent of
// the other axes, in a fixed order shared by sender and receiver.
template <typename Fn>
void for_slab(const Field& f, int axis, int q0, int width, Fn&& fn)
{
    const int g = f.ghost();
    const int a1 = (axis + 1) % 3;
    const int a2 = (axis + 2) % 3;
    const auto s = f.stride(axis);
    for (int q2 = -g; q2 < f.n(a2) + g; ++q2)
        for (int q1 = -g; q1 < f.n(a1) + g; ++q1) {
            Index3 idx{};
            idx[a1] = q1;
            idx[a2] = q2;
            const auto base = f.offset(idx[0], idx[1], idx[2]);
            for (int q = q0; q < q0 + width; ++q)
                fn(base + q * s);
        }
}

void exchange_axis(std::span<Field* const> fields, const Domain& domain, CommGroup& space, int axis, int tag_base)
{
    const SideLink& lo = domain.link(axis, 0);
    const SideLink& hi = domain.link(axis, 1);
    if (lo.kind != LinkKind::Neighbor && hi.kind != LinkKind::Neighbor)
        return;

    auto pack = [&](int side) {
        std::vector<double> buf;
        for (Field* f : fields) {
            const int g = f->ghost();
            const int q0 = side == 0 ? 0 : f->n(axis) - g;
            const double* d = f->data();
            for_slab(*f, axis, q0, g, [&](std::ptrdiff_t off) { buf.push_back(d[off]); });
        }
        return buf;
    };
    auto unpack = [&](int side, const std::vector<double>& buf, int from) {
        std::size_t pos = 0;
        for (Field* f : fields) {
            const int g = f->ghost();
            const int q0 = side == 0 ? -g : f->n(axis);
            double* d = f->data();
            for_slab(*f, axis, q0, g, [&](std::ptrdiff_t off) {
                if (pos < buf.size())
                    d[off] = buf[pos];
                ++pos;
            });
        }
        if (pos != buf.size())
            throw std::runtime_error("halo message size mismatch on axis " + std::to_string(axis) + ": rank " +
                                     std::to_string(domain.rank()) + " expected " + std::to_string(pos) +
                                     " values from rank " + std::to_string(from) + ", got " +
                                     std::to_string(buf.size()));
    };

    // Tag suffix 0 fills the receiver's high ghosts, 1 its low ghosts.
    if (lo.kind == LinkKind::Neighbor)
        space.send(lo.rank, tag_base + 2 * axis + 0, pack(0));
    if (hi.kind == LinkKind::Neighbor)
        space.send(hi.rank, tag_base + 2 * axis + 1, pack(1));
    if (lo.kind == LinkKind::Neighbor)
        unpack(0, space.recv(lo.rank, tag_base + 2 * axis + 1), lo.rank);
    if (hi.kind == LinkKind::Neighbor)
        unpack(1, space.recv(hi.rank, tag_base + 2 * axis + 0), hi.rank);
}

void zero_inactive_faces(FlowState& state, const Domain& domain)
{
    for (int c = 0; c < 3; ++c) {
        auto& f = state.vel[c];
        const auto& act = domain.active(c);
        for_interior(f, [&](int i, int j, int k) {
            if (!act(i, j, k))
                f(i, j, k) = 0.0;
        });
    }
}

} // namespace

void exchange_velocity_halos(FlowState& state, const Domain& domain, CommGroup& space)
{
    Field* fields[] = {&state.vel[0], &state.vel[1], &state.vel[2]};
    for (int axis = 0; axis < 3; ++axis)
        exchange_axis(fields, domain, space, axis, kTagVelocityHalo);
}

void exchange_pressure_halos(Field& p, const Domain& domain, CommGroup& space)
{
    Field* fields[] = {&p};
    for (int axis = 0; axis < 3; ++axis)
        exchange_axis(fields, domain, space, axis, kTagPressureHalo);
}

void refresh_velocity_ghosts(FlowState& state, const Domain& domain, CommGroup& space)
{
    zero_inactive_faces(state, domain);
    Field* vel[] = {&state.vel[0], &state.vel[1], &state.vel[2]};
    Field* pres[] = {&state.p};
    for (int axis = 0; axis < 3; ++axis) {
        exchange_axis(vel, domain, space, axis, kTagVelocityHalo);
        exchange_axis(pres, domain, space, axis, kTagPressureHalo);
        apply_boundary_conditions_axis(state, domain, axis);
    }
}

void refresh_pressure_ghosts(Field& p, const Domain& domain, CommGroup& space)
{
    Field* fields[] = {&p};
    for (int axis = 0; axis < 3; ++axis) {
        exchange_axis(fields, domain, space, axis, kTagPressureHalo);
        apply_pressure_bc_axis(p, domain, axis);
    }
}

FlowState extract_block(const FlowState& global, const Block& block)
{
    FlowState s;
    s.block = block;
    for (auto& f : s.vel)
        f = Field(block.n, kVelocityGhost, 0.0);
    s.p = Field(block.n, kPressureGhost, 0.0);
    s.t = global.t;
    const auto& lo = block.lo;
    for_interior(s.p, [&](int i, int j, int k) {
        const int gi = lo[0] + i - global.block.lo[0];
        const int gj = lo[1] + j - global.block.lo[1];
        const int gk = lo[2] + k - global.block.lo[2];
        for (int c = 0; c < 3; ++c)
            s.vel[c](i, j, k) = global.vel[c](gi, gj, gk);
        s.p(i, j, k) = global.p(gi, gj, gk);
    });
    return s;
}

FlowState gather_state(const FlowState& local, const std::vector<Subdomain>& subs, CommGroup& space)
{
    if (static_cast<int>(subs.size()) != space.size())
        throw std::invalid_argument("gather: subdomain list does not match the spatial group");
    if (space.rank() != 0) {
        PackedState packed = pack_interior(local);
        packed.values.push_back(packed.t);
        space.send(0, kTagGather, std::move(packed.values));
        return FlowState{};
    }
    Index3 cells{};
    for (const auto& s : subs)
        for (int a = 0; a < 3; ++a)
            cells[a] = std::max(cells[a], s.block.lo[a] + s.block.n[a]);
    FlowState global;
    global.block = Block{{0, 0, 0}, cells};
    for (auto& f : global.vel)
        f = Field(cells, kVelocityGhost, 0.0);
    global.p = Field(cells, kPressureGhost, 0.0);
    global.t = local.t;

    auto place = [&](const FlowState& part) {
        const auto& lo = part.block.lo;
        for_interior(part.p, [&](int i, int j, int k) {
            for (int c = 0; c < 3; ++c)
                global.vel[c](lo[0] + i, lo[1] + j, lo[2] + k) = part.vel[c](i, j, k);
            global.p(lo[0] + i, lo[1] + j, lo[2] + k) = part.p(i, j, k);
        });
    };
    place(local);
    for (int r = 1; r < space.size(); ++r) {
        auto values = space.recv(r, kTagGather);
        FlowState part;
        part.block = subs[static_cast<std::size_t>(r)].block;
        for (auto& f : part.vel)
            f = Field(part.block.n, kVelocityGhost, 0.0);
        part.p = Field(part.block.n, kPressureGhost, 0.0);
        if (values.empty())
            throw std::runtime_error("gather: empty message from rank " + std::to_string(r));
        PackedState packed;
        packed.t = values.back();
        values.pop_back();
        packed.values = std::move(values);
        unpack_interior(packed, part);
        place(part);
    }
    return global;
}

} // namespace stns

#pragma once

// Shared fixtures and hand-rolled generators for the test suites.

#include "stns/decomposition.hpp"
#include "stns/mesh.hpp"
#include "stns/stepper.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace stns::test {

class Gen {
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    double uniform(double lo = -1.0, double hi = 1.0)
    {
        return std::uniform_real_distribution<double>(lo, hi)(rng_);
    }
    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
    bool coin() { return integer(0, 1) == 1; }
    std::mt19937_64& engine() { return rng_; }

    BoundaryKind wall_kind()
    {
        const BoundaryKind k[3] = {BoundaryKind::NoSlip, BoundaryKind::Slip, BoundaryKind::MovingLid};
        return k[integer(0, 2)];
    }

    /// Random mix of periodic and wall axes; lids only on y-max.
    BoundarySpec boundary()
    {
        BoundarySpec bc;
        bc.lid_speed = uniform(0.5, 1.5);
        for (int a = 0; a < 3; ++a) {
            if (coin()) {
                bc.face[a] = {BoundaryKind::Periodic, BoundaryKind::Periodic};
                continue;
            }
            for (int s = 0; s < 2; ++s) {
                BoundaryKind k = wall_kind();
                if (k == BoundaryKind::MovingLid && !(a == 1 && s == 1))
                    k = BoundaryKind::NoSlip;
                bc.face[a][s] = k;
            }
        }
        return bc;
    }

    /// A few random boxes, each covering whole cells of the grid.
    std::vector<Box> boxes(const GridSpec& g, int count)
    {
        std::vector<Box> out;
        for (int b = 0; b < count; ++b) {
            Box box;
            for (int a = 0; a < 3; ++a) {
                const int lo = integer(0, g.cells[a] - 1);
                const int len = integer(1, std::min(2, g.cells[a] - lo));
                box.lo[a] = lo * g.h(a);
                box.hi[a] = (lo + len) * g.h(a);
            }
            out.push_back(box);
        }
        return out;
    }

private:
    std::mt19937_64 rng_;
};

/// Random values on every free face and fluid cell; everything else zero.
inline void randomize(FlowState& s, const Domain& d, Gen& gen, double amp = 1.0)
{
    for (auto& f : s.vel)
        f.fill(0.0);
    s.p.fill(0.0);
    for (int c = 0; c < 3; ++c)
        for_interior(s.vel[c], [&](int i, int j, int k) {
            if (d.active(c)(i, j, k))
                s.vel[c](i, j, k) = amp * gen.uniform();
        });
    for_interior(s.p, [&](int i, int j, int k) {
        if (d.fluid(i, j, k))
            s.p(i, j, k) = gen.uniform();
    });
}

/// Random whole-grid state expressed through global indices, so that any
/// block extracted from it carries the same values.
inline FlowState random_global(const Domain& whole, Gen& gen, double amp = 1.0)
{
    FlowState s = new_state(whole);
    randomize(s, whole, gen, amp);
    return s;
}

inline double max_abs_diff(const Field& a, const Field& b)
{
    double m = 0.0;
    for_interior(a, [&](int i, int j, int k) { m = std::max(m, std::abs(a(i, j, k) - b(i, j, k))); });
    return m;
}

inline double max_abs_diff(const FlowState& a, const FlowState& b)
{
    double m = max_abs_diff(a.p, b.p);
    for (int c = 0; c < 3; ++c)
        m = std::max(m, max_abs_diff(a.vel[c], b.vel[c]));
    return m;
}

/// Sim-1 geometry: 32 x 32 x 5 on [0,1] x [0,1] x [0,0.1].
inline GridSpec cavity_grid()
{
    return GridSpec{{32, 32, 5}, {1.0, 1.0, 0.1}};
}

} // namespace stns::test

#include "support.hpp"

#include <doctest.h>

using namespace stns;
using namespace stns::test;

namespace {

PropagatorSpec fine_spec(double dt = 0.001)
{
    PropagatorSpec ps;
    ps.dt = dt;
    ps.params.Re = 1000.0;
    return ps;
}

Domain sim1_domain(double lid = 1.0)
{
    const GridSpec g = cavity_grid();
    return Domain::whole(g, BoundarySpec::cavity(lid), CellFlags(g.cells));
}

} // namespace

TEST_CASE("zero state with resting walls stays zero")
{
    const Domain d = sim1_domain(0.0);
    FlowState s = new_state(d);
    CommGroup solo;
    const StepStats st = projection_step(s, fine_spec(), d, solo);
    for (const auto& f : s.vel)
        for (double x : f.raw())
            CHECK(x == 0.0);
    for (double x : s.p.raw())
        CHECK(x == 0.0);
    CHECK(s.t == 0.001);
    CHECK(st.max_div == 0.0);
    CHECK(st.max_speed == 0.0);
}

TEST_CASE("lid start-up: one fine step from rest")
{
    const Domain d = sim1_domain();
    const PropagatorSpec ps = fine_spec();
    FlowState s = new_state(d);
    CommGroup solo;
    refresh_velocity_ghosts(s, d, solo);

    // By hand: only the ghost above the top layer is nonzero (2 u_lid), so the
    // predictor adds dt / Re * 2 / hy^2 on the top u-faces and nothing else.
    const double hy = 1.0 / 32.0;
    const double expect = ps.dt / ps.params.Re * 2.0 / (hy * hy);
    CHECK(expect == doctest::Approx(0.002048).epsilon(1e-14));
    const FlowState ustar = tentative_velocity(s, ps.params, d, ps.dt);
    for (int k = 0; k < 5; ++k)
        for (int i = 1; i < 32; ++i) {
            CHECK(ustar.u()(i, 31, k) == doctest::Approx(expect).epsilon(1e-14));
            CHECK(ustar.u()(i, 30, k) == 0.0);
        }

    const StepStats st = projection_step(s, ps, d, solo);
    int positive = 0;
    for (int k = 0; k < 5; ++k)
        for (int i = 1; i < 32; ++i)
            positive += s.u()(i, 31, k) > 0.0;
    CHECK(positive == 31 * 5);
    CHECK(st.max_div <= 1e-8);
    CHECK(max_abs_divergence(s, d) <= 1e-8);
    CHECK(st.iterations > 0);
}

TEST_CASE("divergence after steps from random states")
{
    Gen gen(61);
    CommGroup solo;
    for (int trial = 0; trial < 4; ++trial) {
        const GridSpec g{{gen.integer(6, 12), gen.integer(6, 12), gen.integer(3, 8)}, {1, 1, 1}};
        const Domain d = Domain::whole(g, gen.boundary(), build_obstacle_flags(g, gen.boxes(g, 2)));
        FlowState s = random_global(d, gen, 0.1);
        PropagatorSpec ps = fine_spec(0.002);
        ps.params.Re = 100.0;
        for (int n = 0; n < 3; ++n) {
            const StepStats st = projection_step(s, ps, d, solo);
            CHECK(st.max_div <= 1e-8);
            CHECK(std::isfinite(st.max_speed));
        }
    }
}

TEST_CASE("step counts")
{
    CHECK(step_count(0.0, 0.01, 0.01) == 1);
    CHECK(step_count(0.0, 0.01, 0.001) == 10);
    CHECK(step_count(0.07, 0.08, 0.001) == 10);
    CHECK(step_count(0.0, 8.0, 0.001) == 8000);
    CHECK(step_count(0.3, 0.3, 0.01) == 0);
    CHECK_THROWS_AS(step_count(0.0, 0.0105, 0.001), std::invalid_argument);
    CHECK_THROWS_AS(step_count(0.0, 0.01, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(step_count(0.0, 0.01, -0.001), std::invalid_argument);
    CHECK_THROWS_AS(step_count(0.02, 0.01, 0.001), std::invalid_argument);
}

TEST_CASE("propagate")
{
    const Domain d = sim1_domain();
    CommGroup solo;
    FlowState s0 = new_state(d);
    refresh_velocity_ghosts(s0, d, solo);
    // Start from a developed state so the check is not trivial.
    s0 = propagate(s0, 0.0, 0.02, fine_spec(), d, solo);

    SUBCASE("empty interval is the identity")
    {
        CHECK(propagate(s0, 0.02, 0.02, fine_spec(), d, solo) == s0);
    }
    SUBCASE("one coarse step and ten fine steps over a slice")
    {
        RunStats coarse, fine;
        propagate(s0, 0.02, 0.03, fine_spec(0.01), d, solo, &coarse);
        const FlowState f = propagate(s0, 0.02, 0.03, fine_spec(0.001), d, solo, &fine);
        CHECK(coarse.steps == 1);
        CHECK(fine.steps == 10);
        CHECK(f.t == 0.03);
        CHECK(fine.max_div <= 1e-8);
    }
    SUBCASE("two halves compose bitwise")
    {
        const FlowState whole = propagate(s0, 0.02, 0.03, fine_spec(), d, solo);
        const FlowState half = propagate(s0, 0.02, 0.025, fine_spec(), d, solo);
        CHECK(half.t == 0.025);
        const FlowState both = propagate(half, 0.025, 0.03, fine_spec(), d, solo);
        CHECK(both == whole);
    }
    SUBCASE("repeat runs are bitwise identical")
    {
        CHECK(propagate(s0, 0.02, 0.025, fine_spec(), d, solo) == propagate(s0, 0.02, 0.025, fine_spec(), d, solo));
    }
    SUBCASE("invalid specs")
    {
        CHECK_THROWS_AS(propagate(s0, 0.02, 0.0255, fine_spec(), d, solo), std::invalid_argument);
        CHECK_THROWS_AS(propagate(s0, 0.02, 0.03, fine_spec(0.0), d, solo), std::invalid_argument);
        PropagatorSpec bad = fine_spec();
        bad.params.Re = -1.0;
        CHECK_THROWS_AS(propagate(s0, 0.02, 0.03, bad, d, solo), std::invalid_argument);
    }
}

TEST_CASE("decomposed steps match the single-domain steps")
{
    Gen gen(62);
    const GridSpec g{{12, 12, 8}, {1, 1, 1}};
    const BoundarySpec bc = BoundarySpec::cavity(1.0);
    const CellFlags flags = build_obstacle_flags(g, gen.boxes(g, 3));
    const Domain whole = Domain::whole(g, bc, flags);
    FlowState s0 = random_global(whole, gen, 0.2);
    CommGroup solo;
    PropagatorSpec ps = fine_spec(0.002);
    const FlowState ref = propagate(s0, 0.0, 0.01, ps, whole, solo);

    for (const Index3 dims : {Index3{2, 1, 1}, Index3{2, 2, 1}, Index3{1, 2, 2}}) {
        const ProcessLayout layout{dims[0] * dims[1] * dims[2], dims};
        const auto subs = partition(g, layout, bc);
        FlowState got;
        launch(layout.P, 1, [&](WorkerContext& ctx) {
            const auto& sub = subs[static_cast<std::size_t>(ctx.spatial.rank())];
            const Domain d = make_domain(g, bc, flags, sub);
            const FlowState local = propagate(extract_block(s0, sub.block), 0.0, 0.01, ps, d, ctx.spatial);
            FlowState all = gather_state(local, subs, ctx.spatial);
            if (ctx.spatial.rank() == 0)
                got = std::move(all);
        });
        CAPTURE(dims);
        CHECK(max_abs_diff(got, ref) == 0.0);
    }
}

TEST_CASE("blow-up aborts with a step failure")
{
    const Domain d = sim1_domain();
    CommGroup solo;
    FlowState s = new_state(d);
    s.u()(10, 10, 2) = 5e6;
    CHECK_THROWS_AS(projection_step(s, fine_spec(), d, solo), StepFailure);

    FlowState n = new_state(d);
    n.v()(4, 4, 1) = std::nan("");
    try {
        projection_step(n, fine_spec(), d, solo);
        FAIL("expected a step failure");
    } catch (const StepFailure& e) {
        CHECK(e.time() == 0.0);
    }
}

#include "support.hpp"

#include <doctest.h>

#include <atomic>
#include <mutex>
#include <set>
#include <thread>

using namespace stns;
using namespace stns::test;

TEST_CASE("topology examples")
{
    SUBCASE("(1,1)")
    {
        const auto t = build_topology(1, 1);
        REQUIRE(t.size() == 1);
        CHECK(t[0].spatial.members == std::vector<int>{0});
        CHECK(t[0].time.members == std::vector<int>{0});
    }
    SUBCASE("(4,2)")
    {
        const auto t = build_topology(4, 2);
        REQUIRE(t.size() == 8);
        const auto& w = t[static_cast<std::size_t>(worker_id({3, 1}, 4))];
        CHECK(w.coord == WorkerCoord{3, 1});
        CHECK(w.spatial.rank == 3);
        CHECK(w.time.rank == 1);
        CHECK(w.spatial.members == std::vector<int>{4, 5, 6, 7});
        CHECK(w.time.members == std::vector<int>{3, 7});
        std::set<std::vector<int>> spatial, time;
        for (const auto& x : t) {
            spatial.insert(x.spatial.members);
            time.insert(x.time.members);
        }
        CHECK(spatial.size() == 2);
        CHECK(time.size() == 4);
    }
    SUBCASE("(2,8)") { CHECK(build_topology(2, 8).size() == 16); }
    CHECK_THROWS_AS(build_topology(0, 2), std::invalid_argument);
    CHECK_THROWS_AS(build_topology(3, 0), std::invalid_argument);
}

TEST_CASE("topology invariants for random counts")
{
    Gen gen(51);
    for (int trial = 0; trial < 100; ++trial) {
        const int ns = gen.integer(1, 9), nt = gen.integer(1, 9);
        const auto t = build_topology(ns, nt);
        REQUIRE(t.size() == static_cast<std::size_t>(ns * nt));
        CHECK(t == build_topology(ns, nt)); // pure
        std::set<std::pair<int, int>> coords;
        for (std::size_t id = 0; id < t.size(); ++id) {
            const auto& w = t[id];
            CHECK(w.id == static_cast<int>(id));
            coords.insert({w.coord.space_rank, w.coord.time_rank});
            CHECK(w.spatial.kind == GroupKind::Spatial);
            CHECK(w.time.kind == GroupKind::Time);
            CHECK(w.spatial.members.size() == static_cast<std::size_t>(ns));
            CHECK(w.time.members.size() == static_cast<std::size_t>(nt));
            CHECK(w.spatial.members[static_cast<std::size_t>(w.spatial.rank)] == w.id);
            CHECK(w.time.members[static_cast<std::size_t>(w.time.rank)] == w.id);
            // Spatial peers share the time slice, time peers share the subdomain.
            for (int m : w.spatial.members)
                CHECK(t[static_cast<std::size_t>(m)].coord.time_rank == w.coord.time_rank);
            for (int m : w.time.members)
                CHECK(t[static_cast<std::size_t>(m)].coord.space_rank == w.coord.space_rank);
        }
        CHECK(coords.size() == t.size());
    }
}

TEST_CASE("state transfer inside a time group is bit exact")
{
    Gen gen(52);
    const GridSpec g{{7, 5, 4}, {1, 1, 1}};
    const Domain d = Domain::whole(g, BoundarySpec::cavity(1.0), CellFlags(g.cells));
    FlowState s = random_global(d, gen);
    for (auto& f : s.vel)
        for (auto& x : f.raw())
            x = gen.uniform(-1e300, 1e300);
    s.t = 0.1 + 0.2;
    FlowState got;
    launch(1, 2, [&](WorkerContext& ctx) {
        if (ctx.time.rank() == 0)
            send_state(ctx.time, 1, s);
        else
            got = recv_state(ctx.time, 0);
    });
    CHECK(got == s);

    SUBCASE("spatial groups cannot carry states")
    {
        bool threw = false;
        launch(2, 1, [&](WorkerContext& ctx) {
            try {
                send_state(ctx.spatial, 1 - ctx.spatial.rank(), s);
            } catch (const std::logic_error&) {
                if (ctx.spatial.rank() == 0)
                    threw = true;
            }
        });
        CHECK(threw);
    }
}

TEST_CASE("messages with one tag arrive in order; tags are matched")
{
    std::vector<double> seen;
    launch(2, 1, [&](WorkerContext& ctx) {
        auto& g = ctx.spatial;
        if (g.rank() == 0) {
            for (int i = 0; i < 50; ++i)
                g.send(1, 7, {double(i)});
            g.send(1, 8, {-1.0});
        } else {
            seen.push_back(g.recv(0, 8)[0]);
            for (int i = 0; i < 50; ++i)
                seen.push_back(g.recv(0, 7)[0]);
        }
    });
    REQUIRE(seen.size() == 51);
    CHECK(seen[0] == -1.0);
    for (int i = 0; i < 50; ++i)
        CHECK(seen[static_cast<std::size_t>(i + 1)] == i);
}

TEST_CASE("self and out-of-range ranks are rejected")
{
    std::atomic<int> rejected{0};
    launch(2, 1, [&](WorkerContext& ctx) {
        auto& g = ctx.spatial;
        try {
            g.send(g.rank(), 1, {});
        } catch (const std::invalid_argument&) {
            ++rejected;
        }
        try {
            g.recv(5, 1);
        } catch (const std::invalid_argument&) {
            ++rejected;
        }
    });
    CHECK(rejected == 4);
}

TEST_CASE("collectives give every member the same result")
{
    Gen gen(53);
    for (int ns : {2, 3, 5}) {
        std::vector<double> terms(200);
        for (auto& x : terms)
            x = gen.uniform(-1, 1) * std::pow(10.0, gen.integer(-8, 8));
        std::vector<double> sums(static_cast<std::size_t>(ns)), maxes(static_cast<std::size_t>(ns));
        std::atomic<int> dirty{0};
        launch(ns, 1, [&](WorkerContext& ctx) {
            const int r = ctx.spatial.rank();
            CompensatedSum local;
            double m = -1e300;
            for (std::size_t i = static_cast<std::size_t>(r); i < terms.size(); i += static_cast<std::size_t>(ns)) {
                local.add(terms[i]);
                m = std::max(m, terms[i]);
            }
            CompensatedSum s[1] = {local};
            ctx.spatial.allreduce_sum(s);
            sums[static_cast<std::size_t>(r)] = s[0].hi;
            if (s[0].lo != 0.0)
                ++dirty;
            maxes[static_cast<std::size_t>(r)] = ctx.spatial.allreduce_max(m);
        });
        CHECK(dirty == 0);
        long double exact = 0.0L;
        for (double x : terms)
            exact += x;
        const double ref = *std::max_element(terms.begin(), terms.end());
        for (int r = 0; r < ns; ++r) {
            CHECK(sums[static_cast<std::size_t>(r)] == sums[0]);
            CHECK(maxes[static_cast<std::size_t>(r)] == ref);
        }
        CHECK(std::abs(sums[0] - static_cast<double>(exact)) <= 4e-16 * std::abs(static_cast<double>(exact)) + 1e-22);
    }
}

TEST_CASE("max reduction propagates NaN")
{
    std::vector<double> out(3);
    launch(3, 1, [&](WorkerContext& ctx) {
        const double v = ctx.spatial.rank() == 2 ? std::nan("") : 1.0;
        out[static_cast<std::size_t>(ctx.spatial.rank())] = ctx.spatial.allreduce_max(v);
    });
    for (double x : out)
        CHECK(std::isnan(x));
}

TEST_CASE("compensated sums are nearly invariant to how terms are split")
{
    Gen gen(54);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> terms(static_cast<std::size_t>(gen.integer(1, 300)));
        for (auto& x : terms)
            x = gen.uniform() * std::pow(2.0, gen.integer(-30, 30));
        CompensatedSum whole;
        for (double x : terms)
            whole.add(x);
        const int parts = gen.integer(1, 8);
        std::vector<CompensatedSum> partial(static_cast<std::size_t>(parts));
        for (std::size_t i = 0; i < terms.size(); ++i)
            partial[static_cast<std::size_t>(gen.integer(0, parts - 1))].add(terms[i]);
        CompensatedSum merged = partial[0];
        for (int p = 1; p < parts; ++p)
            merged.merge(partial[static_cast<std::size_t>(p)]);
        double mag = 0.0;
        for (double x : terms)
            mag += std::abs(x);
        CHECK(std::abs(merged.value() - whole.value()) <= 2.3e-16 * std::abs(whole.value()) + 1e-30 * mag);
    }
}

TEST_CASE("launch reports the failing worker, not the aborts it caused")
{
    std::atomic<int> ran{0};
    auto body = [&](WorkerContext& ctx) {
        ++ran;
        if (ctx.topo.id == 3)
            throw std::domain_error("worker 3 failed");
        // Everyone else blocks on a message that never comes.
        ctx.time.recv(ctx.time.rank() == 0 ? 1 : 0, 9);
    };
    CHECK_THROWS_WITH_AS(launch(2, 2, body), "worker 3 failed", std::domain_error);
    CHECK(ran == 4);
}

TEST_CASE("single worker runs inline")
{
    std::thread::id where;
    launch(1, 1, [&](WorkerContext& ctx) {
        where = std::this_thread::get_id();
        CHECK(ctx.spatial.size() == 1);
        CHECK(ctx.time.size() == 1);
        CHECK(ctx.spatial.allreduce_sum(2.5) == 2.5);
        ctx.spatial.barrier();
    });
    CHECK((where == std::this_thread::get_id()));
    CHECK_THROWS_AS(launch(1, 1, [](WorkerContext&) { throw std::runtime_error("x"); }), std::runtime_error);
}

#include "support.hpp"

#include <Eigen/Dense>
#include <doctest.h>

using namespace stns;
using namespace stns::test;

namespace {

Domain box_domain(Index3 n, BoundarySpec bc, std::vector<Box> boxes = {}, std::array<double, 3> L = {1, 1, 1})
{
    const GridSpec g{n, L};
    return Domain::whole(g, bc, build_obstacle_flags(g, boxes));
}

LinearOperator laplacian(const Domain& d)
{
    return [&d](Field& x, Field& y) {
        for (int a = 0; a < 3; ++a)
            apply_pressure_bc_axis(x, d, a);
        apply_laplacian(static_cast<const Field&>(x), y, d);
    };
}

// Dense operator written from the stencil definition: every open leg to a
// fluid neighbor contributes (p_nb - p_c) / h^2; periodic legs wrap.
Eigen::MatrixXd dense_laplacian(const GridSpec& g, const BoundarySpec& bc, const CellFlags& f)
{
    const auto& N = g.cells;
    const int n = static_cast<int>(g.total_cells());
    auto idx = [&](int i, int j, int k) { return i + N[0] * (j + N[1] * k); };
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
    for (int k = 0; k < N[2]; ++k)
        for (int j = 0; j < N[1]; ++j)
            for (int i = 0; i < N[0]; ++i) {
                if (f(i, j, k) != CellTag::Fluid)
                    continue;
                const int c = idx(i, j, k);
                for (int a = 0; a < 3; ++a)
                    for (int s : {-1, 1}) {
                        Index3 q{i, j, k};
                        q[a] += s;
                        if (q[a] < 0 || q[a] >= N[a]) {
                            if (!bc.periodic(a))
                                continue;
                            q[a] = (q[a] + N[a]) % N[a];
                        }
                        if (f(q[0], q[1], q[2]) != CellTag::Fluid)
                            continue;
                        const double w = 1.0 / (g.h(a) * g.h(a));
                        A(c, c) -= w;
                        A(c, idx(q[0], q[1], q[2])) += w;
                    }
            }
    return A;
}

Eigen::VectorXd to_vector(const Field& f)
{
    Eigen::VectorXd v(static_cast<Eigen::Index>(f.interior_size()));
    Eigen::Index n = 0;
    for_interior(f, [&](int i, int j, int k) { v(n++) = f(i, j, k); });
    return v;
}

} // namespace

TEST_CASE("default iteration cap")
{
    CHECK(default_max_iterations(32 * 32 * 32) == 3200);
    CHECK(default_max_iterations(1000000) == 5000);
    CHECK(default_max_iterations(27) == 300);
}

TEST_CASE("property: constants are in the Laplacian nullspace")
{
    Gen gen(31);
    for (int trial = 0; trial < 20; ++trial) {
        const Index3 n{gen.integer(3, 8), gen.integer(3, 8), gen.integer(3, 8)};
        const GridSpec g{n, {gen.uniform(0.5, 2), gen.uniform(0.5, 2), gen.uniform(0.5, 2)}};
        const Domain d = Domain::whole(g, gen.boundary(), build_obstacle_flags(g, gen.boxes(g, 3)));
        Field p(n, 1, gen.uniform(-10, 10)), out(n, 1, 0.0);
        for (int a = 0; a < 3; ++a)
            apply_pressure_bc_axis(p, d, a);
        apply_laplacian(static_cast<const Field&>(p), out, d);
        double m = 0.0;
        for_interior(out, [&](int i, int j, int k) { m = std::max(m, std::abs(out(i, j, k))); });
        CHECK(m <= 1e-14);
    }
}

TEST_CASE("Laplacian of x^2 with unit spacing")
{
    const Domain d = box_domain({8, 4, 4}, BoundarySpec::cavity(0.0), {}, {8, 4, 4});
    Field p({8, 4, 4}, 1, 0.0), out({8, 4, 4}, 1, 0.0);
    for_interior(p, [&](int i, int j, int k) { p(i, j, k) = (i + 0.5) * (i + 0.5); });
    for (int a = 0; a < 3; ++a)
        apply_pressure_bc_axis(p, d, a);
    apply_laplacian(static_cast<const Field&>(p), out, d);
    for (int k = 0; k < 4; ++k)
        for (int j = 0; j < 4; ++j)
            for (int i = 1; i < 7; ++i)
                CHECK(out(i, j, k) == 2.0);
}

void check_probed(const GridSpec& g, const BoundarySpec& bc, const std::vector<Box>& boxes)
{
    const CellFlags f = build_obstacle_flags(g, boxes);
    const Domain d = Domain::whole(g, bc, f);
    const int n = static_cast<int>(g.total_cells());
    Eigen::MatrixXd M(n, n);
    const LinearOperator A = laplacian(d);
    for (int col = 0; col < n; ++col) {
        Field e(g.cells, 1, 0.0), y(g.cells, 1, 0.0);
        e.raw()[static_cast<std::size_t>(e.offset(col % g.cells[0], (col / g.cells[0]) % g.cells[1],
                                                  col / (g.cells[0] * g.cells[1])))] = 1.0;
        A(e, y);
        M.col(col) = to_vector(y);
    }
    CHECK((M - M.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((M - dense_laplacian(g, bc, f)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("probed Laplacian on a 4^3 periodic box is symmetric")
{
    check_probed(GridSpec{{4, 4, 4}, {1, 1, 1}}, BoundarySpec::all_periodic(), {});
}

TEST_CASE("probed Laplacian with walls and an obstacle is symmetric")
{
    const GridSpec g{{5, 4, 4}, {1, 1, 1}};
    check_probed(g, BoundarySpec::cavity(1.0), {Box{{0.2, 0.25, 0.25}, {0.6, 0.5, 0.5}}});
}

TEST_CASE("BiCGStab with the identity converges in one iteration")
{
    const Index3 n{4, 3, 2 + 1};
    Gen gen(32);
    Field b(n, 1, 0.0), x(n, 1, 0.0);
    for_interior(b, [&](int i, int j, int k) { b(i, j, k) = gen.uniform(); });
    const LinearOperator I = [](Field& in, Field& out) { out = in; };
    const SolveStats st = bicgstab(I, b, x, SolverSettings{}, Reducer{});
    CHECK(st.converged);
    CHECK(st.iterations == 1);
    CHECK(max_abs_diff(x, b) <= 1e-15);
}

TEST_CASE("BiCGStab on 1D Dirichlet Poisson matches a dense LU solve")
{
    const int N = 8;
    const Index3 n{N, 1, 1};
    // Tridiagonal (1, -2, 1) with zero Dirichlet values beyond both ends.
    const LinearOperator A = [](Field& in, Field& out) {
        for (int i = 0; i < N; ++i) {
            const double l = i > 0 ? in(i - 1, 0, 0) : 0.0;
            const double r = i < N - 1 ? in(i + 1, 0, 0) : 0.0;
            out(i, 0, 0) = l - 2.0 * in(i, 0, 0) + r;
        }
    };
    Field b(n, 1, 0.0), x(n, 1, 0.0);
    b(3, 0, 0) = 1.0;
    const SolveStats st = bicgstab(A, b, x, SolverSettings{1e-14, 1e-15, 100}, Reducer{});
    CHECK(st.converged);

    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(N, N);
    for (int i = 0; i < N; ++i) {
        M(i, i) = -2.0;
        if (i > 0) M(i, i - 1) = 1.0;
        if (i < N - 1) M(i, i + 1) = 1.0;
    }
    Eigen::VectorXd e = Eigen::VectorXd::Zero(N);
    e(3) = 1.0;
    const Eigen::VectorXd ref = M.partialPivLu().solve(e);
    for (int i = 0; i < N; ++i)
        CHECK(std::abs(x(i, 0, 0) - ref(i)) <= 1e-12);
}

TEST_CASE("singular all-Neumann problem matches the pseudoinverse solution")
{
    const GridSpec g{{4, 4, 4}, {1, 1, 1}};
    BoundarySpec bc = BoundarySpec::cavity(0.0);
    bc.face[2] = {BoundaryKind::NoSlip, BoundaryKind::NoSlip};
    const CellFlags f(g.cells);
    const Domain d = Domain::whole(g, bc, f);
    Gen gen(33);
    PoissonProblem prob;
    prob.rhs = Field(g.cells, 1, 0.0);
    for_interior(prob.rhs, [&](int i, int j, int k) { prob.rhs(i, j, k) = gen.uniform(); });
    remove_mean(prob.rhs, d, Reducer{});
    Field p(g.cells, 1, 0.0);
    CommGroup solo;
    const SolveStats st = solve_pressure(prob, p, d, solo);
    CHECK(st.converged);

    const Eigen::MatrixXd M = dense_laplacian(g, bc, f);
    const Eigen::VectorXd ref = M.completeOrthogonalDecomposition().solve(to_vector(prob.rhs));
    const Eigen::VectorXd got = to_vector(p);
    CHECK(std::abs(got.mean()) <= 1e-14);
    CHECK((got - ref).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("reported residual matches a fresh operator application")
{
    Gen gen(34);
    const GridSpec g{{8, 8, 6}, {1, 1, 1}};
    const Domain d = Domain::whole(g, BoundarySpec::cavity(1.0), build_obstacle_flags(g, gen.boxes(g, 2)));
    Field b(g.cells, 1, 0.0), x(g.cells, 1, 0.0), y(g.cells, 1, 0.0);
    for_interior(b, [&](int i, int j, int k) {
        if (d.fluid(i, j, k))
            b(i, j, k) = gen.uniform();
    });
    remove_mean(b, d, Reducer{});
    const LinearOperator A = laplacian(d);
    const SolveStats st = bicgstab(A, b, x, SolverSettings{}, Reducer{});
    CHECK(st.converged);
    A(x, y);
    double r2 = 0.0, b2 = 0.0;
    for_interior(b, [&](int i, int j, int k) {
        r2 += (b(i, j, k) - y(i, j, k)) * (b(i, j, k) - y(i, j, k));
        b2 += b(i, j, k) * b(i, j, k);
    });
    CHECK(std::abs(std::sqrt(r2) - st.residual) <= 1e-13 * std::sqrt(b2));
    CHECK(st.residual <= std::max(1e-10 * st.rhs_norm, 1e-12));

    SUBCASE("solves are bitwise reproducible")
    {
        Field x2(g.cells, 1, 0.0);
        const SolveStats st2 = bicgstab(A, b, x2, SolverSettings{}, Reducer{});
        CHECK(x2 == x);
        CHECK(st2.iterations == st.iterations);
    }
}

TEST_CASE("breakdown is flagged")
{
    // A 90-degree rotation makes (r, A r) vanish in the first iteration.
    const Index3 n{2, 1, 1};
    const LinearOperator R = [](Field& in, Field& out) {
        out(0, 0, 0) = in(1, 0, 0);
        out(1, 0, 0) = -in(0, 0, 0);
    };
    Field b(n, 1, 0.0), x(n, 1, 0.0);
    b(0, 0, 0) = 1.0;
    b(1, 0, 0) = 2.0;
    const SolveStats st = bicgstab(R, b, x, SolverSettings{}, Reducer{});
    CHECK(st.breakdown);
    CHECK_FALSE(st.converged);
}

TEST_CASE("remove_mean")
{
    const GridSpec g{{6, 6, 6}, {1, 1, 1}};
    SUBCASE("constant field becomes zero")
    {
        const Domain d = Domain::whole(g, BoundarySpec::all_periodic(), CellFlags(g.cells));
        Field p(g.cells, 1, 5.0);
        remove_mean(p, d, Reducer{});
        for_interior(p, [&](int i, int j, int k) { CHECK(p(i, j, k) == 0.0); });
    }
    SUBCASE("zero-mean input is unchanged")
    {
        const Domain d = Domain::whole(g, BoundarySpec::all_periodic(), CellFlags(g.cells));
        Field p(g.cells, 1, 0.0);
        for_interior(p, [&](int i, int j, int k) { p(i, j, k) = (i + j + k) % 2 ? 1.0 : -1.0; });
        const Field before = p;
        remove_mean(p, d, Reducer{});
        CHECK(max_abs_diff(p, before) <= 1e-15);
    }
    SUBCASE("only fluid cells count")
    {
        Gen gen(35);
        const Domain d = Domain::whole(g, BoundarySpec::all_periodic(),
                                       build_obstacle_flags(g, std::vector<Box>{Box{{0, 0, 0}, {0.5, 0.5, 0.5}}}));
        Field p(g.cells, 1, 0.0);
        for_interior(p, [&](int i, int j, int k) { p(i, j, k) = gen.uniform(0, 10); });
        long double sum = 0.0L;
        long count = 0;
        for_interior(p, [&](int i, int j, int k) {
            if (d.fluid(i, j, k)) {
                sum += p(i, j, k);
                ++count;
            }
        });
        CHECK(count == 216 - 27);
        const double mean = static_cast<double>(sum / count);
        const Field before = p;
        remove_mean(p, d, Reducer{});
        for_interior(p, [&](int i, int j, int k) {
            if (d.fluid(i, j, k))
                CHECK(p(i, j, k) == doctest::Approx(before(i, j, k) - mean).epsilon(1e-13));
            else
                CHECK(p(i, j, k) == before(i, j, k));
        });
    }
    SUBCASE("no fluid cells")
    {
        const Domain d = Domain::whole(g, BoundarySpec::all_periodic(),
                                       build_obstacle_flags(g, std::vector<Box>{Box{{0, 0, 0}, {1, 1, 1}}}));
        Field p(g.cells, 1, 1.0);
        CHECK_THROWS_AS(remove_mean(p, d, Reducer{}), std::invalid_argument);
    }
}

TEST_CASE("Poisson right-hand side is compatible")
{
    Gen gen(36);
    const GridSpec g{{8, 7, 5}, {1, 1, 1}};
    const Domain d = Domain::whole(g, BoundarySpec::cavity(1.0), build_obstacle_flags(g, gen.boxes(g, 2)));
    FlowState s = new_state(d);
    randomize(s, d, gen);
    apply_boundary_conditions(s, d);
    const PoissonProblem prob = assemble_poisson(s, 0.01, d, Reducer{}, SolverSettings{});
    const Field div = discrete_divergence(s, d);
    double sum = 0.0, mean = 0.0;
    long fluid = 0;
    for_interior(div, [&](int i, int j, int k) {
        if (d.fluid(i, j, k)) {
            mean += div(i, j, k) / 0.01;
            ++fluid;
        }
    });
    mean /= fluid;
    for_interior(div, [&](int i, int j, int k) {
        if (d.fluid(i, j, k)) {
            sum += prob.rhs(i, j, k);
            CHECK(prob.rhs(i, j, k) == doctest::Approx(div(i, j, k) / 0.01 - mean).epsilon(1e-12));
        } else {
            CHECK(prob.rhs(i, j, k) == 0.0);
        }
    });
    CHECK(std::abs(sum) <= 1e-10);
}

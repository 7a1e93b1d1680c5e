#include "stns/pressure_solver.hpp"

#include "stns/decomposition.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace stns {

int default_max_iterations(long long global_cells)
{
    // cbrt is not exact for perfect cubes; shave the rounding before ceil.
    const double n = 100.0 * std::cbrt(static_cast<double>(global_cells));
    return static_cast<int>(std::min(5000.0, std::ceil(n * (1.0 - 1e-14))));
}

void Reducer::sum(std::span<CompensatedSum> values) const
{
    if (group_)
        group_->allreduce_sum(values);
    else
        for (auto& v : values)
            v = {v.value(), 0.0};
}

double Reducer::sum(double local) const
{
    CompensatedSum s{local, 0.0};
    sum(std::span<CompensatedSum>(&s, 1));
    return s.hi;
}

double Reducer::max(double local) const
{
    return group_ ? group_->allreduce_max(local) : local;
}

namespace {

// Calls fn(row_offset, length) for each interior x-row of `f`.
template <typename Fn>
void for_rows(const Field& f, Fn&& fn)
{
    for (int k = 0; k < f.n(2); ++k)
        for (int j = 0; j < f.n(1); ++j)
            fn(f.offset(0, j, k), f.n(0));
}

void require_same(const Field& a, const Field& b)
{
    if (!a.same_shape(b))
        throw std::invalid_argument("Krylov vectors must share one shape");
}

// Four interleaved double-double lanes break the dependency chain of a
// single accumulator; the merged result keeps its accuracy.
struct LaneSum {
    CompensatedSum lane[4];

    CompensatedSum total() const
    {
        CompensatedSum s = lane[0];
        for (int l = 1; l < 4; ++l)
            s.merge(lane[l]);
        return s;
    }
};

inline void accumulate(LaneSum& acc, const double* a, const double* b, int len)
{
    int i = 0;
    for (; i + 4 <= len; i += 4)
        for (int l = 0; l < 4; ++l)
            acc.lane[l].add(a[i + l] * b[i + l]);
    for (; i < len; ++i)
        acc.lane[0].add(a[i] * b[i]);
}

double dot(const Field& a, const Field& b, const Reducer& reduce)
{
    LaneSum acc;
    const double* pa = a.data();
    const double* pb = b.data();
    for_rows(a, [&](std::ptrdiff_t o, int len) { accumulate(acc, pa + o, pb + o, len); });
    CompensatedSum s = acc.total();
    reduce.sum(std::span<CompensatedSum>(&s, 1));
    return s.hi;
}

std::array<double, 2> dot2(const Field& a, const Field& b, const Field& c, const Field& d, const Reducer& reduce)
{
    LaneSum acc[2];
    const double *pa = a.data(), *pb = b.data(), *pc = c.data(), *pd = d.data();
    for_rows(a, [&](std::ptrdiff_t o, int len) {
        accumulate(acc[0], pa + o, pb + o, len);
        accumulate(acc[1], pc + o, pd + o, len);
    });
    CompensatedSum s[2] = {acc[0].total(), acc[1].total()};
    reduce.sum(s);
    return {s[0].hi, s[1].hi};
}

// y = a * x + b * y over the interior (ghosts untouched).
void axpby(double a, const Field& x, double b, Field& y)
{
    const double* px = x.data();
    double* py = y.data();
    for_rows(x, [&](std::ptrdiff_t o, int len) {
        for (int i = 0; i < len; ++i)
            py[o + i] = a * px[o + i] + b * py[o + i];
    });
}

// Elementwise kernel over the interior: fn(offset).
template <typename Fn>
void for_each_cell(const Field& shape, Fn&& fn)
{
    for_rows(shape, [&](std::ptrdiff_t o, int len) {
        for (std::ptrdiff_t i = o; i < o + len; ++i)
            fn(i);
    });
}

} // namespace

void apply_laplacian(const Field& p, Field& out, const Domain& domain)
{
    if (p.n(0) != out.n(0) || p.n(1) != out.n(1) || p.n(2) != out.n(2) || p.ghost() < 1)
        throw std::invalid_argument("laplacian operands do not match");
    const double ih2[3] = {1.0 / (domain.h(0) * domain.h(0)), 1.0 / (domain.h(1) * domain.h(1)),
                           1.0 / (domain.h(2) * domain.h(2))};
    const auto& legs = domain.legs();
    const double* x = p.data();
    double* y = out.data();
    const auto sy = p.stride(1), sz = p.stride(2);
    for (int k = 0; k < p.n(2); ++k)
        for (int j = 0; j < p.n(1); ++j) {
            const auto o = p.offset(0, j, k);
            const auto oo = out.offset(0, j, k);
            const std::uint8_t* m = legs.data() + legs.offset(0, j, k);
            for (int i = 0; i < p.n(0); ++i) {
                const std::uint8_t bits = m[i];
                const auto c = o + i;
                const double pc = x[c];
                if (bits == 63u) {
                    y[oo + i] = (x[c - 1] + x[c + 1] - 2.0 * pc) * ih2[0] + (x[c - sy] + x[c + sy] - 2.0 * pc) * ih2[1] +
                                (x[c - sz] + x[c + sz] - 2.0 * pc) * ih2[2];
                    continue;
                }
                double acc = 0.0;
                if (bits & 1u) acc += (x[c - 1] - pc) * ih2[0];
                if (bits & 2u) acc += (x[c + 1] - pc) * ih2[0];
                if (bits & 4u) acc += (x[c - sy] - pc) * ih2[1];
                if (bits & 8u) acc += (x[c + sy] - pc) * ih2[1];
                if (bits & 16u) acc += (x[c - sz] - pc) * ih2[2];
                if (bits & 32u) acc += (x[c + sz] - pc) * ih2[2];
                y[oo + i] = acc;
            }
        }
}

void apply_laplacian(Field& p, Field& out, const Domain& domain, CommGroup& space)
{
    refresh_pressure_ghosts(p, domain, space);
    apply_laplacian(static_cast<const Field&>(p), out, domain);
}

SolveStats bicgstab(const LinearOperator& A, const Field& rhs, Field& x, const SolverSettings& settings,
                    const Reducer& reduce)
{
    require_same(rhs, x);
    const int max_iter = settings.max_iter > 0
                             ? settings.max_iter
                             : default_max_iterations(static_cast<long long>(reduce.sum(
                                   static_cast<double>(x.interior_size()))));

    Field r(x.interior(), x.ghost()), rhat = r, p = r, v = r, s = r, t = r;
    SolveStats st;
    st.rhs_norm = std::sqrt(dot(rhs, rhs, reduce));
    const double target = std::max(settings.tol_rel * st.rhs_norm, settings.tol_abs);

    auto true_residual = [&] {
        A(x, t);
        r = rhs;
        axpby(-1.0, t, 1.0, r);
        return std::sqrt(dot(r, r, reduce));
    };

    double rnorm = true_residual();
    st.residual = rnorm;
    if (rnorm <= target) {
        st.converged = true;
        return st;
    }

    int it = 0;
    while (it < max_iter) {
        // (Re)start the recurrence from the current true residual.
        rhat = r;
        double rho_old = 1.0, alpha = 1.0, omega = 1.0;
        bool fresh = true;
        bool stalled = false;
        const double rhat_norm = rnorm;
        while (it < max_iter) {
            ++it;
            const double rho = dot(rhat, r, reduce);
            if (!std::isfinite(rho) || std::abs(rho) <= 1e-30 * rhat_norm * rnorm) {
                st.breakdown = true;
                break;
            }
            if (fresh) {
                p = r;
                fresh = false;
            } else {
                const double beta = (rho / rho_old) * (alpha / omega);
                double* pp = p.data();
                const double *pr = r.data(), *pv = v.data();
                for_each_cell(p, [&](std::ptrdiff_t i) { pp[i] = pr[i] + beta * (pp[i] - omega * pv[i]); });
            }
            A(p, v);
            const double rv = dot(rhat, v, reduce);
            if (rv == 0.0 || !std::isfinite(rv)) {
                st.breakdown = true;
                break;
            }
            alpha = rho / rv;
            {
                double* ps = s.data();
                const double *pr = r.data(), *pv = v.data();
                for_each_cell(s, [&](std::ptrdiff_t i) { ps[i] = pr[i] - alpha * pv[i]; });
            }
            const double snorm = std::sqrt(dot(s, s, reduce));
            if (snorm <= target) {
                axpby(alpha, p, 1.0, x);
                stalled = true;
                break;
            }
            A(s, t);
            const auto [ts, tt] = dot2(t, s, t, t, reduce);
            if (tt == 0.0 || !std::isfinite(tt)) {
                st.breakdown = true;
                break;
            }
            omega = ts / tt;
            {
                double *px = x.data(), *pr = r.data();
                const double *pp = p.data(), *ps = s.data(), *pt = t.data();
                for_each_cell(x, [&](std::ptrdiff_t i) {
                    px[i] += alpha * pp[i] + omega * ps[i];
                    pr[i] = ps[i] - omega * pt[i];
                });
            }
            rnorm = std::sqrt(dot(r, r, reduce));
            if (rnorm <= target) {
                stalled = true;
                break;
            }
            if (omega == 0.0) {
                st.breakdown = true;
                break;
            }
            rho_old = rho;
        }
        rnorm = true_residual();
        st.residual = rnorm;
        st.iterations = it;
        if (rnorm <= target) {
            st.converged = true;
            st.breakdown = false;
            return st;
        }
        if (st.breakdown || !stalled)
            return st;
        // Recurrence claimed convergence but the true residual disagrees.
    }
    st.iterations = it;
    return st;
}

void remove_mean(Field& p, const Domain& domain, const Reducer& reduce)
{
    CompensatedSum sums[2];
    for_interior(p, [&](int i, int j, int k) {
        if (domain.fluid(i, j, k)) {
            sums[0].add(p(i, j, k));
            sums[1].add(1.0);
        }
    });
    reduce.sum(sums);
    if (sums[1].hi < 0.5)
        throw std::invalid_argument("remove_mean: no fluid cells");
    const double mean = sums[0].hi / sums[1].hi;
    for_interior(p, [&](int i, int j, int k) {
        if (domain.fluid(i, j, k))
            p(i, j, k) -= mean;
    });
}

PoissonProblem assemble_poisson(const FlowState& ustar, double dt, const Domain& domain, const Reducer& reduce,
                                SolverSettings settings)
{
    PoissonProblem prob;
    prob.settings = settings;
    prob.rhs = Field(ustar.block.n, kPressureGhost, 0.0);
    const Field div = discrete_divergence(ustar, domain);
    const double idt = 1.0 / dt;
    for_interior(div, [&](int i, int j, int k) { prob.rhs(i, j, k) = div(i, j, k) * idt; });
    remove_mean(prob.rhs, domain, reduce);
    return prob;
}

SolveStats solve_pressure(const PoissonProblem& problem, Field& p, const Domain& domain, CommGroup& space)
{
    const Reducer reduce(&space);
    const LinearOperator A = [&](Field& in, Field& out) { apply_laplacian(in, out, domain, space); };
    SolveStats st = bicgstab(A, problem.rhs, p, problem.settings, reduce);
    if (st.breakdown) {
        const int used = st.iterations;
        st = bicgstab(A, problem.rhs, p, problem.settings, reduce);
        st.iterations += used;
    }
    if (!st.converged)
        throw std::runtime_error("pressure solve failed after " + std::to_string(st.iterations) +
                                 " iterations: residual " + std::to_string(st.residual) + " vs rhs norm " +
                                 std::to_string(st.rhs_norm) + (st.breakdown ? " (breakdown)" : ""));
    remove_mean(p, domain, reduce);
    return st;
}

} // namespace stns

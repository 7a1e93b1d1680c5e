#include "stns/discretization.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace stns {

void FluidParams::validate() const
{
    if (!(Re > 0.0) || !std::isfinite(Re))
        throw std::invalid_argument("Reynolds number must be positive");
}

namespace {

constexpr int kUnbounded = std::numeric_limits<int>::max() / 4;

// Local index window along `axis` for component `c` values that lie on or
// inside the physical domain. Periodic axes are unbounded.
std::array<int, 2> valid_window(const Domain& domain, int c, int axis)
{
    if (domain.bc().periodic(axis))
        return {-kUnbounded, kUnbounded};
    const int lo = domain.block().lo[axis];
    const int N = domain.grid().cells[axis];
    const int top = c == axis ? N : N - 1;
    return {-lo, top - lo};
}

MomentumRHS zero_rhs(const FlowState& state)
{
    MomentumRHS r;
    for (auto& f : r.comp)
        f = Field(state.block.n, 0, 0.0);
    return r;
}

} // namespace

MomentumRHS convective_terms(const FlowState& state, const Domain& domain)
{
    MomentumRHS out = zero_rhs(state);
    const auto& n = state.block.n;
    for (int c = 0; c < 3; ++c) {
        const Field& phi = state.vel[c];
        const double* f = phi.data();
        const auto& act = domain.active(c);
        const auto sc = phi.stride(c);
        std::array<std::array<int, 2>, 3> window;
        for (int d = 0; d < 3; ++d)
            window[d] = valid_window(domain, c, d);

        for (int k = 0; k < n[2]; ++k)
            for (int j = 0; j < n[1]; ++j)
                for (int i = 0; i < n[0]; ++i) {
                    if (!act(i, j, k))
                        continue;
                    const auto o = phi.offset(i, j, k);
                    const Index3 q = {i, j, k};
                    double tend = 0.0;
                    for (int d = 0; d < 3; ++d) {
                        const auto s = phi.stride(d);
                        double a_plus, a_minus;
                        if (d == c) {
                            a_plus = 0.5 * (f[o] + f[o + s]);
                            a_minus = 0.5 * (f[o - s] + f[o]);
                        } else {
                            const double* V = state.vel[d].data();
                            a_plus = 0.5 * (V[o + s] + V[o + s - sc]);
                            a_minus = 0.5 * (V[o] + V[o - sc]);
                        }
                        const int wlo = window[d][0];
                        const int whi = window[d][1];
                        const int qd = q[d];

                        double phi_plus;
                        if (a_plus > 0.0)
                            phi_plus = (qd - 1 >= wlo) ? smart_face_value(f[o - s], f[o], f[o + s]) : f[o];
                        else
                            phi_plus = (qd + 2 <= whi) ? smart_face_value(f[o + 2 * s], f[o + s], f[o]) : f[o + s];

                        double phi_minus;
                        if (a_minus > 0.0)
                            phi_minus = (qd - 2 >= wlo) ? smart_face_value(f[o - 2 * s], f[o - s], f[o]) : f[o - s];
                        else
                            phi_minus = (qd + 1 <= whi) ? smart_face_value(f[o + s], f[o], f[o - s]) : f[o];

                        tend -= (a_plus * phi_plus - a_minus * phi_minus) / domain.h(d);
                    }
                    out.comp[c](i, j, k) = tend;
                }
    }
    return out;
}

MomentumRHS diffusive_terms(const FlowState& state, const FluidParams& params, const Domain& domain)
{
    params.validate();
    MomentumRHS out = zero_rhs(state);
    const auto& n = state.block.n;
    const double nu = 1.0 / params.Re;
    std::array<double, 3> ih2;
    for (int d = 0; d < 3; ++d)
        ih2[d] = 1.0 / (domain.h(d) * domain.h(d));
    for (int c = 0; c < 3; ++c) {
        const Field& phi = state.vel[c];
        const double* f = phi.data();
        const auto& act = domain.active(c);
        const auto sx = phi.stride(0), sy = phi.stride(1), sz = phi.stride(2);
        for (int k = 0; k < n[2]; ++k)
            for (int j = 0; j < n[1]; ++j)
                for (int i = 0; i < n[0]; ++i) {
                    if (!act(i, j, k))
                        continue;
                    const auto o = phi.offset(i, j, k);
                    const double lap = (f[o + sx] - 2.0 * f[o] + f[o - sx]) * ih2[0] +
                                       (f[o + sy] - 2.0 * f[o] + f[o - sy]) * ih2[1] +
                                       (f[o + sz] - 2.0 * f[o] + f[o - sz]) * ih2[2];
                    out.comp[c](i, j, k) = nu * lap;
                }
    }
    return out;
}

FlowState tentative_velocity(const FlowState& state, const FluidParams& params, const Domain& domain, double dt)
{
    const MomentumRHS diff = diffusive_terms(state, params, domain);
    const MomentumRHS conv = convective_terms(state, domain);
    FlowState ustar = state;
    for (int c = 0; c < 3; ++c) {
        Field& f = ustar.vel[c];
        const auto& act = domain.active(c);
        for_interior(diff.comp[c], [&](int i, int j, int k) {
            if (act(i, j, k))
                f(i, j, k) += dt * (diff.comp[c](i, j, k) + conv.comp[c](i, j, k));
        });
    }
    return ustar;
}

void pressure_correct(FlowState& ustar, const Field& p, double dt, const Domain& domain)
{
    for (int c = 0; c < 3; ++c) {
        Field& f = ustar.vel[c];
        const auto& act = domain.active(c);
        const double scale = dt / domain.h(c);
        const auto ps = p.stride(c);
        const double* pd = p.data();
        for_interior(f, [&](int i, int j, int k) {
            if (!act(i, j, k))
                return;
            const auto o = p.offset(i, j, k);
            f(i, j, k) -= scale * (pd[o] - pd[o - ps]);
        });
    }
}

} // namespace stns

#pragma once

#include "stns/mesh.hpp"

#include <array>

namespace stns {

struct FluidParams {
    double Re = 1000.0;

    void validate() const;
    bool operator==(const FluidParams&) const = default;
};

/// Momentum tendencies on the interior faces of a block (no ghosts).
/// Zero on every face that is not free (walls, obstacle faces).
struct MomentumRHS {
    std::array<Field, 3> comp;
};

/// SMART flux limiter, psi(r) = max(0, min(2r, 1/4 + 3r/4, 4)), with
/// r = (phi_D - phi_U) / (phi_U - phi_UU).
constexpr double smart_limiter(double r) noexcept
{
    const double a = 2.0 * r;
    const double b = 0.25 + 0.75 * r;
    double m = a < b ? a : b;
    m = m < 4.0 ? m : 4.0;
    return m > 0.0 ? m : 0.0;
}

/// Limited face value phi_U + psi(r)/2 (phi_U - phi_UU).
inline double smart_face_value(double upup, double up, double down) noexcept
{
    const double du = up - upup;
    if (du == 0.0)
        return up;
    return up + 0.5 * smart_limiter((down - up) / du) * du;
}

/// -div(u phi) per momentum face in flux form: advecting velocities are
/// two-point averages, advected values SMART-limited upwind interpolants.
/// Where the second upwind point lies beyond a physical wall the face value
/// falls back to first-order upwind. Needs velocity ghosts of width 2.
MomentumRHS convective_terms(const FlowState& state, const Domain& domain);

/// (1/Re) times the 7-point Laplacian of each component at its faces.
MomentumRHS diffusive_terms(const FlowState& state, const FluidParams& params, const Domain& domain);

/// Forward-Euler predictor u* = u + dt (diffusion + convection) on free faces;
/// fixed faces keep their values. Ghosts of the result are stale.
FlowState tentative_velocity(const FlowState& state, const FluidParams& params, const Domain& domain, double dt);

/// u -= dt * grad p with the two-point staggered gradient on free faces.
/// `p` needs a valid ghost layer.
void pressure_correct(FlowState& ustar, const Field& p, double dt, const Domain& domain);

} // namespace stns

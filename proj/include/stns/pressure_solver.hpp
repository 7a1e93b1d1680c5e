#pragma once

#include "stns/mesh.hpp"
#include "stns/runtime.hpp"

#include <functional>
#include <span>

namespace stns {

struct SolverSettings {
    double tol_rel = 1e-10;
    double tol_abs = 1e-12;
    int max_iter = 0; // 0: derive from the grid size

    bool operator==(const SolverSettings&) const = default;
};

/// ceil(100 * cbrt(cells)), capped at 5000.
int default_max_iterations(long long global_cells);

struct SolveStats {
    int iterations = 0;
    double residual = 0.0; // ||b - A x||_2 of the returned x
    double rhs_norm = 0.0;
    bool converged = false;
    bool breakdown = false;
};

/// Deterministic global reductions for Krylov dot products. Without a group
/// the reductions are local.
class Reducer {
public:
    Reducer() = default;
    explicit Reducer(CommGroup* group) : group_(group) {}

    void sum(std::span<CompensatedSum> values) const;
    double sum(double local) const;
    double max(double local) const;

private:
    CommGroup* group_ = nullptr;
};

/// y = A x. May refresh the ghost layer of x.
using LinearOperator = std::function<void(Field& x, Field& y)>;

struct PoissonProblem {
    Field rhs; // div(u*)/dt on fluid cells, 0 elsewhere; zero fluid mean
    SolverSettings settings;
};

/// 7-point Laplacian on fluid cells; legs into obstacle or outside cells are
/// dropped (homogeneous Neumann), periodic legs wrap through the ghosts.
/// `p` needs a valid ghost layer. Non-fluid cells get 0.
void apply_laplacian(const Field& p, Field& out, const Domain& domain);

/// Refreshes the ghost layer of `p` (halo exchange + walls), then applies the stencil.
void apply_laplacian(Field& p, Field& out, const Domain& domain, CommGroup& space);

/// Stabilized bi-conjugate gradients, unpreconditioned. `x` holds the initial
/// guess on entry. Stops when ||b - A x||_2 <= max(tol_rel ||b||_2, tol_abs),
/// verified on the true residual. On breakdown, stats.breakdown is set and x
/// is the last iterate.
SolveStats bicgstab(const LinearOperator& A, const Field& rhs, Field& x, const SolverSettings& settings,
                    const Reducer& reduce);

/// Subtract the mean over fluid cells. Throws when there are none.
void remove_mean(Field& p, const Domain& domain, const Reducer& reduce);

/// Right-hand side of the pressure equation for a predicted velocity whose
/// ghosts are valid, projected onto zero fluid mean.
PoissonProblem assemble_poisson(const FlowState& ustar, double dt, const Domain& domain, const Reducer& reduce,
                                SolverSettings settings);

/// Solve with `p` as initial guess (restarting once after a breakdown) and
/// remove the mean. Throws std::runtime_error if the solve does not converge.
SolveStats solve_pressure(const PoissonProblem& problem, Field& p, const Domain& domain, CommGroup& space);

} // namespace stns

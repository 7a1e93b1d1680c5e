#pragma once

#include "stns/discretization.hpp"
#include "stns/pressure_solver.hpp"
#include "stns/runtime.hpp"

#include <stdexcept>
#include <string>

namespace stns {

/// One propagator: F uses the fine step, G the coarse one. Boundary
/// conditions and cell flags travel with the Domain.
struct PropagatorSpec {
    double dt = 0.001;
    FluidParams params;
    SolverSettings solver;

    void validate() const;
};

struct StepStats {
    int iterations = 0;     // BiCGStab iterations
    double residual = 0.0;
    double max_div = 0.0;   // global max |div u| after correction
    double max_speed = 0.0; // global max |u|
};

/// Running summary of a propagation.
struct RunStats {
    long long steps = 0;
    long long solver_iterations = 0;
    double max_div = 0.0;

    void add(const StepStats& s);
    void merge(const RunStats& o);
};

/// Raised on blow-up or a failed pressure solve; carries the step time.
class StepFailure : public std::runtime_error {
public:
    StepFailure(const std::string& what, double t) : std::runtime_error(what), t_(t) {}
    double time() const noexcept { return t_; }

private:
    double t_;
};

inline constexpr double kBlowUpSpeed = 1e6;

/// One Chorin projection step in place. Ghosts of the result are valid.
StepStats projection_step(FlowState& state, const PropagatorSpec& ps, const Domain& domain, CommGroup& space);

/// Number of steps of size dt in [t_start, t_end]; throws unless the interval
/// is an integer multiple of dt within 1e-12 relative.
long long step_count(double t_start, double t_end, double dt);

/// Repeated projection steps from t_start to t_end; the result has t = t_end.
FlowState propagate(const FlowState& state, double t_start, double t_end, const PropagatorSpec& ps,
                    const Domain& domain, CommGroup& space, RunStats* stats = nullptr);

} // namespace stns

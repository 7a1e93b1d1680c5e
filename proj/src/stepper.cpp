#include "stns/stepper.hpp"

#include "stns/decomposition.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace stns {

void PropagatorSpec::validate() const
{
    if (!(dt > 0.0) || !std::isfinite(dt))
        throw std::invalid_argument("propagator step must be positive");
    params.validate();
}

void RunStats::add(const StepStats& s)
{
    ++steps;
    solver_iterations += s.iterations;
    max_div = std::max(max_div, s.max_div);
}

void RunStats::merge(const RunStats& o)
{
    steps += o.steps;
    solver_iterations += o.solver_iterations;
    max_div = std::max(max_div, o.max_div);
}

StepStats projection_step(FlowState& state, const PropagatorSpec& ps, const Domain& domain, CommGroup& space)
{
    const Reducer reduce(&space);
    refresh_velocity_ghosts(state, domain, space);
    FlowState ustar = tentative_velocity(state, ps.params, domain, ps.dt);
    // The divergence reads u* on the upper faces of each block.
    refresh_velocity_ghosts(ustar, domain, space);

    PoissonProblem prob = assemble_poisson(ustar, ps.dt, domain, reduce, ps.solver);
    SolveStats solve;
    try {
        solve = solve_pressure(prob, ustar.p, domain, space);
    } catch (const CommAborted&) {
        throw;
    } catch (const std::runtime_error& e) {
        std::ostringstream os;
        os << "projection step at t=" << state.t << ": " << e.what();
        throw StepFailure(os.str(), state.t);
    }
    refresh_pressure_ghosts(ustar.p, domain, space);
    pressure_correct(ustar, ustar.p, ps.dt, domain);
    refresh_velocity_ghosts(ustar, domain, space);

    StepStats st;
    st.iterations = solve.iterations;
    st.residual = solve.residual;
    double local[2] = {max_abs_divergence(ustar, domain), max_abs_velocity(ustar)};
    space.allreduce_max(local);
    st.max_div = local[0];
    st.max_speed = local[1];
    if (!std::isfinite(st.max_speed) || !std::isfinite(st.max_div) || st.max_speed > kBlowUpSpeed) {
        std::ostringstream os;
        os << "blow-up at t=" << state.t << " (dt=" << ps.dt << "): max |u| = " << st.max_speed
           << ", max |div u| = " << st.max_div;
        throw StepFailure(os.str(), state.t);
    }
    ustar.t = state.t + ps.dt;
    state = std::move(ustar);
    return st;
}

long long step_count(double t_start, double t_end, double dt)
{
    if (!(dt > 0.0))
        throw std::invalid_argument("step must be positive");
    const double span = t_end - t_start;
    if (span < 0.0)
        throw std::invalid_argument("propagation interval is reversed");
    const double q = span / dt;
    const double n = std::round(q);
    const double scale = std::max({std::abs(t_end), std::abs(t_start), dt});
    if (std::abs(n * dt - span) > 1e-12 * scale) {
        std::ostringstream os;
        os << "interval [" << t_start << ", " << t_end << "] is not a multiple of dt=" << dt;
        throw std::invalid_argument(os.str());
    }
    return static_cast<long long>(n);
}

FlowState propagate(const FlowState& state, double t_start, double t_end, const PropagatorSpec& ps,
                    const Domain& domain, CommGroup& space, RunStats* stats)
{
    ps.validate();
    const long long n = step_count(t_start, t_end, ps.dt);
    FlowState s = state;
    s.t = t_start;
    for (long long i = 0; i < n; ++i) {
        const StepStats st = projection_step(s, ps, domain, space);
        if (stats)
            stats->add(st);
        // Step times from the interval start so that t never drifts.
        s.t = t_start + static_cast<double>(i + 1) * ps.dt;
    }
    s.t = t_end;
    return s;
}

} // namespace stns

#include "stns/parareal.hpp"

#include "stns/decomposition.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace stns {

namespace {

constexpr int kTagTimings = 400;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Integer count of `step` in `span`, or -1 when it is not a multiple within 1e-12 relative.
long long ratio(double span, double step)
{
    const double q = std::round(span / step);
    if (q < 1.0 || std::abs(q * step - span) > 1e-12 * std::max(span, step))
        return -1;
    return static_cast<long long>(q);
}

} // namespace

void PararealConfig::validate() const
{
    if (!(T > 0.0) || !(dt_coarse > 0.0) || !(dt_fine > 0.0) || !std::isfinite(T))
        throw std::invalid_argument("T, coarse and fine steps must be positive");
    if (ratio(T, dt_coarse) < 0)
        throw std::invalid_argument("T must be an integer multiple of the coarse step");
    if (ratio(dt_coarse, dt_fine) < 0)
        throw std::invalid_argument("coarse step must be an integer multiple of the fine step");
    if (iterations < 0)
        throw std::invalid_argument("iteration count must be >= 0");
    if (time_workers < 1)
        throw std::invalid_argument("need at least one time worker");
    if (time_workers > coarse_intervals())
        throw std::invalid_argument("more time workers than coarse intervals");
}

int PararealConfig::coarse_intervals() const
{
    const long long n = ratio(T, dt_coarse);
    if (n < 0 || n > std::numeric_limits<int>::max())
        throw std::invalid_argument("T must be an integer multiple of the coarse step");
    return static_cast<int>(n);
}

int PararealConfig::refinement() const
{
    const long long n = ratio(dt_coarse, dt_fine);
    if (n < 0)
        throw std::invalid_argument("coarse step must be an integer multiple of the fine step");
    return static_cast<int>(n);
}

long long PararealConfig::fine_steps() const
{
    return static_cast<long long>(coarse_intervals()) * refinement();
}

std::vector<int> PararealConfig::blocks() const
{
    const int nc = coarse_intervals();
    return split_axis(nc, time_workers);
}

double DefectValues::max() const
{
    return std::max({u, v, w, p});
}

DefectValues max_defect(const FlowState& a, const FlowState& b, const Domain& domain, CommGroup& space)
{
    if (!(a.block == b.block) || !(a.block == domain.block()) || !a.p.same_shape(b.p))
        throw std::invalid_argument("max_defect: states cover different blocks");
    for (int c = 0; c < 3; ++c)
        if (!a.vel[c].same_shape(b.vel[c]))
            throw std::invalid_argument("max_defect: velocity shapes differ");

    double m[4] = {0.0, 0.0, 0.0, 0.0};
    for (int c = 0; c < 3; ++c) {
        const auto& act = domain.active(c);
        for_interior(a.vel[c], [&](int i, int j, int k) {
            if (act(i, j, k))
                m[c] = std::max(m[c], std::abs(a.vel[c](i, j, k) - b.vel[c](i, j, k)));
        });
    }

    CompensatedSum sums[3];
    for_interior(a.p, [&](int i, int j, int k) {
        if (domain.fluid(i, j, k)) {
            sums[0].add(a.p(i, j, k));
            sums[1].add(b.p(i, j, k));
            sums[2].add(1.0);
        }
    });
    space.allreduce_sum(sums);
    if (sums[2].hi > 0.5) {
        const double ma = sums[0].hi / sums[2].hi;
        const double mb = sums[1].hi / sums[2].hi;
        for_interior(a.p, [&](int i, int j, int k) {
            if (domain.fluid(i, j, k))
                m[3] = std::max(m[3], std::abs((a.p(i, j, k) - ma) - (b.p(i, j, k) - mb)));
        });
    }
    space.allreduce_max(m);
    return {m[0], m[1], m[2], m[3]};
}

double theoretical_speedup_bound(int time_workers, int iterations)
{
    if (iterations < 1)
        throw std::invalid_argument("speedup bound needs at least one iteration");
    if (time_workers < 1)
        throw std::invalid_argument("need at least one time worker");
    return static_cast<double>(time_workers) / iterations;
}

PararealResult parareal_run(const PararealConfig& cfg, const FlowState& initial, const PropagatorSpec& fine,
                            const PropagatorSpec& coarse, const Domain& domain, WorkerContext& ctx,
                            const FlowState* reference)
{
    cfg.validate();
    fine.validate();
    coarse.validate();
    if (std::abs(coarse.dt - cfg.dt_coarse) > 1e-15 * cfg.dt_coarse ||
        std::abs(fine.dt - cfg.dt_fine) > 1e-15 * cfg.dt_fine)
        throw std::invalid_argument("propagator steps do not match the Parareal configuration");
    CommGroup& time = ctx.time;
    CommGroup& space = ctx.spatial;
    if (time.size() != cfg.time_workers)
        throw std::invalid_argument("time group size differs from the configured time workers");

    const auto t_begin = Clock::now();
    const std::vector<int> blocks = cfg.blocks();
    const int r = time.rank();
    const int P = time.size();
    const bool last = r == P - 1;
    const int first = blocks[r];
    const int end = blocks[r + 1];
    const int B = end - first;
    const int K = cfg.iterations;
    const double Dt = cfg.dt_coarse;

    PararealResult res;
    res.first_interval = first;
    res.report.rows.resize(static_cast<std::size_t>(K) + 1);
    for (int k = 0; k <= K; ++k)
        res.report.rows[k].iteration = k;

    // y[n] is the start state of owned interval first + n; gd[n] holds
    // G(y[n]) after a sweep and F(y[n]) - G(y[n]) after a fine phase.
    std::vector<PackedState> y(B), gd(B);
    FlowState work = initial;
    std::vector<double> t_fine(K + 1, 0.0), t_coarse(K + 1, 0.0), t_update(K + 1, 0.0);
    RankTiming totals;
    totals.time_rank = r;

    auto slice_start = [&](int n) { return n * Dt; };
    auto advance = [&](const PropagatorSpec& ps, int n, const char* which) {
        try {
            work = propagate(work, slice_start(n), slice_start(n + 1), ps, domain, space, &res.stats);
        } catch (const CommAborted&) {
            throw;
        } catch (const std::exception& e) {
            std::ostringstream os;
            os << which << " propagator failed on coarse interval " << n << ": " << e.what();
            throw std::runtime_error(os.str());
        }
    };
    auto measure = [&](int k) {
        if (!last)
            return;
        if (reference) {
            res.report.rows[k].defect = max_defect(res.final_state, *reference, domain, space);
        } else {
            const double nan = std::numeric_limits<double>::quiet_NaN();
            res.report.rows[k].defect = {nan, nan, nan, nan};
        }
    };

    for (int k = 0; k <= K; ++k) {
        if (k > 0) {
            const auto tf = Clock::now();
            for (int n = 0; n < B; ++n) {
                unpack_interior(y[n], work);
                advance(fine, first + n, "fine");
                const PackedState f = pack_interior(work);
                auto& d = gd[n].values;
                for (std::size_t i = 0; i < d.size(); ++i)
                    d[i] = f.values[i] - d[i];
            }
            t_fine[k] = seconds_since(tf);
        }

        // Serial correction sweep; iteration 0 is the plain coarse sweep.
        double coarse_s = 0.0, upd_s = 0.0, wait_s = 0.0;
        if (r == 0) {
            work = initial;
            work.t = 0.0;
        } else {
            const auto tw = Clock::now();
            work = recv_state(time, r - 1);
            wait_s += seconds_since(tw);
        }
        for (int n = 0; n < B; ++n) {
            y[n] = pack_interior(work);
            const auto tc = Clock::now();
            advance(coarse, first + n, "coarse");
            coarse_s += seconds_since(tc);
            if (k == 0) {
                gd[n] = pack_interior(work);
                continue;
            }
            const auto tu = Clock::now();
            PackedState g = pack_interior(work);
            PackedState next = g;
            for (std::size_t i = 0; i < next.values.size(); ++i)
                next.values[i] += gd[n].values[i];
            gd[n] = std::move(g);
            unpack_interior(next, work);
            upd_s += seconds_since(tu);
        }
        work.t = slice_start(end);
        if (!last)
            send_state(time, r + 1, work);
        else
            res.final_state = work;

        t_coarse[k] = coarse_s;
        t_update[k] = upd_s + wait_s;
        totals.fine += t_fine[k];
        totals.coarse += coarse_s;
        totals.update += upd_s;
        totals.wait += wait_s;

        if (cfg.keep_slices) {
            res.slices.push_back(y);
            if (last)
                res.slices.back().push_back(pack_interior(work));
        }
        measure(k);
    }
    totals.total = seconds_since(t_begin);

    // Collect per-rank timings on the last time rank.
    {
        std::vector<double> mine;
        for (int k = 0; k <= K; ++k) {
            mine.push_back(t_fine[k]);
            mine.push_back(t_coarse[k]);
            mine.push_back(t_update[k]);
        }
        mine.insert(mine.end(), {totals.fine, totals.coarse, totals.update, totals.wait, totals.total});
        if (!last) {
            time.send(P - 1, kTagTimings, std::move(mine));
        } else {
            std::vector<std::vector<double>> all(P);
            for (int q = 0; q < P - 1; ++q)
                all[q] = time.recv(q, kTagTimings);
            all[P - 1] = std::move(mine);
            for (int q = 0; q < P; ++q) {
                const auto& v = all[q];
                if (v.size() != static_cast<std::size_t>(3 * (K + 1) + 5))
                    throw std::runtime_error("timing message has the wrong size");
                for (int k = 0; k <= K; ++k) {
                    auto& row = res.report.rows[k];
                    row.t_wall_fine = std::max(row.t_wall_fine, v[3 * k]);
                    row.t_wall_coarse = std::max(row.t_wall_coarse, v[3 * k + 1]);
                    row.t_wall_update = std::max(row.t_wall_update, v[3 * k + 2]);
                }
                const std::size_t o = 3 * (K + 1);
                res.report.ranks.push_back({q, v[o], v[o + 1], v[o + 2], v[o + 3], v[o + 4]});
            }
        }
    }

    double m[2] = {res.stats.max_div, seconds_since(t_begin)};
    time.allreduce_max(m);
    res.stats.max_div = m[0];
    res.wall_seconds = m[1];
    res.stats.steps = static_cast<long long>(time.allreduce_sum(static_cast<double>(res.stats.steps)));
    res.stats.solver_iterations =
        static_cast<long long>(time.allreduce_sum(static_cast<double>(res.stats.solver_iterations)));
    return res;
}

void write_defect_csv(std::ostream& os, const DefectReport& report)
{
    os << kDefectCsvHeader << '\n' << std::setprecision(17);
    for (const auto& r : report.rows)
        os << r.iteration << ',' << r.defect.u << ',' << r.defect.v << ',' << r.defect.w << ',' << r.defect.p
           << ',' << r.t_wall_fine << ',' << r.t_wall_coarse << ',' << r.t_wall_update << '\n';
}

void write_defect_csv(const std::string& path, const DefectReport& report)
{
    std::ofstream f(path);
    if (!f)
        throw std::runtime_error("cannot open " + path);
    write_defect_csv(f, report);
}

std::vector<DefectRow> read_defect_csv(std::istream& is)
{
    std::string line;
    if (!std::getline(is, line) || line != kDefectCsvHeader)
        throw std::runtime_error("defect CSV: unexpected header");
    std::vector<DefectRow> rows;
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty())
            continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ','))
            f.push_back(cell);
        if (f.size() != 8)
            throw std::runtime_error("defect CSV line " + std::to_string(lineno) + ": expected 8 fields");
        try {
            DefectRow r;
            std::size_t used = 0;
            r.iteration = std::stoi(f[0], &used);
            if (used != f[0].size())
                throw std::invalid_argument(f[0]);
            double* dst[7] = {&r.defect.u, &r.defect.v, &r.defect.w, &r.defect.p,
                              &r.t_wall_fine, &r.t_wall_coarse, &r.t_wall_update};
            for (int i = 0; i < 7; ++i)
                *dst[i] = std::stod(f[i + 1]);
            rows.push_back(r);
        } catch (const std::logic_error&) {
            throw std::runtime_error("defect CSV line " + std::to_string(lineno) + ": bad number");
        }
    }
    return rows;
}

} // namespace stns

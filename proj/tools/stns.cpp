// Command-line driver for the space-time parallel cavity experiments.
#include "stns/decomposition.hpp"
#include "stns/harness.hpp"
#include "stns/snapshot.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace stns;

namespace {

struct Options {
    std::string config;
    std::string preset = "sim1";
    bool full_horizon = false;
    int np_space = 0;
    int np_time = 0;
    int iterations = -1;
    double horizon = 0.0;
    std::string out;
    double snapshot_every = -1.0;
};

void add_common(CLI::App* app, Options& o)
{
    app->add_option("--config", o.config, "INI experiment file");
    app->add_option("--preset", o.preset, "sim1 or sim2 (ignored with --config)")
        ->check(CLI::IsMember({"sim1", "sim2"}));
    app->add_flag("--full-horizon", o.full_horizon, "use the long horizons T=80 / T=24");
    app->add_option("--np-space", o.np_space, "spatial workers")->check(CLI::PositiveNumber);
    app->add_option("--np-time", o.np_time, "time workers")->check(CLI::PositiveNumber);
    app->add_option("--iterations", o.iterations, "Parareal iterations")->check(CLI::NonNegativeNumber);
    app->add_option("--T", o.horizon, "override the horizon")->check(CLI::PositiveNumber);
    app->add_option("--out", o.out, "output directory");
    app->add_option("--snapshot-every", o.snapshot_every, "snapshot cadence in time units (serial)")
        ->check(CLI::NonNegativeNumber);
}

SimulationConfig resolve(const Options& o)
{
    SimulationConfig c = o.config.empty() ? preset(o.preset, o.full_horizon) : load_config(o.config);
    if (o.np_space > 0) c.np_space = o.np_space;
    if (o.np_time > 0) c.np_time = o.np_time;
    if (o.iterations >= 0) c.iterations = o.iterations;
    if (o.horizon > 0.0) c.T = o.horizon;
    if (!o.out.empty()) c.out_dir = o.out;
    if (o.snapshot_every >= 0.0) c.snapshot_every = o.snapshot_every;
    c.validate();
    return c;
}

int cmd_serial(const Options& o)
{
    const SimulationConfig c = resolve(o);
    fs::create_directories(c.out_dir);
    save_config(fs::path(c.out_dir) / "config.ini", c);
    const SerialResult r = run_serial(c);
    write_vtk(fs::path(c.out_dir) / "final.vtk", r.final_state, c.grid);
    write_binary(fs::path(c.out_dir) / "final.bin", r.final_state);
    std::printf("serial %s: T=%g, %lld steps on %d spatial workers in %.3f s\n", c.name.c_str(), c.T, r.stats.steps,
                c.np_space, r.seconds);
    std::printf("max |div u| over all steps: %.3e, mean solver iterations %.1f\n", r.stats.max_div,
                r.stats.steps ? double(r.stats.solver_iterations) / r.stats.steps : 0.0);
    std::printf("snapshots written: %zu\n", r.snapshots.size());
    return 0;
}

void print_defects(const std::vector<DefectRow>& rows)
{
    std::printf("%4s %12s %12s %12s %12s %10s %10s %10s\n", "k", "u", "v", "w", "p", "fine[s]", "coarse[s]",
                "update[s]");
    for (const auto& r : rows)
        std::printf("%4d %12.4e %12.4e %12.4e %12.4e %10.3f %10.3f %10.3f\n", r.iteration, r.defect.u, r.defect.v,
                    r.defect.w, r.defect.p, r.t_wall_fine, r.t_wall_coarse, r.t_wall_update);
}

int cmd_parareal(const Options& o)
{
    const SimulationConfig c = resolve(o);
    fs::create_directories(c.out_dir);
    save_config(fs::path(c.out_dir) / "config.ini", c);
    const PararealOutcome r = run_parareal(c);
    write_vtk(fs::path(c.out_dir) / "parareal_final.vtk", r.final_state, c.grid);
    std::printf("parareal %s: T=%g, N_c=%d, N_r=%d, N_it=%d, %d x %d workers (space x time)\n", c.name.c_str(), c.T,
                c.parareal().coarse_intervals(), c.parareal().refinement(), c.iterations, c.np_space, c.np_time);
    print_defects(r.report.rows);
    std::printf("max |div u| over all steps: %.3e\n", r.stats.max_div);
    std::printf("reference %s: %.3f s\n", r.reference_cached ? "(cached)" : "(computed)", r.reference_seconds);
    if (c.iterations >= 1)
        std::printf("%s\n", format_speedup(report_speedup(r.reference_seconds, r.seconds, c.np_time, c.iterations))
                                .c_str());
    std::printf("wrote %s and %s\n", r.defect_csv.string().c_str(), r.timing_csv.string().c_str());
    return 0;
}

int cmd_decompose(const Options& o)
{
    const SimulationConfig c = resolve(o);
    const int P = c.np_space;
    std::printf("grid %d x %d x %d, P = %d\n", c.grid.cells[0], c.grid.cells[1], c.grid.cells[2], P);
    std::printf("%5s %5s %5s %14s %9s\n", "Px", "Py", "Pz", "cost", "feasible");
    for (const auto& d : factorizations(P))
        std::printf("%5d %5d %5d %14.4f %9s\n", d[0], d[1], d[2], comm_cost(d, c.grid.cells),
                    feasible(d, c.grid.cells) ? "yes" : "no");
    const ProcessLayout l = select_decomposition(P, c.grid.cells);
    std::printf("selected %d x %d x %d, cost %.4f\n", l.dims[0], l.dims[1], l.dims[2], comm_cost(l.dims, c.grid.cells));
    for (const auto& s : partition(c.grid, l, c.bc))
        std::printf("  rank %d: lo (%d,%d,%d) n (%d,%d,%d)\n", s.rank, s.block.lo[0], s.block.lo[1], s.block.lo[2],
                    s.block.n[0], s.block.n[1], s.block.n[2]);
    return 0;
}

int cmd_report(const Options& o)
{
    const SimulationConfig c = resolve(o);
    const fs::path dir(c.out_dir);
    std::ifstream dcsv(dir / "defects.csv");
    std::ifstream tcsv(dir / "timing.csv");
    std::ifstream meta(dir / ("reference_" + reference_key(c) + ".seconds"));
    if (!dcsv || !tcsv)
        throw std::runtime_error("no defects.csv / timing.csv in " + dir.string());
    if (!meta)
        throw std::runtime_error("no serial baseline for this configuration in " + dir.string());
    const auto rows = read_defect_csv(dcsv);
    print_defects(rows);
    double total = 0.0;
    for (const auto& t : read_timing_csv(tcsv))
        if (t.phase == "total")
            total = std::max(total, t.seconds);
    double serial = 0.0;
    meta >> serial;
    const int iterations = static_cast<int>(rows.size()) - 1;
    if (iterations >= 1)
        std::printf("%s\n", format_speedup(report_speedup(serial, total, c.np_time, iterations)).c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Space-time parallel Navier-Stokes cavity solver"};
    app.require_subcommand(1);
    Options o;
    auto* serial = app.add_subcommand("serial", "time-serial fine run (reference / baseline)");
    auto* parareal = app.add_subcommand("parareal", "Parareal run with defects against the serial reference");
    auto* decompose = app.add_subcommand("decompose", "print the process-grid cost analysis for --np-space");
    auto* report = app.add_subcommand("report", "speedup table from the CSVs of a finished parareal run");
    for (auto* s : {serial, parareal, decompose, report})
        add_common(s, o);
    CLI11_PARSE(app, argc, argv);
    try {
        if (serial->parsed()) return cmd_serial(o);
        if (parareal->parsed()) return cmd_parareal(o);
        if (decompose->parsed()) return cmd_decompose(o);
        if (report->parsed()) return cmd_report(o);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}

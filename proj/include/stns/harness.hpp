#pragma once

#include "stns/parareal.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace stns {

enum class ObstacleLayout { None, CubeArray, Boxes };

/// One experiment. Stored as INI; see README for the schema.
struct SimulationConfig {
    std::string name = "custom";
    GridSpec grid{{32, 32, 5}, {1.0, 1.0, 0.1}};
    BoundarySpec bc = BoundarySpec::cavity(1.0);
    FluidParams fluid;
    ObstacleLayout obstacles = ObstacleLayout::None;
    std::vector<Box> boxes; // ObstacleLayout::Boxes only
    double T = 8.0;
    double dt_coarse = 0.01;
    double dt_fine = 0.001;
    int iterations = 2;
    int np_space = 1;
    int np_time = 1;
    SolverSettings solver;
    /// Reserved: coarse-level grid. v1 requires it to equal the fine grid
    /// (all zeros means "same").
    Index3 coarse_cells{0, 0, 0};
    std::string out_dir = "out";
    double snapshot_every = 0.0; // 0: no snapshots

    void validate() const;
    CellFlags flags() const;
    PropagatorSpec fine() const;
    PropagatorSpec coarse() const;
    PararealConfig parareal() const;

    bool operator==(const SimulationConfig&) const = default;
};

/// "sim1" (quasi-2D cavity) or "sim2" (3D cavity with obstacles). The
/// desk-scale horizons are 8 and 2.4; `full_horizon` restores 80 and 24.
SimulationConfig preset(const std::string& name, bool full_horizon = false);

SimulationConfig parse_config(std::istream& is);
SimulationConfig load_config(const std::filesystem::path& path);
std::string serialize_config(const SimulationConfig& cfg);
void save_config(const std::filesystem::path& path, const SimulationConfig& cfg);

/// FNV-1a hash (hex) of everything that determines the serial fine solution.
std::string reference_key(const SimulationConfig& cfg);

struct SerialResult {
    FlowState final_state; // whole grid
    double seconds = 0.0;
    RunStats stats;
    std::vector<std::filesystem::path> snapshots;
};

/// Fine propagator over [0, T] on N_p_space workers. Writes snapshots every
/// `snapshot_every` when `write_outputs`; on blow-up the last good state goes
/// to last_good.vtk before the error is rethrown.
SerialResult run_serial(const SimulationConfig& cfg, bool write_outputs = true);

struct PararealOutcome {
    FlowState final_state; // whole grid
    DefectReport report;
    RunStats stats;
    double seconds = 0.0;           // parallel wall time
    double reference_seconds = 0.0; // time-serial baseline on the same host
    RunStats reference_stats;       // empty when the reference came from the cache
    bool reference_cached = false;
    std::filesystem::path defect_csv, timing_csv;
};

/// Parareal on N_p_space x N_p_time workers against the serial fine
/// reference, loaded from or stored to out_dir/reference_<key>.bin.
PararealOutcome run_parareal(const SimulationConfig& cfg, bool write_outputs = true);

struct SpeedupReport {
    double serial_seconds = 0.0;
    double parallel_seconds = 0.0;
    double speedup = 0.0;
    double bound = 0.0;
    double efficiency = 0.0; // speedup / N_p_time
    bool at_bound = false;
};

/// Throws std::invalid_argument without a positive baseline and
/// std::logic_error if the measured speedup exceeds N_p_time / N_it.
SpeedupReport report_speedup(double serial_seconds, double parallel_seconds, int time_workers, int iterations);
std::string format_speedup(const SpeedupReport& r);

struct TimingRow {
    int rank = 0;
    std::string phase;
    double seconds = 0.0;
};

inline constexpr const char* kTimingCsvHeader = "rank,phase,seconds";

std::vector<TimingRow> timing_rows(const DefectReport& report);
void write_timing_csv(std::ostream& os, const std::vector<TimingRow>& rows);
std::vector<TimingRow> read_timing_csv(std::istream& is);

} // namespace stns

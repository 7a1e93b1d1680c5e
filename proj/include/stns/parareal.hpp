#pragma once

#include "stns/stepper.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace stns {

struct PararealConfig {
    double T = 8.0;
    double dt_coarse = 0.01; // coarse step = coarse interval length
    double dt_fine = 0.001;
    int iterations = 2;      // N_it
    int time_workers = 1;    // N_p_time
    bool keep_slices = false;

    /// Throws std::invalid_argument unless N_c dt_coarse = N_f dt_fine = T
    /// with an integer refinement ratio.
    void validate() const;
    int coarse_intervals() const; // N_c
    long long fine_steps() const; // N_f
    int refinement() const;      // N_r

    /// First interval of every time rank plus N_c. The first N_c mod N_p_time
    /// ranks own one interval more.
    std::vector<int> blocks() const;
};

struct DefectValues {
    double u = 0.0, v = 0.0, w = 0.0, p = 0.0;

    double max() const;
    bool operator==(const DefectValues&) const = default;
};

struct DefectRow {
    int iteration = 0;
    DefectValues defect;
    double t_wall_fine = 0.0;   // slowest time rank, this iteration
    double t_wall_coarse = 0.0;
    double t_wall_update = 0.0; // correction arithmetic and waiting for the predecessor
};

struct RankTiming {
    int time_rank = 0;
    double fine = 0.0;
    double coarse = 0.0;
    double update = 0.0;
    double wait = 0.0;
    double total = 0.0;
};

struct DefectReport {
    std::vector<DefectRow> rows; // iterations 0..N_it
    std::vector<RankTiming> ranks;
};

struct PararealResult {
    FlowState final_state;   // y^{N_it}_{N_c}; meaningful on the last time rank
    DefectReport report;     // complete on the last time rank only
    RunStats stats;          // all propagations of this time group
    double wall_seconds = 0.0;
    /// With keep_slices: slices[k][n - first] = y^k_n for the owned intervals
    /// n = first .. last (the last rank also holds n = N_c).
    std::vector<std::vector<PackedState>> slices;
    int first_interval = 0;
};

/// Block-distributed Parareal on one worker of the space-time topology.
/// `initial` and `reference` are this worker's subdomain blocks; `reference`
/// is the serial fine solution at T (defects are NaN without it).
PararealResult parareal_run(const PararealConfig& cfg, const FlowState& initial, const PropagatorSpec& fine,
                            const PropagatorSpec& coarse, const Domain& domain, WorkerContext& ctx,
                            const FlowState* reference = nullptr);

/// Max |a - b| over free faces per velocity component and over fluid cells
/// for the pressure after removing each field's fluid mean, reduced across
/// the spatial group.
DefectValues max_defect(const FlowState& a, const FlowState& b, const Domain& domain, CommGroup& space);

/// N_p_time / N_it; throws when N_it < 1.
double theoretical_speedup_bound(int time_workers, int iterations);

inline constexpr const char* kDefectCsvHeader =
    "iteration,defect_u,defect_v,defect_w,defect_p,t_wall_fine,t_wall_coarse,t_wall_update";

void write_defect_csv(std::ostream& os, const DefectReport& report);
void write_defect_csv(const std::string& path, const DefectReport& report);
/// Parses the CSV written above; throws std::runtime_error on schema errors.
std::vector<DefectRow> read_defect_csv(std::istream& is);

} // namespace stns

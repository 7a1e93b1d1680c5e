#include "stns/harness.hpp"

#include "stns/decomposition.hpp"
#include "stns/snapshot.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <set>
#include <sstream>

namespace stns {

namespace pt = boost::property_tree;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double x)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

template <typename T, std::size_t N>
std::string join(const std::array<T, N>& a)
{
    std::string s;
    for (std::size_t i = 0; i < N; ++i) {
        if (i)
            s += ' ';
        if constexpr (std::is_floating_point_v<T>)
            s += fmt(a[i]);
        else
            s += std::to_string(a[i]);
    }
    return s;
}

template <typename T>
std::vector<T> numbers(const std::string& text, const std::string& key)
{
    std::istringstream is(text);
    std::vector<T> out;
    std::string tok;
    while (is >> tok) {
        try {
            std::size_t used = 0;
            if constexpr (std::is_floating_point_v<T>)
                out.push_back(std::stod(tok, &used));
            else
                out.push_back(static_cast<T>(std::stoll(tok, &used)));
            if (used != tok.size())
                throw std::invalid_argument(tok);
        } catch (const std::logic_error&) {
            throw std::invalid_argument("config key '" + key + "': bad number '" + tok + "'");
        }
    }
    return out;
}

template <typename T>
std::array<T, 3> triple(const std::string& text, const std::string& key)
{
    const auto v = numbers<T>(text, key);
    if (v.size() != 3)
        throw std::invalid_argument("config key '" + key + "' needs three values");
    return {v[0], v[1], v[2]};
}

double number(const std::string& text, const std::string& key)
{
    const auto v = numbers<double>(text, key);
    if (v.size() != 1)
        throw std::invalid_argument("config key '" + key + "' needs one value");
    return v[0];
}

int integer(const std::string& text, const std::string& key)
{
    const auto v = numbers<long long>(text, key);
    if (v.size() != 1 || v[0] < std::numeric_limits<int>::min() || v[0] > std::numeric_limits<int>::max())
        throw std::invalid_argument("config key '" + key + "' needs one integer");
    return static_cast<int>(v[0]);
}

const char* kFaceKeys[3][2] = {{"x_low", "x_high"}, {"y_low", "y_high"}, {"z_low", "z_high"}};

const char* layout_name(ObstacleLayout o)
{
    switch (o) {
    case ObstacleLayout::None: return "none";
    case ObstacleLayout::CubeArray: return "cubes";
    case ObstacleLayout::Boxes: return "boxes";
    }
    return "none";
}

ObstacleLayout layout_from(const std::string& s)
{
    if (s == "none") return ObstacleLayout::None;
    if (s == "cubes") return ObstacleLayout::CubeArray;
    if (s == "boxes") return ObstacleLayout::Boxes;
    throw std::invalid_argument("unknown obstacle layout '" + s + "'");
}

std::string boxes_text(const std::vector<Box>& boxes)
{
    std::string s;
    for (std::size_t b = 0; b < boxes.size(); ++b) {
        if (b)
            s += "; ";
        s += join(boxes[b].lo) + ' ' + join(boxes[b].hi);
    }
    return s;
}

std::vector<Box> boxes_from(const std::string& text)
{
    std::vector<Box> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ';')) {
        const auto v = numbers<double>(item, "obstacles.boxes");
        if (v.empty())
            continue;
        if (v.size() != 6)
            throw std::invalid_argument("each obstacle box needs six coordinates");
        out.push_back(Box{{v[0], v[1], v[2]}, {v[3], v[4], v[5]}});
    }
    return out;
}

struct Workspace {
    ProcessLayout layout;
    std::vector<Subdomain> subs;
};

Workspace workspace(const SimulationConfig& cfg)
{
    Workspace w;
    w.layout = select_decomposition(cfg.np_space, cfg.grid.cells);
    w.subs = partition(cfg.grid, w.layout, cfg.bc);
    return w;
}

} // namespace

void SimulationConfig::validate() const
{
    grid.validate();
    bc.validate();
    fluid.validate();
    if (obstacles != ObstacleLayout::Boxes && !boxes.empty())
        throw std::invalid_argument("obstacle boxes given but the layout is not 'boxes'");
    if (coarse_cells != Index3{0, 0, 0} && coarse_cells != grid.cells)
        throw std::invalid_argument("distinct coarse and fine grids are not supported");
    if (np_space < 1 || np_time < 1)
        throw std::invalid_argument("worker counts must be >= 1");
    if (!(snapshot_every >= 0.0))
        throw std::invalid_argument("snapshot cadence must be >= 0");
    fine().validate();
    coarse().validate();
    PararealConfig p = parareal();
    p.time_workers = 1; // the worker count is checked by run_parareal
    p.validate();
    (void)flags();
}

CellFlags SimulationConfig::flags() const
{
    switch (obstacles) {
    case ObstacleLayout::None: return CellFlags(grid.cells);
    case ObstacleLayout::CubeArray: {
        const auto b = cube_array_preset(grid);
        return build_obstacle_flags(grid, b);
    }
    case ObstacleLayout::Boxes: return build_obstacle_flags(grid, boxes);
    }
    return CellFlags(grid.cells);
}

PropagatorSpec SimulationConfig::fine() const
{
    return PropagatorSpec{dt_fine, fluid, solver};
}

PropagatorSpec SimulationConfig::coarse() const
{
    return PropagatorSpec{dt_coarse, fluid, solver};
}

PararealConfig SimulationConfig::parareal() const
{
    PararealConfig p;
    p.T = T;
    p.dt_coarse = dt_coarse;
    p.dt_fine = dt_fine;
    p.iterations = iterations;
    p.time_workers = np_time;
    return p;
}

SimulationConfig preset(const std::string& name, bool full_horizon)
{
    SimulationConfig c;
    c.name = name;
    c.bc = BoundarySpec::cavity(1.0);
    c.fluid.Re = 1000.0;
    c.dt_coarse = 0.01;
    c.dt_fine = 0.001;
    if (name == "sim1") {
        c.grid = GridSpec{{32, 32, 5}, {1.0, 1.0, 0.1}};
        c.obstacles = ObstacleLayout::None;
        c.T = full_horizon ? 80.0 : 8.0;
        c.np_time = 4;
    } else if (name == "sim2") {
        c.grid = GridSpec{{32, 32, 32}, {1.0, 1.0, 1.0}};
        c.obstacles = ObstacleLayout::CubeArray;
        c.T = full_horizon ? 24.0 : 2.4;
        c.np_time = 8;
    } else {
        throw std::invalid_argument("unknown preset '" + name + "' (expected sim1 or sim2)");
    }
    return c;
}

SimulationConfig parse_config(std::istream& is)
{
    pt::ptree tree;
    try {
        pt::read_ini(is, tree);
    } catch (const pt::ini_parser_error& e) {
        throw std::invalid_argument(std::string("config: ") + e.what());
    }
    static const std::map<std::string, std::set<std::string>> schema = {
        {"run", {"name"}},
        {"grid", {"cells", "length", "coarse_cells"}},
        {"boundary", {"x_low", "x_high", "y_low", "y_high", "z_low", "z_high", "lid_speed"}},
        {"fluid", {"Re"}},
        {"obstacles", {"layout", "boxes"}},
        {"time", {"T", "dt_coarse", "dt_fine", "iterations"}},
        {"parallel", {"np_space", "np_time"}},
        {"solver", {"tol_rel", "tol_abs", "max_iter"}},
        {"output", {"dir", "snapshot_every"}},
    };
    for (const auto& [section, body] : tree) {
        const auto it = schema.find(section);
        if (it == schema.end())
            throw std::invalid_argument("config: unknown section [" + section + "]");
        for (const auto& kv : body)
            if (!it->second.count(kv.first))
                throw std::invalid_argument("config: unknown key " + section + "." + kv.first);
    }

    SimulationConfig c;
    auto get = [&](const std::string& key) -> std::optional<std::string> {
        if (auto v = tree.get_optional<std::string>(pt::ptree::path_type(key, '.')))
            return *v;
        return std::nullopt;
    };
    if (auto v = get("run.name")) c.name = *v;
    if (auto v = get("grid.cells")) c.grid.cells = triple<int>(*v, "grid.cells");
    if (auto v = get("grid.length")) c.grid.length = triple<double>(*v, "grid.length");
    if (auto v = get("grid.coarse_cells")) {
        c.coarse_cells = *v == "same" ? Index3{0, 0, 0} : triple<int>(*v, "grid.coarse_cells");
    }
    for (int a = 0; a < 3; ++a)
        for (int s = 0; s < 2; ++s)
            if (auto v = get(std::string("boundary.") + kFaceKeys[a][s]))
                c.bc.face[a][s] = boundary_kind_from_string(*v);
    if (auto v = get("boundary.lid_speed")) c.bc.lid_speed = number(*v, "boundary.lid_speed");
    if (auto v = get("fluid.Re")) c.fluid.Re = number(*v, "fluid.Re");
    if (auto v = get("obstacles.layout")) c.obstacles = layout_from(*v);
    if (auto v = get("obstacles.boxes")) c.boxes = boxes_from(*v);
    if (auto v = get("time.T")) c.T = number(*v, "time.T");
    if (auto v = get("time.dt_coarse")) c.dt_coarse = number(*v, "time.dt_coarse");
    if (auto v = get("time.dt_fine")) c.dt_fine = number(*v, "time.dt_fine");
    if (auto v = get("time.iterations")) c.iterations = integer(*v, "time.iterations");
    if (auto v = get("parallel.np_space")) c.np_space = integer(*v, "parallel.np_space");
    if (auto v = get("parallel.np_time")) c.np_time = integer(*v, "parallel.np_time");
    if (auto v = get("solver.tol_rel")) c.solver.tol_rel = number(*v, "solver.tol_rel");
    if (auto v = get("solver.tol_abs")) c.solver.tol_abs = number(*v, "solver.tol_abs");
    if (auto v = get("solver.max_iter")) c.solver.max_iter = integer(*v, "solver.max_iter");
    if (auto v = get("output.dir")) c.out_dir = *v;
    if (auto v = get("output.snapshot_every")) c.snapshot_every = number(*v, "output.snapshot_every");
    c.validate();
    return c;
}

SimulationConfig load_config(const fs::path& path)
{
    std::ifstream f(path);
    if (!f)
        throw std::runtime_error("cannot open config " + path.string());
    return parse_config(f);
}

std::string serialize_config(const SimulationConfig& c)
{
    std::ostringstream os;
    os << "[run]\nname = " << c.name << "\n\n";
    os << "[grid]\ncells = " << join(c.grid.cells) << "\nlength = " << join(c.grid.length) << "\ncoarse_cells = "
       << (c.coarse_cells == Index3{0, 0, 0} ? std::string("same") : join(c.coarse_cells)) << "\n\n";
    os << "[boundary]\n";
    for (int a = 0; a < 3; ++a)
        for (int s = 0; s < 2; ++s)
            os << kFaceKeys[a][s] << " = " << to_string(c.bc.face[a][s]) << '\n';
    os << "lid_speed = " << fmt(c.bc.lid_speed) << "\n\n";
    os << "[fluid]\nRe = " << fmt(c.fluid.Re) << "\n\n";
    os << "[obstacles]\nlayout = " << layout_name(c.obstacles) << '\n';
    if (!c.boxes.empty())
        os << "boxes = " << boxes_text(c.boxes) << '\n';
    os << "\n[time]\nT = " << fmt(c.T) << "\ndt_coarse = " << fmt(c.dt_coarse) << "\ndt_fine = " << fmt(c.dt_fine)
       << "\niterations = " << c.iterations << "\n\n";
    os << "[parallel]\nnp_space = " << c.np_space << "\nnp_time = " << c.np_time << "\n\n";
    os << "[solver]\ntol_rel = " << fmt(c.solver.tol_rel) << "\ntol_abs = " << fmt(c.solver.tol_abs)
       << "\nmax_iter = " << c.solver.max_iter << "\n\n";
    os << "[output]\ndir = " << c.out_dir << "\nsnapshot_every = " << fmt(c.snapshot_every) << '\n';
    return os.str();
}

void save_config(const fs::path& path, const SimulationConfig& cfg)
{
    std::ofstream f(path);
    if (!f)
        throw std::runtime_error("cannot write config " + path.string());
    f << serialize_config(cfg);
}

std::string reference_key(const SimulationConfig& c)
{
    std::ostringstream os;
    os << join(c.grid.cells) << '|' << join(c.grid.length) << '|';
    for (int a = 0; a < 3; ++a)
        os << to_string(c.bc.face[a][0]) << ',' << to_string(c.bc.face[a][1]) << ';';
    os << fmt(c.bc.lid_speed) << '|' << fmt(c.fluid.Re) << '|' << layout_name(c.obstacles) << ':'
       << boxes_text(c.boxes) << '|' << fmt(c.T) << '|' << fmt(c.dt_fine) << '|' << fmt(c.solver.tol_rel) << ','
       << fmt(c.solver.tol_abs) << ',' << c.solver.max_iter << '|' << c.np_space;
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : os.str()) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

SerialResult run_serial(const SimulationConfig& cfg, bool write_outputs)
{
    cfg.validate();
    const Workspace ws = workspace(cfg);
    const CellFlags flags = cfg.flags();
    const PropagatorSpec fine = cfg.fine();
    const long long total = step_count(0.0, cfg.T, cfg.dt_fine);
    long long every = 0;
    if (write_outputs && cfg.snapshot_every > 0.0) {
        every = step_count(0.0, cfg.snapshot_every, cfg.dt_fine);
        fs::create_directories(cfg.out_dir);
    }

    SerialResult out;
    std::mutex m;
    launch(cfg.np_space, 1, [&](WorkerContext& ctx) {
        CommGroup& space = ctx.spatial;
        const Subdomain& sub = ws.subs[space.rank()];
        const Domain domain = make_domain(cfg.grid, cfg.bc, flags, sub);
        FlowState s = new_state(domain);
        RunStats stats;
        std::vector<fs::path> snaps;
        double io_seconds = 0.0;
        auto snapshot = [&](const FlowState& state, const fs::path& path) {
            const auto t0 = Clock::now();
            FlowState g = gather_state(state, ws.subs, space);
            if (space.rank() == 0)
                write_vtk(path, g, cfg.grid);
            snaps.push_back(path);
            io_seconds += seconds_since(t0);
        };
        auto snap_name = [&](long long step) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "snapshot_%08lld.vtk", step);
            return fs::path(cfg.out_dir) / buf;
        };

        const auto t0 = Clock::now();
        if (every > 0)
            snapshot(s, snap_name(0));
        FlowState good;
        for (long long n = 0; n < total; ++n) {
            if (write_outputs)
                good = s;
            try {
                stats.add(projection_step(s, fine, domain, space));
            } catch (const StepFailure&) {
                if (write_outputs) {
                    fs::create_directories(cfg.out_dir);
                    snapshot(good, fs::path(cfg.out_dir) / "last_good.vtk");
                }
                throw;
            }
            s.t = static_cast<double>(n + 1) * cfg.dt_fine;
            if (every > 0 && (n + 1) % every == 0)
                snapshot(s, snap_name(n + 1));
        }
        s.t = cfg.T;
        const double elapsed = seconds_since(t0) - io_seconds;
        FlowState g = gather_state(s, ws.subs, space);
        const double wall = space.allreduce_max(elapsed);
        if (space.rank() == 0) {
            std::lock_guard lock(m);
            out.final_state = std::move(g);
            out.seconds = wall;
            out.stats = stats;
            out.snapshots = snaps;
        }
    });
    return out;
}

PararealOutcome run_parareal(const SimulationConfig& cfg, bool write_outputs)
{
    cfg.validate();
    cfg.parareal().validate();
    PararealOutcome out;
    const fs::path dir(cfg.out_dir);
    const std::string key = reference_key(cfg);
    const fs::path ref_path = dir / ("reference_" + key + ".bin");
    const fs::path meta_path = dir / ("reference_" + key + ".seconds");

    FlowState reference;
    if (fs::exists(ref_path) && fs::exists(meta_path)) {
        reference = read_binary(ref_path);
        reference.t = cfg.T;
        std::ifstream meta(meta_path);
        meta >> out.reference_seconds;
        out.reference_cached = true;
    } else {
        SimulationConfig serial = cfg;
        serial.snapshot_every = 0.0;
        SerialResult s = run_serial(serial, false);
        reference = std::move(s.final_state);
        out.reference_seconds = s.seconds;
        out.reference_stats = s.stats;
        if (write_outputs) {
            fs::create_directories(dir);
            write_binary(ref_path, reference);
            std::ofstream meta(meta_path);
            meta << fmt(s.seconds) << '\n';
        }
    }

    const Workspace ws = workspace(cfg);
    const CellFlags flags = cfg.flags();
    const PararealConfig pcfg = cfg.parareal();
    const PropagatorSpec fine = cfg.fine();
    const PropagatorSpec coarse = cfg.coarse();
    std::mutex m;
    launch(cfg.np_space, cfg.np_time, [&](WorkerContext& ctx) {
        const Subdomain& sub = ws.subs[ctx.spatial.rank()];
        const Domain domain = make_domain(cfg.grid, cfg.bc, flags, sub);
        const FlowState initial = new_state(domain);
        FlowState ref_local = extract_block(reference, sub.block);
        PararealResult r = parareal_run(pcfg, initial, fine, coarse, domain, ctx, &ref_local);
        if (ctx.time.rank() != ctx.time.size() - 1)
            return;
        FlowState g = gather_state(r.final_state, ws.subs, ctx.spatial);
        if (ctx.spatial.rank() == 0) {
            std::lock_guard lock(m);
            out.final_state = std::move(g);
            out.report = std::move(r.report);
            out.stats = r.stats;
            out.seconds = r.wall_seconds;
        }
    });

    if (write_outputs) {
        fs::create_directories(dir);
        out.defect_csv = dir / "defects.csv";
        out.timing_csv = dir / "timing.csv";
        write_defect_csv(out.defect_csv.string(), out.report);
        std::ofstream t(out.timing_csv);
        if (!t)
            throw std::runtime_error("cannot write " + out.timing_csv.string());
        write_timing_csv(t, timing_rows(out.report));
    }
    return out;
}

SpeedupReport report_speedup(double serial_seconds, double parallel_seconds, int time_workers, int iterations)
{
    if (!(serial_seconds > 0.0))
        throw std::invalid_argument("speedup report needs a positive serial baseline");
    if (!(parallel_seconds > 0.0))
        throw std::invalid_argument("speedup report needs a positive parallel time");
    SpeedupReport r;
    r.serial_seconds = serial_seconds;
    r.parallel_seconds = parallel_seconds;
    r.speedup = serial_seconds / parallel_seconds;
    r.bound = theoretical_speedup_bound(time_workers, iterations);
    r.efficiency = r.speedup / time_workers;
    const double tol = 1e-9 * r.bound;
    if (r.speedup > r.bound + tol) {
        std::ostringstream os;
        os << "measured speedup " << r.speedup << " exceeds the bound " << r.bound;
        throw std::logic_error(os.str());
    }
    r.at_bound = r.speedup >= r.bound - tol;
    return r;
}

std::string format_speedup(const SpeedupReport& r)
{
    std::ostringstream os;
    os << std::fixed << std::setprecision(3) << "serial " << r.serial_seconds << " s, parallel "
       << r.parallel_seconds << " s, speedup " << r.speedup << ", bound " << r.bound << ", efficiency "
       << r.efficiency << (r.at_bound ? " (at bound)" : "");
    return os.str();
}

std::vector<TimingRow> timing_rows(const DefectReport& report)
{
    std::vector<TimingRow> rows;
    for (const auto& t : report.ranks) {
        rows.push_back({t.time_rank, "fine", t.fine});
        rows.push_back({t.time_rank, "coarse", t.coarse});
        rows.push_back({t.time_rank, "update", t.update});
        rows.push_back({t.time_rank, "wait", t.wait});
        rows.push_back({t.time_rank, "total", t.total});
    }
    return rows;
}

void write_timing_csv(std::ostream& os, const std::vector<TimingRow>& rows)
{
    os << kTimingCsvHeader << '\n';
    for (const auto& r : rows)
        os << r.rank << ',' << r.phase << ',' << fmt(r.seconds) << '\n';
}

std::vector<TimingRow> read_timing_csv(std::istream& is)
{
    std::string line;
    if (!std::getline(is, line) || line != kTimingCsvHeader)
        throw std::runtime_error("timing CSV: unexpected header");
    std::vector<TimingRow> rows;
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty())
            continue;
        const auto a = line.find(',');
        const auto b = a == std::string::npos ? a : line.find(',', a + 1);
        if (b == std::string::npos || line.find(',', b + 1) != std::string::npos)
            throw std::runtime_error("timing CSV line " + std::to_string(lineno) + ": expected 3 fields");
        try {
            TimingRow r;
            std::size_t used = 0;
            const std::string rank = line.substr(0, a);
            r.rank = std::stoi(rank, &used);
            if (used != rank.size())
                throw std::invalid_argument(rank);
            r.phase = line.substr(a + 1, b - a - 1);
            if (r.phase.empty())
                throw std::invalid_argument("phase");
            r.seconds = std::stod(line.substr(b + 1));
            rows.push_back(std::move(r));
        } catch (const std::logic_error&) {
            throw std::runtime_error("timing CSV line " + std::to_string(lineno) + ": bad field");
        }
    }
    return rows;
}

} // namespace stns

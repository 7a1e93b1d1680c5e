#include "stns/snapshot.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <stdexcept>

namespace stns {

namespace {

constexpr char kMagic[5] = {'S', 'T', 'N', 'S', '1'};

void require_whole(const FlowState& state)
{
    if (state.block.lo != Index3{0, 0, 0})
        throw std::invalid_argument("snapshot output needs a gathered whole-grid state");
}

} // namespace

void write_vtk(const std::filesystem::path& path, const FlowState& state, const GridSpec& grid)
{
    require_whole(state);
    if (state.block.n != grid.cells)
        throw std::invalid_argument("state does not cover the grid");
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot open " + path.string());
    const auto& n = grid.cells;
    out << "# vtk DataFile Version 3.0\n"
        << "stns flow field t=" << std::setprecision(17) << state.t << "\n"
        << "ASCII\nDATASET STRUCTURED_POINTS\n"
        << "DIMENSIONS " << n[0] << ' ' << n[1] << ' ' << n[2] << "\n"
        << "ORIGIN " << 0.5 * grid.h(0) << ' ' << 0.5 * grid.h(1) << ' ' << 0.5 * grid.h(2) << "\n"
        << "SPACING " << grid.h(0) << ' ' << grid.h(1) << ' ' << grid.h(2) << "\n"
        << "POINT_DATA " << grid.total_cells() << "\n";
    const CenterFields c = interpolate_to_centers(state);
    const std::pair<const char*, const Field*> blocks[] = {{"u", &c.u}, {"v", &c.v}, {"w", &c.w}, {"p", &c.p}};
    out << std::setprecision(9);
    for (const auto& [name, f] : blocks) {
        out << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
        for_interior(*f, [&](int i, int j, int k) { out << (*f)(i, j, k) << '\n'; });
    }
    if (!out)
        throw std::runtime_error("failed writing " + path.string());
}

void write_binary(const std::filesystem::path& path, const FlowState& state)
{
    require_whole(state);
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot open " + path.string());
    out.write(kMagic, sizeof kMagic);
    for (int a = 0; a < 3; ++a) {
        const std::int64_t n = state.block.n[a];
        out.write(reinterpret_cast<const char*>(&n), sizeof n);
    }
    const auto& n = state.block.n;
    std::vector<double> buf(static_cast<std::size_t>(n[0]) * n[1] * n[2]);
    auto dump = [&](const Field& f) {
        std::size_t idx = 0;
        for (int i = 0; i < n[0]; ++i)
            for (int j = 0; j < n[1]; ++j)
                for (int k = 0; k < n[2]; ++k)
                    buf[idx++] = f(i, j, k);
        out.write(reinterpret_cast<const char*>(buf.data()),
                  static_cast<std::streamsize>(buf.size() * sizeof(double)));
    };
    for (const auto& f : state.vel)
        dump(f);
    dump(state.p);
    if (!out)
        throw std::runtime_error("failed writing " + path.string());
}

FlowState read_binary(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open " + path.string());
    char magic[5];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw std::runtime_error(path.string() + " is not an STNS1 dump");
    Index3 n{};
    for (int a = 0; a < 3; ++a) {
        std::int64_t v = 0;
        in.read(reinterpret_cast<char*>(&v), sizeof v);
        if (!in || v < 1 || v > (1 << 20))
            throw std::runtime_error(path.string() + ": bad header");
        n[a] = static_cast<int>(v);
    }
    FlowState s;
    s.block = Block{{0, 0, 0}, n};
    for (auto& f : s.vel)
        f = Field(n, kVelocityGhost, 0.0);
    s.p = Field(n, kPressureGhost, 0.0);
    std::vector<double> buf(static_cast<std::size_t>(n[0]) * n[1] * n[2]);
    auto load = [&](Field& f) {
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(double)));
        if (!in)
            throw std::runtime_error(path.string() + ": truncated data");
        std::size_t idx = 0;
        for (int i = 0; i < n[0]; ++i)
            for (int j = 0; j < n[1]; ++j)
                for (int k = 0; k < n[2]; ++k)
                    f(i, j, k) = buf[idx++];
    };
    for (auto& f : s.vel)
        load(f);
    load(s.p);
    return s;
}

} // namespace stns

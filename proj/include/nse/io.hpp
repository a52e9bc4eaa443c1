#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "nse/emulator.hpp"
#include "nse/errors.hpp"
#include "nse/gaussian_field.hpp"
#include "nse/pde.hpp"
#include "nse/rollout.hpp"
#include "nse/stencil_dataset.hpp"
#include "nse/train.hpp"

namespace nse::io {

using json = nlohmann::json;
namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");
static_assert(std::numeric_limits<double>::is_iec559);

// ---------------------------------------------------------------- low level

inline void write_doubles(std::ostream& os, std::span<const double> values) {
    os.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
}

inline std::vector<double> read_doubles(std::istream& is, std::size_t count) {
    std::vector<double> out(count);
    is.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(count * sizeof(double)));
    if (static_cast<std::size_t>(is.gcount()) != count * sizeof(double)) throw IoError("truncated float64 payload");
    return out;
}

inline std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    return os;
}

inline std::ifstream open_in(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path.string() + "' for reading");
    return is;
}

inline void write_json(const fs::path& path, const json& j) {
    auto os = open_out(path);
    os << j.dump(2) << '\n';
    if (!os) throw IoError("failed writing '" + path.string() + "'");
}

inline json read_json(const fs::path& path) {
    auto is = open_in(path);
    try {
        return json::parse(is);
    } catch (const json::exception& e) {
        throw IoError("malformed JSON in '" + path.string() + "': " + e.what());
    }
}

// Container: 8-byte magic, uint64 header length, JSON header, float64 payload.
inline void write_container(const fs::path& path, std::string_view magic, const json& header,
                            std::span<const double> payload) {
    auto os = open_out(path);
    const std::string text = header.dump();
    const std::uint64_t len = text.size();
    os.write(magic.data(), 8);
    os.write(reinterpret_cast<const char*>(&len), sizeof len);
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    write_doubles(os, payload);
    if (!os) throw IoError("failed writing '" + path.string() + "'");
}

inline std::pair<json, std::vector<double>> read_container(const fs::path& path, std::string_view magic) {
    auto is = open_in(path);
    char got[8];
    is.read(got, 8);
    if (is.gcount() != 8 || std::string_view(got, 8) != magic)
        throw IoError("'" + path.string() + "' is not a " + std::string(magic) + " file");
    std::uint64_t len = 0;
    is.read(reinterpret_cast<char*>(&len), sizeof len);
    std::string text(len, '\0');
    is.read(text.data(), static_cast<std::streamsize>(len));
    if (static_cast<std::uint64_t>(is.gcount()) != len) throw IoError("truncated header in '" + path.string() + "'");
    json header;
    try {
        header = json::parse(text);
    } catch (const json::exception& e) {
        throw IoError("malformed header in '" + path.string() + "': " + e.what());
    }
    const std::size_t count = header.at("payload_doubles").get<std::size_t>();
    return {std::move(header), read_doubles(is, count)};
}

// ---------------------------------------------------------------- metadata

inline json to_json(const GridSpec& g) { return {{"n", g.n()}, {"length", g.length()}, {"spacing", g.spacing()}}; }

inline GridSpec grid_from_json(const json& j) { return GridSpec(j.at("n").get<int>(), j.at("length").get<double>()); }

inline json to_json(const PdeSystem& s) {
    return {{"kind", to_string(s.kind)},
            {"diffusion", s.diffusion},
            {"velocity", {s.velocity[0], s.velocity[1]}},
            {"boundary", to_string(s.boundary)},
            {"scheme", s.scheme == AdvectionScheme::Central ? "central" : "upwind"}};
}

inline PdeSystem system_from_json(const json& j) {
    const PdeKind kind = pde_kind_from_string(j.at("kind").get<std::string>());
    const auto v = j.at("velocity").get<std::vector<double>>();
    if (v.size() != 2) throw ConfigError("velocity must have two components");
    const std::string scheme = j.value("scheme", "upwind");
    if (scheme != "upwind" && scheme != "central") throw ConfigError("unknown advection scheme '" + scheme + "'");
    return PdeSystem::make(kind, j.at("diffusion").get<double>(), {v[0], v[1]},
                           scheme == "central" ? AdvectionScheme::Central : AdvectionScheme::Upwind);
}

inline json to_json(const TimeSpec& t) { return {{"dt", t.dt}, {"n_steps", t.n_steps}, {"t0", t.t0}}; }

inline TimeSpec time_from_json(const json& j) {
    return {j.at("dt").get<double>(), j.at("n_steps").get<int>(), j.value("t0", 0.0)};
}

inline json to_json(const GpSpec& g) {
    return {{"mean_value", g.mean_value}, {"length_scale", g.length_scale}, {"variance", g.variance}, {"seed", g.seed}};
}

inline GpSpec gp_from_json(const json& j) {
    GpSpec g;
    g.mean_value = j.value("mean_value", g.mean_value);
    g.length_scale = j.value("length_scale", g.length_scale);
    g.variance = j.value("variance", g.variance);
    g.seed = j.value("seed", g.seed);
    return g;
}

// ---------------------------------------------------------------- trajectories

struct TrajectoryFile {
    Trajectory trajectory;
    json meta;
};

/// Writes <stem>.bin (float64, row-major (step, i, j)) and <stem>.json.
inline void write_trajectory(const fs::path& stem, const Trajectory& traj, const PdeSystem& sys,
                             const TimeSpec& time, const json& seeds = json::object()) {
    if (traj.size() == 0) throw ShapeMismatch("cannot write an empty trajectory");
    const GridSpec grid = traj.front().grid;
    {
        auto os = open_out(fs::path(stem).concat(".bin"));
        for (const Field2D& f : traj.snapshots) write_doubles(os, f.values);
        if (!os) throw IoError("failed writing trajectory payload");
    }
    json meta{{"format", "nse-trajectory-v1"},
              {"snapshots", traj.size()},
              {"dtype", "float64-le"},
              {"order", "step,i,j"},
              {"grid", to_json(grid)},
              {"boundary", to_string(traj.front().boundary)},
              {"system", to_json(sys)},
              {"time", to_json(time)},
              {"dt", traj.dt},
              {"seeds", seeds}};
    write_json(fs::path(stem).concat(".json"), meta);
}

inline TrajectoryFile read_trajectory(const fs::path& stem) {
    TrajectoryFile out;
    out.meta = read_json(fs::path(stem).concat(".json"));
    const GridSpec grid = grid_from_json(out.meta.at("grid"));
    const Boundary bc = out.meta.at("boundary").get<std::string>() == "periodic" ? Boundary::Periodic
                                                                                  : Boundary::ZeroGradient;
    const auto n = out.meta.at("snapshots").get<std::size_t>();
    const double dt = out.meta.at("dt").get<double>();
    const double t0 = out.meta.at("time").value("t0", 0.0);
    auto is = open_in(fs::path(stem).concat(".bin"));
    out.trajectory.dt = dt;
    for (std::size_t k = 0; k < n; ++k)
        out.trajectory.snapshots.emplace_back(grid, bc, read_doubles(is, grid.cells()), t0 + dt * static_cast<double>(k));
    return out;
}

// ---------------------------------------------------------------- datasets

inline constexpr std::string_view kDatasetMagic = "NSEDSET1";

inline json dataset_summary(const StencilDataset& ds) {
    json hist = json::object();
    for (const auto& [origin, n] : ds.provenance_histogram()) hist[std::string(to_string(origin))] = n;
    json j{{"m", kStencilSize}, {"count", ds.count()}, {"provenance", hist}, {"dropped", ds.dropped}};
    j["range"] = ds.range ? json{ds.range->lo, ds.range->hi} : json(nullptr);
    return j;
}

/// Header: summary plus run-length provenance; payload: (count, m + 1) rows of
/// stencil inputs followed by the label. Per-sample grid coordinates are not stored.
inline void write_dataset(const fs::path& path, const StencilDataset& ds, const json& seeds = json::object()) {
    json header = dataset_summary(ds);
    header["format"] = "nse-dataset-v1";
    header["seeds"] = seeds;
    json runs = json::array();
    for (std::size_t k = 0; k < ds.count();) {
        std::size_t e = k;
        while (e < ds.count() && ds.samples[e].provenance.origin == ds.samples[k].provenance.origin) ++e;
        runs.push_back({to_string(ds.samples[k].provenance.origin), e - k});
        k = e;
    }
    header["provenance_runs"] = runs;
    std::vector<double> payload;
    payload.reserve(ds.count() * (kStencilSize + 1));
    for (const auto& s : ds.samples) {
        payload.insert(payload.end(), s.input.begin(), s.input.end());
        payload.push_back(s.label);
    }
    header["payload_doubles"] = payload.size();
    write_container(path, kDatasetMagic, header, payload);
}

struct DatasetFile {
    StencilDataset dataset;
    json header;
};

inline DatasetFile read_dataset(const fs::path& path) {
    auto [header, payload] = read_container(path, kDatasetMagic);
    DatasetFile out;
    const auto count = header.at("count").get<std::size_t>();
    if (header.at("m").get<std::size_t>() != kStencilSize || payload.size() != count * (kStencilSize + 1))
        throw IoError("dataset payload does not match its header");
    out.dataset.samples.resize(count);
    std::size_t k = 0;
    for (const auto& run : header.at("provenance_runs")) {
        const Origin o = origin_from_string(run.at(0).get<std::string>());
        for (std::size_t r = 0; r < run.at(1).get<std::size_t>(); ++r, ++k) out.dataset.samples.at(k).provenance.origin = o;
    }
    if (k != count) throw IoError("provenance runs do not cover the dataset");
    for (std::size_t c = 0; c < count; ++c) {
        auto& s = out.dataset.samples[c];
        const double* row = payload.data() + c * (kStencilSize + 1);
        std::copy(row, row + kStencilSize, s.input.begin());
        s.label = row[kStencilSize];
    }
    if (!header.at("range").is_null())
        out.dataset.range = DataRange{header["range"][0].get<double>(), header["range"][1].get<double>()};
    out.dataset.dropped = header.value("dropped", std::size_t{0});
    out.header = std::move(header);
    return out;
}

// ---------------------------------------------------------------- models

inline constexpr std::string_view kModelMagic = "NSEMODL1";

inline json to_json(const EmulatorArchitecture& a) {
    return {{"input_dim", a.input_dim},
            {"hidden_width", a.hidden_width},
            {"n_residual_blocks", a.n_residual_blocks},
            {"activation", to_string(a.activation)},
            {"parameter_layout", "input W,b; per block: layer1 W,b, layer2 W,b; output W,b; W row-major (out, in)"}};
}

inline EmulatorArchitecture arch_from_json(const json& j) {
    EmulatorArchitecture a;
    a.input_dim = j.value("input_dim", a.input_dim);
    a.hidden_width = j.value("hidden_width", a.hidden_width);
    a.n_residual_blocks = j.value("n_residual_blocks", a.n_residual_blocks);
    a.activation = activation_from_string(j.value("activation", std::string("tanh")));
    if (a.input_dim != static_cast<int>(kStencilSize)) throw ConfigError("emulator input_dim must be 5");
    if (a.hidden_width < 1 || a.n_residual_blocks < 0) throw ConfigError("invalid emulator architecture");
    return a;
}

inline json to_json(const Normalization& n) {
    return {{"input_mean", n.input_mean},   {"input_std", n.input_std},   {"label_mean", n.label_mean},
            {"label_std", n.label_std},     {"input_degenerate", n.input_degenerate},
            {"label_degenerate", n.label_degenerate}};
}

inline Normalization norm_from_json(const json& j) {
    Normalization n;
    n.input_mean = j.at("input_mean").get<std::array<double, kStencilSize>>();
    n.input_std = j.at("input_std").get<std::array<double, kStencilSize>>();
    n.label_mean = j.at("label_mean").get<double>();
    n.label_std = j.at("label_std").get<double>();
    n.input_degenerate = j.value("input_degenerate", n.input_degenerate);
    n.label_degenerate = j.value("label_degenerate", false);
    return n;
}

inline void write_model(const fs::path& path, const TrainedEmulator& emu, const json& extra = json::object()) {
    json header{{"format", "nse-model-v1"},
                {"arch", to_json(emu.arch)},
                {"norm", to_json(emu.norm)},
                {"payload_doubles", emu.params.size()}};
    header.update(extra);
    write_container(path, kModelMagic, header, emu.params);
}

struct ModelFile {
    TrainedEmulator emulator;
    json header;
};

inline ModelFile read_model(const fs::path& path) {
    auto [header, payload] = read_container(path, kModelMagic);
    ModelFile out;
    out.emulator.arch = arch_from_json(header.at("arch"));
    out.emulator.norm = norm_from_json(header.at("norm"));
    out.emulator.params = std::move(payload);
    if (out.emulator.params.size() != out.emulator.arch.parameter_count())
        throw IoError("model parameter count does not match its architecture");
    out.header = std::move(header);
    return out;
}

// ---------------------------------------------------------------- CSV outputs

inline std::string fmt_double(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) return "nan";
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

inline void write_training_log(const fs::path& path, const TrainingLog& log) {
    auto os = open_out(path);
    os << "epoch,lr,mse_normalized,mse_original\n";
    for (const auto& r : log.epochs)
        os << r.epoch << ',' << fmt_double(r.lr) << ',' << fmt_double(r.mse_normalized) << ','
           << fmt_double(r.mse_original) << '\n';
    if (!os) throw IoError("failed writing training log");
}

/// <stem>.csv: step, mean_log_rmse, band, ic_0..ic_{n-1}; <stem>.json: metadata.
inline void write_report(const fs::path& stem, const RolloutReport& rep, const json& extra = json::object()) {
    {
        auto os = open_out(fs::path(stem).concat(".csv"));
        os << "step,mean_log_rmse,band";
        for (std::size_t i = 0; i < rep.n_ics(); ++i) os << ",ic_" << i;
        os << '\n';
        for (std::size_t k = 0; k < rep.n_steps(); ++k) {
            os << (k + 1) << ',' << fmt_double(rep.mean_curve[k]) << ',' << fmt_double(rep.band_halfwidth[k]);
            for (const auto& row : rep.per_ic_log_rmse) os << ',' << fmt_double(row[k]);
            os << '\n';
        }
        if (!os) throw IoError("failed writing report CSV");
    }
    std::size_t diverged = 0;
    for (long d : rep.diverged_at) diverged += d >= 0;
    json meta{{"format", "nse-report-v1"},
              {"strategy", rep.strategy},
              {"system", rep.system},
              {"diffusion", rep.diffusion},
              {"train_seed", rep.train_seed},
              {"ic_seeds", rep.ic_seeds},
              {"diverged_at", rep.diverged_at},
              {"diverged_ics", diverged},
              {"excluded_per_step_max", rep.excluded.empty() ? 0 : *std::max_element(rep.excluded.begin(), rep.excluded.end())},
              {"band", "2 x sample standard deviation over finite ICs; diverged ICs excluded"},
              {"log_base", 10},
              {"final_mean_log_rmse", fmt_double(rep.final_mean())}};
    meta.update(extra);
    write_json(fs::path(stem).concat(".json"), meta);
}

inline double parse_double(const std::string& s) {
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    return std::stod(s);
}

inline RolloutReport read_report(const fs::path& stem) {
    RolloutReport rep;
    const json meta = read_json(fs::path(stem).concat(".json"));
    rep.strategy = meta.value("strategy", "");
    rep.system = meta.value("system", "");
    rep.diffusion = meta.value("diffusion", 0.0);
    rep.train_seed = meta.value("train_seed", std::uint64_t{0});
    rep.ic_seeds = meta.value("ic_seeds", std::vector<std::uint64_t>{});
    rep.diverged_at = meta.value("diverged_at", std::vector<long>{});
    auto is = open_in(fs::path(stem).concat(".csv"));
    std::string line;
    std::getline(is, line);
    const std::size_t n_ics = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) - 2;
    rep.per_ic_log_rmse.assign(n_ics, {});
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != n_ics + 3) throw IoError("malformed report row");
        for (std::size_t i = 0; i < n_ics; ++i) rep.per_ic_log_rmse[i].push_back(parse_double(cells[3 + i]));
    }
    aggregate(rep);
    return rep;
}

} // namespace nse::io

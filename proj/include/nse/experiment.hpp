#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "nse/errors.hpp"
#include "nse/io.hpp"
#include "nse/rollout.hpp"
#include "nse/sampling.hpp"
#include "nse/seeds.hpp"
#include "nse/train.hpp"

namespace nse::experiment {

namespace fs = std::filesystem;
using json = nlohmann::json;

struct Budgets {
    std::size_t pure_stencils = 10240;
    std::size_t mixed_total = 20480;
};

struct TrainSettings {
    double initial_lr = 0.01;
    long epochs = 5000;
    std::size_t batch_size = 0;
    Activation activation = Activation::Tanh;
    int hidden_width = 64;
    int n_residual_blocks = 2;

    EmulatorArchitecture arch() const {
        EmulatorArchitecture a;
        a.hidden_width = hidden_width;
        a.n_residual_blocks = n_residual_blocks;
        a.activation = activation;
        return a;
    }
};

/// The whole experiment grid. Defaults reproduce the reference protocol:
/// 32 x 32 grid, dt = 1e-3, 1000-step runs, 10-step short runs, D sweep
/// {5e-4, 1e-3, 2e-3}, every strategy, 10 evaluation ICs.
struct ExperimentConfig {
    std::vector<PdeKind> systems{PdeKind::AllenCahn, PdeKind::AdvectionDiffusion, PdeKind::Burgers};
    std::vector<double> diffusion_sweep{5e-4, 1e-3, 2e-3};
    std::array<double, 2> velocity{1.0, 1.0};
    AdvectionScheme scheme = AdvectionScheme::Upwind;
    int grid_n = 32;
    double domain_length = 1.0;
    double dt = 1e-3;
    int full_steps = 1000;
    int short_steps = 10;
    int eval_steps = 1000;
    GpSpec gp;  // seed is ignored; IC seeds are derived
    std::vector<Strategy> strategies{kAllStrategies.begin(), kAllStrategies.end()};
    Budgets budgets;
    double lambda = 0.5;
    std::optional<DataRange> random_range;
    std::size_t max_attempts_factor = 100;
    TrainSettings train;
    std::uint64_t master_seed = 0;
    std::vector<std::uint64_t> train_seeds{0};
    int n_eval_ics = 10;
    std::vector<std::uint64_t> eval_seeds;  // empty: derived from the master seed
    fs::path output_dir = "runs/default";

    GridSpec grid() const { return GridSpec(grid_n, domain_length); }
    PdeSystem system(PdeKind kind, double d) const { return PdeSystem::make(kind, d, velocity, scheme); }
};

inline std::string diffusion_label(double d) {
    std::ostringstream os;
    os << std::setprecision(6) << d;
    return os.str();
}

// ---------------------------------------------------------------- seeds

inline std::uint64_t train_ic_seed(const ExperimentConfig& c, PdeKind k) {
    return derive_seed(c.master_seed, "gp/train/" + std::string(to_string(k)));
}

inline std::uint64_t design_seed(const ExperimentConfig& c, PdeKind k, double d, Strategy s) {
    return derive_seed(c.master_seed, "design/" + std::string(to_string(k)) + "/" + diffusion_label(d) + "/" +
                                          std::string(to_string(s)));
}

inline std::uint64_t init_seed(const ExperimentConfig& c, PdeKind k, double d, Strategy s, std::uint64_t train_seed) {
    return derive_seed(c.master_seed, "init/" + std::string(to_string(k)) + "/" + diffusion_label(d) + "/" +
                                          std::string(to_string(s)) + "/" + std::to_string(train_seed));
}

inline std::vector<std::uint64_t> eval_ic_seeds(const ExperimentConfig& c) {
    if (!c.eval_seeds.empty()) return c.eval_seeds;
    std::vector<std::uint64_t> out;
    for (int k = 0; k < c.n_eval_ics; ++k) out.push_back(derive_seed(c.master_seed, "gp/eval/" + std::to_string(k)));
    return out;
}

// ---------------------------------------------------------------- config

inline void validate(const ExperimentConfig& c) {
    if (c.systems.empty()) throw ConfigError("config lists no PDE systems");
    if (c.diffusion_sweep.empty()) throw ConfigError("config lists no diffusion coefficients");
    if (c.strategies.empty()) throw ConfigError("config lists no strategies");
    if (c.train_seeds.empty()) throw ConfigError("config lists no training seeds");
    const GridSpec grid = c.grid();
    if (!(c.dt > 0.0)) throw ConfigError("dt must be positive");
    if (c.full_steps < 1 || c.short_steps < 1 || c.eval_steps < 1) throw ConfigError("step counts must be >= 1");
    c.gp.validate();
    std::set<std::string> labels;
    for (double d : c.diffusion_sweep) {
        for (PdeKind k : c.systems) c.system(k, d).validate();
        if (!labels.insert(diffusion_label(d)).second)
            throw ConfigError("diffusion coefficients " + diffusion_label(d) + " collide after formatting");
    }
    std::set<Strategy> seen;
    for (Strategy s : c.strategies)
        if (!seen.insert(s).second) throw ConfigError("strategy " + std::string(to_string(s)) + " listed twice");
    const std::size_t short_harvest = static_cast<std::size_t>(c.short_steps) * grid.cells();
    if (c.budgets.pure_stencils != short_harvest)
        throw ConfigError("pure budget " + std::to_string(c.budgets.pure_stencils) + " must equal short_steps * N^2 = " +
                          std::to_string(short_harvest));
    if (c.budgets.mixed_total % 2 != 0) throw ConfigError("mixed budget must be even");
    if (!(c.lambda > 0.0 && c.lambda < 1.0)) throw ConfigError("lambda must lie in (0, 1)");
    const auto augment = static_cast<std::size_t>(std::llround(c.lambda * static_cast<double>(c.budgets.mixed_total)));
    const std::size_t base = c.budgets.mixed_total - augment;
    if (base > static_cast<std::size_t>(c.full_steps) * grid.cells())
        throw ConfigError("mixed base share exceeds the full-run harvest");
    if (augment > short_harvest &&
        std::any_of(c.strategies.begin(), c.strategies.end(),
                    [](Strategy s) { return s == Strategy::DsDiffInit || s == Strategy::DsExtend; }))
        throw ConfigError("burst augment share exceeds short_steps * N^2");
    if (c.random_range && !(c.random_range->lo < c.random_range->hi)) throw ConfigError("random_range needs lo < hi");
    if (c.max_attempts_factor < 1) throw ConfigError("max_attempts_factor must be >= 1");
    TrainConfig tc;
    tc.initial_lr = c.train.initial_lr;
    tc.epochs = c.train.epochs;
    tc.validate();
    if (c.train.hidden_width < 1 || c.train.n_residual_blocks < 0) throw ConfigError("invalid network shape");
    if (c.eval_seeds.empty() && c.n_eval_ics < 1) throw ConfigError("need at least one evaluation IC");

    // Evaluation ICs must never coincide with a training IC.
    const std::vector<std::uint64_t> evals = eval_ic_seeds(c);
    std::set<std::uint64_t> train_side(c.train_seeds.begin(), c.train_seeds.end());
    for (PdeKind k : c.systems) {
        train_side.insert(train_ic_seed(c, k));
        for (double d : c.diffusion_sweep)
            train_side.insert(derive_seed(design_seed(c, k, d, Strategy::DsDiffInit), "diff-init-gp"));
    }
    for (std::uint64_t e : evals)
        if (train_side.count(e)) throw ConfigError("evaluation seed " + std::to_string(e) + " collides with a training seed");
}

namespace detail {

template <class T>
T take(json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    T v;
    try {
        v = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config field '") + key + "': " + e.what());
    }
    j.erase(key);
    return v;
}

inline void reject_unknown(const json& j, const std::string& where) {
    if (!j.empty()) throw ConfigError("unknown config field '" + j.begin().key() + "' in " + where);
}

} // namespace detail

/// Reads a config object; missing fields keep their defaults, unknown fields are errors.
inline ExperimentConfig config_from_json(json j) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    ExperimentConfig c;
    using detail::take;
    if (j.contains("systems")) {
        c.systems.clear();
        for (const auto& s : take<std::vector<std::string>>(j, "systems", {})) c.systems.push_back(pde_kind_from_string(s));
    }
    c.diffusion_sweep = take(j, "diffusion_sweep", c.diffusion_sweep);
    c.velocity = take(j, "velocity", c.velocity);
    const std::string scheme = take<std::string>(j, "scheme", "upwind");
    if (scheme != "upwind" && scheme != "central") throw ConfigError("unknown advection scheme '" + scheme + "'");
    c.scheme = scheme == "central" ? AdvectionScheme::Central : AdvectionScheme::Upwind;
    if (j.contains("grid")) {
        json g = take<json>(j, "grid", {});
        c.grid_n = take(g, "n", c.grid_n);
        c.domain_length = take(g, "length", c.domain_length);
        detail::reject_unknown(g, "grid");
    }
    if (j.contains("time")) {
        json t = take<json>(j, "time", {});
        c.dt = take(t, "dt", c.dt);
        c.full_steps = take(t, "full_steps", c.full_steps);
        c.short_steps = take(t, "short_steps", c.short_steps);
        c.eval_steps = take(t, "eval_steps", c.eval_steps);
        detail::reject_unknown(t, "time");
    }
    if (j.contains("gp")) {
        json g = take<json>(j, "gp", {});
        c.gp.mean_value = take(g, "mean_value", c.gp.mean_value);
        c.gp.length_scale = take(g, "length_scale", c.gp.length_scale);
        c.gp.variance = take(g, "variance", c.gp.variance);
        detail::reject_unknown(g, "gp");
    }
    if (j.contains("strategies")) {
        c.strategies.clear();
        for (const auto& s : take<std::vector<std::string>>(j, "strategies", {})) c.strategies.push_back(strategy_from_string(s));
    }
    if (j.contains("budgets")) {
        json b = take<json>(j, "budgets", {});
        c.budgets.pure_stencils = take(b, "pure_stencils", c.budgets.pure_stencils);
        c.budgets.mixed_total = take(b, "mixed_total", c.budgets.mixed_total);
        detail::reject_unknown(b, "budgets");
    }
    c.lambda = take(j, "lambda", c.lambda);
    if (j.contains("random_range")) {
        const auto r = take<std::vector<double>>(j, "random_range", {});
        if (r.size() != 2) throw ConfigError("random_range must be [lo, hi]");
        c.random_range = DataRange{r[0], r[1]};
    }
    c.max_attempts_factor = take(j, "max_attempts_factor", c.max_attempts_factor);
    if (j.contains("train")) {
        json t = take<json>(j, "train", {});
        c.train.initial_lr = take(t, "initial_lr", c.train.initial_lr);
        c.train.epochs = take(t, "epochs", c.train.epochs);
        c.train.batch_size = take(t, "batch_size", c.train.batch_size);
        c.train.activation = activation_from_string(take<std::string>(t, "activation", "tanh"));
        c.train.hidden_width = take(t, "hidden_width", c.train.hidden_width);
        c.train.n_residual_blocks = take(t, "n_residual_blocks", c.train.n_residual_blocks);
        detail::reject_unknown(t, "train");
    }
    c.master_seed = take(j, "master_seed", c.master_seed);
    c.train_seeds = take(j, "train_seeds", c.train_seeds);
    c.n_eval_ics = take(j, "n_eval_ics", c.n_eval_ics);
    c.eval_seeds = take(j, "eval_seeds", c.eval_seeds);
    c.output_dir = take<std::string>(j, "output_dir", c.output_dir.string());
    detail::reject_unknown(j, "config");
    validate(c);
    return c;
}

inline ExperimentConfig load_config(const fs::path& path) {
    json j;
    try {
        j = io::read_json(path);
    } catch (const IoError& e) {
        // An unreadable config is a configuration problem for the caller.
        throw ConfigError(e.what());
    }
    return config_from_json(std::move(j));
}

/// Canonical JSON of every field that influences results (not output_dir).
inline json canonical_json(const ExperimentConfig& c) {
    json systems = json::array();
    for (PdeKind k : c.systems) systems.push_back(to_string(k));
    json strategies = json::array();
    for (Strategy s : c.strategies) strategies.push_back(to_string(s));
    return {{"systems", systems},
            {"diffusion_sweep", c.diffusion_sweep},
            {"velocity", c.velocity},
            {"scheme", c.scheme == AdvectionScheme::Central ? "central" : "upwind"},
            {"grid", {{"n", c.grid_n}, {"length", c.domain_length}}},
            {"time", {{"dt", c.dt}, {"full_steps", c.full_steps}, {"short_steps", c.short_steps}, {"eval_steps", c.eval_steps}}},
            {"gp", {{"mean_value", c.gp.mean_value}, {"length_scale", c.gp.length_scale}, {"variance", c.gp.variance}}},
            {"strategies", strategies},
            {"budgets", {{"pure_stencils", c.budgets.pure_stencils}, {"mixed_total", c.budgets.mixed_total}}},
            {"lambda", c.lambda},
            {"random_range", c.random_range ? json{c.random_range->lo, c.random_range->hi} : json(nullptr)},
            {"max_attempts_factor", c.max_attempts_factor},
            {"train",
             {{"initial_lr", c.train.initial_lr},
              {"epochs", c.train.epochs},
              {"batch_size", c.train.batch_size},
              {"activation", to_string(c.train.activation)},
              {"hidden_width", c.train.hidden_width},
              {"n_residual_blocks", c.train.n_residual_blocks}}},
            {"master_seed", c.master_seed},
            {"train_seeds", c.train_seeds},
            {"eval_seeds", eval_ic_seeds(c)}};
}

inline std::string config_hash(const ExperimentConfig& c) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << fnv1a(canonical_json(c).dump());
    return os.str();
}

// ---------------------------------------------------------------- layout

struct Cell {
    PdeKind system;
    double diffusion;
};

inline fs::path cell_dir(const ExperimentConfig& c, const Cell& cell) {
    return c.output_dir / std::string(to_string(cell.system)) / ("D=" + diffusion_label(cell.diffusion));
}
inline fs::path full_run_stem(const ExperimentConfig& c, const Cell& cell) { return cell_dir(c, cell) / "trajectories" / "full"; }
inline fs::path short_run_stem(const ExperimentConfig& c, const Cell& cell) { return cell_dir(c, cell) / "trajectories" / "short"; }
inline fs::path dataset_path(const ExperimentConfig& c, const Cell& cell, Strategy s) {
    return cell_dir(c, cell) / "datasets" / (std::string(to_string(s)) + ".nsed");
}
inline fs::path model_path(const ExperimentConfig& c, const Cell& cell, Strategy s, std::uint64_t seed) {
    return cell_dir(c, cell) / "models" / std::string(to_string(s)) / ("seed=" + std::to_string(seed) + ".nsem");
}
inline fs::path training_log_path(const ExperimentConfig& c, const Cell& cell, Strategy s, std::uint64_t seed) {
    return cell_dir(c, cell) / "models" / std::string(to_string(s)) / ("seed=" + std::to_string(seed) + "_log.csv");
}
inline fs::path report_stem(const ExperimentConfig& c, const Cell& cell, Strategy s, std::uint64_t seed) {
    return cell_dir(c, cell) / "reports" / std::string(to_string(s)) / ("seed=" + std::to_string(seed));
}
inline fs::path summary_path(const ExperimentConfig& c, PdeKind k) {
    return c.output_dir / ("summary_" + std::string(to_string(k)) + ".csv");
}

inline std::vector<Cell> cells(const ExperimentConfig& c) {
    std::vector<Cell> out;
    for (PdeKind k : c.systems)
        for (double d : c.diffusion_sweep) out.push_back({k, d});
    return out;
}

// ---------------------------------------------------------------- jobs

enum class Stage { Simulate, BuildDatasets, Train, Evaluate, Report };

inline std::string_view to_string(Stage s) {
    switch (s) {
    case Stage::Simulate: return "simulate";
    case Stage::BuildDatasets: return "build-datasets";
    case Stage::Train: return "train";
    case Stage::Evaluate: return "evaluate";
    case Stage::Report: return "report";
    }
    return "?";
}

struct Job {
    Stage stage;
    Cell cell;
    std::optional<Strategy> strategy;
    std::uint64_t train_seed = 0;
    fs::path output;  // the file whose presence marks the job as done
    json seeds;

    std::string label() const {
        std::ostringstream os;
        os << to_string(stage) << ' ' << to_string(cell.system) << " D=" << diffusion_label(cell.diffusion);
        if (strategy) os << ' ' << to_string(*strategy);
        if (stage == Stage::Train || stage == Stage::Evaluate) os << " seed=" << train_seed;
        return os.str();
    }
};

inline std::vector<Job> plan(const ExperimentConfig& c, Stage stage) {
    std::vector<Job> jobs;
    for (const Cell& cell : cells(c)) {
        if (stage == Stage::Simulate) {
            jobs.push_back({stage, cell, std::nullopt, 0, fs::path(full_run_stem(c, cell)).concat(".json"),
                            {{"gp_train", train_ic_seed(c, cell.system)}}});
            continue;
        }
        if (stage == Stage::Report) continue;
        for (Strategy s : c.strategies) {
            const json design{{"design", design_seed(c, cell.system, cell.diffusion, s)},
                              {"gp_train", train_ic_seed(c, cell.system)}};
            if (stage == Stage::BuildDatasets) {
                jobs.push_back({stage, cell, s, 0, dataset_path(c, cell, s), design});
                continue;
            }
            for (std::uint64_t ts : c.train_seeds) {
                json seeds = design;
                seeds["train_seed"] = ts;
                seeds["init"] = init_seed(c, cell.system, cell.diffusion, s, ts);
                if (stage == Stage::Train) {
                    jobs.push_back({stage, cell, s, ts, model_path(c, cell, s, ts), seeds});
                } else {
                    seeds["eval"] = eval_ic_seeds(c);
                    jobs.push_back({stage, cell, s, ts, fs::path(report_stem(c, cell, s, ts)).concat(".json"), seeds});
                }
            }
        }
    }
    if (stage == Stage::Report)
        for (PdeKind k : c.systems) jobs.push_back({stage, {k, 0.0}, std::nullopt, 0, summary_path(c, k), json::object()});
    return jobs;
}

/// Wraps a failure with the (system, D, strategy) context of its job.
class JobError : public Error {
public:
    JobError(const std::string& context, std::exception_ptr cause, const std::string& what)
        : Error(context + ": " + what), cause_(std::move(cause)) {}
    const std::exception_ptr& cause() const noexcept { return cause_; }

private:
    std::exception_ptr cause_;
};

/// Exit status for an exception: 1 config, 2 numerical, 3 I/O.
inline int exit_code_for(const std::exception_ptr& e) {
    try {
        std::rethrow_exception(e);
    } catch (const JobError& j) {
        return exit_code_for(j.cause());
    } catch (const ConfigError&) {
        return 1;
    } catch (const IoError&) {
        return 3;
    } catch (const fs::filesystem_error&) {
        return 3;
    } catch (const Error&) {
        return 2;
    } catch (const json::exception&) {
        return 3;
    } catch (...) {
        return 2;
    }
}

struct RunOptions {
    int jobs = 1;
    bool force = false;
    bool dry_run = false;
    std::ostream* log = nullptr;
    std::ostream* warn = nullptr;
};

namespace detail {

inline void say(const RunOptions& o, const std::string& line) {
    if (o.log) *o.log << line << std::endl;
}

/// Runs `fn(k)` for k in [0, n) on up to `workers` threads; the first failure
/// (in job order) is rethrown after all workers stop.
inline void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    auto worker = [&] {
        for (std::size_t k = next++; k < n && !failed; k = next++) {
            try {
                fn(k);
            } catch (...) {
                errors[k] = std::current_exception();
                failed = true;
            }
        }
    };
    const int count = std::max(1, std::min<int>(workers, static_cast<int>(n)));
    if (count == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int t = 0; t < count; ++t) pool.emplace_back(worker);
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

inline std::string describe(const std::exception_ptr& e) {
    try {
        std::rethrow_exception(e);
    } catch (const std::exception& x) {
        return x.what();
    } catch (...) {
        return "unknown error";
    }
}

inline DesignContext design_context(const ExperimentConfig& c, const Cell& cell, Strategy s) {
    DesignContext ctx;
    ctx.system = c.system(cell.system, cell.diffusion);
    ctx.grid = c.grid();
    ctx.dt = c.dt;
    ctx.short_steps = c.short_steps;
    ctx.gp = c.gp;
    ctx.gp.seed = train_ic_seed(c, cell.system);
    ctx.admissible_range = c.random_range;
    ctx.lambda = c.lambda;
    ctx.max_attempts_factor = c.max_attempts_factor;
    ctx.seed = design_seed(c, cell.system, cell.diffusion, s);
    return ctx;
}

inline Trajectory load_run(const fs::path& stem, const char* what) {
    if (!fs::exists(fs::path(stem).concat(".json")))
        throw IoError(std::string(what) + " missing at '" + stem.string() + "'; run the simulate stage first");
    return io::read_trajectory(stem).trajectory;
}

inline void run_simulate(const ExperimentConfig& c, const Job& job, const RunOptions& o) {
    const PdeSystem sys = c.system(job.cell.system, job.cell.diffusion);
    GpSpec gp = c.gp;
    gp.seed = train_ic_seed(c, job.cell.system);
    const Field2D u0 = initial_condition(sys, gp, c.grid());
    double scale = 0.0;
    for (double v : u0.values) scale = std::max(scale, std::abs(v));
    const StabilityReport st = stability(sys, c.grid(), c.dt, scale);
    if (!st.stable() && o.warn) *o.warn << "warning: " << job.label() << ": explicit step may be unstable: " << st.message() << '\n';
    const TimeSpec full_time{c.dt, c.full_steps, 0.0};
    const TimeSpec short_time{c.dt, c.short_steps, 0.0};
    const Trajectory full = simulate(u0, sys, full_time);
    const Trajectory shrt = simulate(u0, sys, short_time);
    json seeds = job.seeds;
    seeds["config_hash"] = config_hash(c);
    io::write_trajectory(short_run_stem(c, job.cell), shrt, sys, short_time, seeds);
    io::write_trajectory(full_run_stem(c, job.cell), full, sys, full_time, seeds);
}

inline void run_build(const ExperimentConfig& c, const Job& job) {
    const Strategy s = *job.strategy;
    const DesignContext ctx = design_context(c, job.cell, s);
    StencilDataset ds;
    std::size_t expect = 0;
    if (is_mixed(s)) {
        const Trajectory full = load_run(full_run_stem(c, job.cell), "full-run trajectory");
        ds = build_mixed(s, full, ctx, c.budgets.mixed_total / 2);
        expect = c.budgets.mixed_total;
    } else {
        const Trajectory shrt = load_run(short_run_stem(c, job.cell), "short-run trajectory");
        ds = build_pure(s, shrt, ctx, c.budgets.pure_stencils);
        expect = c.budgets.pure_stencils;
    }
    if (ds.count() != expect)
        throw ShapeMismatch("dataset has " + std::to_string(ds.count()) + " samples, expected " + std::to_string(expect));
    json seeds = job.seeds;
    seeds["config_hash"] = config_hash(c);
    seeds["strategy"] = to_string(s);
    io::write_dataset(job.output, ds, seeds);
}

inline void run_train(const ExperimentConfig& c, const Job& job) {
    const Strategy s = *job.strategy;
    const fs::path data = dataset_path(c, job.cell, s);
    if (!fs::exists(data)) throw IoError("dataset missing at '" + data.string() + "'; run build-datasets first");
    const StencilDataset ds = io::read_dataset(data).dataset;
    TrainConfig tc;
    tc.initial_lr = c.train.initial_lr;
    tc.epochs = c.train.epochs;
    tc.batch_size = c.train.batch_size;
    tc.seed = job.seeds.at("init").get<std::uint64_t>();
    const TrainResult r = train(ds, c.train.arch(), tc);
    io::write_training_log(training_log_path(c, job.cell, s, job.train_seed), r.log);
    json extra{{"config_hash", config_hash(c)},
               {"seeds", job.seeds},
               {"strategy", to_string(s)},
               {"system", to_string(job.cell.system)},
               {"diffusion", job.cell.diffusion},
               {"epochs", tc.epochs},
               {"final_mse_normalized", r.log.final_mse_normalized},
               {"final_mse_original", r.log.final_mse_original}};
    io::write_model(job.output, r.emulator, extra);
}

inline void run_evaluate(const ExperimentConfig& c, const Job& job) {
    const Strategy s = *job.strategy;
    const fs::path model = model_path(c, job.cell, s, job.train_seed);
    if (!fs::exists(model)) throw IoError("model missing at '" + model.string() + "'; run train first");
    const TrainedEmulator emu = io::read_model(model).emulator;
    const PdeSystem sys = c.system(job.cell.system, job.cell.diffusion);
    const std::vector<std::uint64_t> evals = eval_ic_seeds(c);
    RolloutReport rep = evaluate_strategy(emu, sys, c.grid(), c.gp, evals, TimeSpec{c.dt, c.eval_steps, 0.0});
    rep.strategy = std::string(to_string(s));
    rep.train_seed = job.train_seed;
    io::write_report(report_stem(c, job.cell, s, job.train_seed), rep,
                     {{"config_hash", config_hash(c)}, {"seeds", job.seeds}});
}

} // namespace detail

/// Writes summary_<system>.csv (rows: strategy, columns: D, cell: final-step
/// mean log10-RMSE averaged over training seeds) and summary_long.csv.
inline void run_report(const ExperimentConfig& c) {
    std::vector<std::string> long_rows;
    for (PdeKind k : c.systems) {
        auto os = io::open_out(summary_path(c, k));
        os << "strategy";
        for (double d : c.diffusion_sweep) os << ",D=" << diffusion_label(d);
        os << '\n';
        for (Strategy s : c.strategies) {
            os << to_string(s);
            for (double d : c.diffusion_sweep) {
                const Cell cell{k, d};
                double sum = 0.0;
                std::size_t n = 0;
                for (std::uint64_t ts : c.train_seeds) {
                    const fs::path stem = report_stem(c, cell, s, ts);
                    if (!fs::exists(fs::path(stem).concat(".json")))
                        throw IoError("report missing at '" + stem.string() + "'; run evaluate first");
                    const RolloutReport rep = io::read_report(stem);
                    std::size_t diverged = 0;
                    for (long x : rep.diverged_at) diverged += x >= 0;
                    long_rows.push_back(std::string(to_string(k)) + ',' + diffusion_label(d) + ',' +
                                        std::string(to_string(s)) + ',' + std::to_string(ts) + ',' +
                                        io::fmt_double(rep.final_mean()) + ',' + std::to_string(diverged));
                    sum += rep.final_mean();
                    ++n;
                }
                os << ',' << io::fmt_double(sum / static_cast<double>(n));
            }
            os << '\n';
        }
        if (!os) throw IoError("failed writing summary CSV");
    }
    auto os = io::open_out(c.output_dir / "summary_long.csv");
    os << "system,D,strategy,train_seed,final_mean_log_rmse,diverged_ics\n";
    for (const auto& r : long_rows) os << r << '\n';
    if (!os) throw IoError("failed writing summary_long.csv");
}

/// manifest.json: config hash, canonical config, and every artifact with its seeds.
inline void write_manifest(const ExperimentConfig& c) {
    json artifacts = json::array();
    for (Stage st : {Stage::Simulate, Stage::BuildDatasets, Stage::Train, Stage::Evaluate, Stage::Report})
        for (const Job& j : plan(c, st))
            artifacts.push_back({{"stage", to_string(st)},
                                 {"job", j.label()},
                                 {"path", fs::relative(j.output, c.output_dir).generic_string()},
                                 {"exists", fs::exists(j.output)},
                                 {"seeds", j.seeds}});
    json m{{"format", "nse-manifest-v1"},
           {"config_hash", config_hash(c)},
           {"config", canonical_json(c)},
           {"seed_derivation", "splitmix64(master_seed XOR fnv1a(label))"},
           {"artifacts", artifacts}};
    io::write_json(c.output_dir / "manifest.json", m);
}

/// Runs (or, with dry_run, prints) one stage. Existing outputs are skipped
/// unless `force`. Returns the number of jobs executed.
inline std::size_t run_stage(const ExperimentConfig& c, Stage stage, const RunOptions& o) {
    validate(c);
    const std::vector<Job> jobs = plan(c, stage);
    std::vector<const Job*> todo;
    for (const Job& j : jobs) {
        const bool done = stage != Stage::Report && fs::exists(j.output);
        if (o.dry_run) detail::say(o, std::string(done && !o.force ? "[skip] " : "[run]  ") + j.label() + " -> " + j.output.string());
        if (!done || o.force) todo.push_back(&j);
    }
    if (o.dry_run) return 0;
    const fs::path manifest = c.output_dir / "manifest.json";
    if (!o.force && fs::exists(manifest)) {
        const std::string previous = io::read_json(manifest).value("config_hash", std::string());
        if (previous != config_hash(c))
            throw ConfigError("output directory '" + c.output_dir.string() + "' holds results of config " + previous +
                              ", not " + config_hash(c) + "; pass --force or choose another output directory");
    }
    if (stage == Stage::Report) {
        run_report(c);
        detail::say(o, "report: wrote " + std::to_string(c.systems.size()) + " summary tables");
        write_manifest(c);
        return todo.size();
    }
    std::mutex log_mutex;
    std::atomic<std::size_t> finished{0};
    detail::parallel_for(todo.size(), o.jobs, [&](std::size_t k) {
        const Job& j = *todo[k];
        try {
            switch (stage) {
            case Stage::Simulate: detail::run_simulate(c, j, o); break;
            case Stage::BuildDatasets: detail::run_build(c, j); break;
            case Stage::Train: detail::run_train(c, j); break;
            case Stage::Evaluate: detail::run_evaluate(c, j); break;
            case Stage::Report: break;
            }
        } catch (...) {
            const auto e = std::current_exception();
            throw JobError(j.label(), e, detail::describe(e));
        }
        std::lock_guard lock(log_mutex);
        detail::say(o, "[" + std::to_string(++finished) + "/" + std::to_string(todo.size()) + "] " + j.label());
    });
    write_manifest(c);
    return todo.size();
}

inline constexpr std::array<Stage, 5> kPipeline{Stage::Simulate, Stage::BuildDatasets, Stage::Train, Stage::Evaluate,
                                                Stage::Report};

inline std::size_t run_full(const ExperimentConfig& c, const RunOptions& o) {
    std::size_t n = 0;
    for (Stage s : kPipeline) n += run_stage(c, s, o);
    return n;
}

} // namespace nse::experiment

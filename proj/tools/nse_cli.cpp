// Command-line driver for the emulator workbench.
//
//   nse_cli <simulate|build-datasets|train|evaluate|report|full> --config cfg.json
//           [--jobs N] [--force] [--dry-run] [--seed U64] [--output-dir DIR]
//
// Exit codes: 0 success, 1 config error, 2 numerical failure, 3 I/O error.

#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "nse/experiment.hpp"

namespace ex = nse::experiment;

int main(int argc, char** argv) {
    CLI::App app{"Neural stencil emulator workbench"};
    app.require_subcommand(1, 1);

    std::string config_path;
    int jobs = 1;
    bool force = false;
    bool dry_run = false;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> output_dir;

    const std::map<std::string, std::optional<ex::Stage>> commands{
        {"simulate", ex::Stage::Simulate},
        {"build-datasets", ex::Stage::BuildDatasets},
        {"train", ex::Stage::Train},
        {"evaluate", ex::Stage::Evaluate},
        {"report", ex::Stage::Report},
        {"full", std::nullopt},
    };
    const std::map<std::string, std::string> blurbs{
        {"simulate", "Run the full and short reference simulations"},
        {"build-datasets", "Build one training dataset per strategy"},
        {"train", "Train one emulator per dataset and training seed"},
        {"evaluate", "Roll out every model on the evaluation ICs"},
        {"report", "Write the summary tables"},
        {"full", "Run every stage in order"},
    };
    for (const auto& [name, stage] : commands) {
        CLI::App* sub = app.add_subcommand(name, blurbs.at(name));
        sub->add_option("--config", config_path, "Experiment config (JSON)")->required();
        sub->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
        sub->add_flag("--force", force, "Recompute outputs that already exist");
        sub->add_flag("--dry-run", dry_run, "Print the plan without running it");
        sub->add_option("--seed", seed, "Override the master seed");
        sub->add_option("--output-dir", output_dir, "Override the output directory");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }
    const std::string command = app.get_subcommands().front()->get_name();

    try {
        ex::ExperimentConfig cfg = ex::load_config(config_path);
        if (seed) cfg.master_seed = *seed;
        if (output_dir) cfg.output_dir = *output_dir;
        ex::validate(cfg);

        ex::RunOptions opts;
        opts.jobs = jobs;
        opts.force = force;
        opts.dry_run = dry_run;
        opts.log = &std::cout;
        opts.warn = &std::cerr;

        std::cout << "config " << config_path << " hash " << ex::config_hash(cfg) << " -> " << cfg.output_dir.string()
                  << '\n';
        const auto stage = commands.at(command);
        const std::size_t ran = stage ? ex::run_stage(cfg, *stage, opts) : ex::run_full(cfg, opts);
        if (!dry_run) std::cout << command << ": " << ran << " job(s) executed\n";
        return 0;
    } catch (...) {
        const auto e = std::current_exception();
        try {
            std::rethrow_exception(e);
        } catch (const std::exception& x) {
            std::cerr << "error: " << x.what() << '\n';
        } catch (...) {
            std::cerr << "error: unknown failure\n";
        }
        return ex::exit_code_for(e);
    }
}

// ensemblab command-line driver: batch simulate / analyze / build-ensemble /
// report workflows emitting plot-ready tables.

#include <cstdio>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ensemblab/cli.hpp"
#include "ensemblab/data_io.hpp"

namespace {

int finish(const ensemblab::cli::CommandOutcome& outcome) {
    if (outcome.exit_code == 0) {
        std::printf("%s\n", outcome.summary.c_str());
        for (const std::string& a : outcome.artifacts) std::printf("  wrote %s\n", a.c_str());
    } else {
        std::fprintf(stderr, "%s\n", outcome.summary.c_str());
    }
    return outcome.exit_code;
}

struct CommonOpts {
    std::string config_file;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
    bool overwrite = false;
};

ensemblab::RunConfig load_with_overrides(const CommonOpts& opts) {
    ensemblab::RunConfig config = ensemblab::load_run_config(opts.config_file);
    if (!opts.out_dir.empty()) config.out_dir = opts.out_dir;
    if (opts.seed) {
        config.seed = *opts.seed;
        config.seed_source = "flag";
    }
    if (opts.threads) config.threads = *opts.threads;
    return config;
}

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_file, "JSON run configuration")->required();
    cmd->add_option("--out", opts.out_dir, "output directory (overrides config)");
    cmd->add_option("--seed", opts.seed, "master seed (overrides config and " +
                                             std::string(ensemblab::kSeedEnvVar) + ")");
    cmd->add_option("--threads", opts.threads, "cap on worker threads");
    cmd->add_flag("--overwrite", opts.overwrite, "replace a non-empty output directory");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"ensemblab: sliding-window vs strobed-ensemble Monte Carlo laboratory"};
    app.require_subcommand(1);

    CommonOpts sim_opts, ana_opts, build_opts;
    std::string report_dir;

    CLI::App* sim = app.add_subcommand("simulate", "generate and persist a path ensemble");
    add_common(sim, sim_opts);
    CLI::App* ana = app.add_subcommand(
        "analyze", "sliding vs ensemble estimator comparison tables for a bundle or process");
    add_common(ana, ana_opts);
    CLI::App* build = app.add_subcommand(
        "build-ensemble", "segment a periodic series into an ensemble of runs");
    add_common(build, build_opts);
    CLI::App* rep = app.add_subcommand("report", "render plain-text + CSV views of a bundle");
    rep->add_option("bundle", report_dir, "bundle directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (sim->parsed())
            return finish(ensemblab::cli::cmd_simulate(load_with_overrides(sim_opts),
                                                       sim_opts.overwrite));
        if (ana->parsed())
            return finish(ensemblab::cli::cmd_analyze(load_with_overrides(ana_opts),
                                                      ana_opts.overwrite));
        if (build->parsed())
            return finish(ensemblab::cli::cmd_build_ensemble(load_with_overrides(build_opts),
                                                             build_opts.overwrite));
        if (rep->parsed()) return finish(ensemblab::cli::cmd_report(report_dir));
    } catch (const ensemblab::rejected_input& e) {
        std::fprintf(stderr, "input error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 1;
}

// billiardlab: staged pipeline from classical billiard dynamics through
// Helmholtz eigenstates to Husimi localization measures and level-spacing
// statistics.

#include <CLI11.hpp>
#include <cstdio>
#include <exception>
#include <string>

#include "billiard/errors.hpp"
#include "billiard/pipeline.hpp"

namespace {

struct GlobalArgs {
    std::string config_path;
    std::string cache_dir;
    long seed = -1;
    int jobs = 0;
};

billiard::ExperimentConfig make_config(const GlobalArgs& args) {
    billiard::ExperimentConfig cfg;
    if (!args.config_path.empty()) {
        cfg = billiard::ExperimentConfig::from_file(args.config_path);
    }
    if (!args.cache_dir.empty()) cfg.cache_dir = args.cache_dir;
    if (args.seed >= 0) cfg.seed = static_cast<uint64_t>(args.seed);
    if (args.jobs > 0) cfg.jobs = args.jobs;
    return cfg;
}

int run_one_stage(const GlobalArgs& args, billiard::Stage stage) {
    const auto cfg = make_config(args);
    const auto report = billiard::run_stage(cfg, stage);
    std::printf("%s: %d computed, %d cache hits, %.1f s\n", billiard::stage_name(stage),
                report.computed, report.cache_hits, report.wall_seconds);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"quantum billiard localization laboratory"};
    app.require_subcommand(1);

    GlobalArgs args;
    app.add_option("--config", args.config_path, "experiment config file (key = value)");
    app.add_option("--cache-dir", args.cache_dir, "cache directory override");
    app.add_option("--seed", args.seed, "RNG seed override");
    app.add_option("--jobs", args.jobs, "worker thread count");

    // one subcommand per pipeline stage
    for (const char* name : {"classical", "spectrum", "husimi", "separate", "measures", "fit",
                             "report"}) {
        app.add_subcommand(name, std::string("run the ") + name + " stage");
    }

    // ad-hoc spectral window flags on the spectrum subcommand
    auto* spectrum_cmd = app.get_subcommand("spectrum");
    double opt_lambda = -1.0, opt_k_lo = -1.0, opt_k_hi = -1.0;
    std::string opt_parity;
    spectrum_cmd->add_option("--lambda", opt_lambda, "single billiard shape parameter");
    spectrum_cmd->add_option("--k-lo", opt_k_lo, "window lower edge");
    spectrum_cmd->add_option("--k-hi", opt_k_hi, "window upper edge");
    spectrum_cmd->add_option("--parity", opt_parity, "odd or even");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        auto cfg = make_config(args);
        const auto* sub = app.get_subcommands().front();
        const auto stage = billiard::stage_from_name(sub->get_name());

        if (stage == billiard::Stage::spectrum &&
            (opt_lambda > 0.0 || opt_k_lo > 0.0 || opt_k_hi > 0.0 || !opt_parity.empty())) {
            if (opt_lambda < 0.0 || opt_k_lo < 0.0 || opt_k_hi < 0.0) {
                throw billiard::ConfigError(
                    "spectrum: --lambda, --k-lo and --k-hi must be given together");
            }
            cfg.lambdas = {opt_lambda};
            cfg.k_centers = {0.5 * (opt_k_lo + opt_k_hi)};
            cfg.window_half_widths = {0.5 * (opt_k_hi - opt_k_lo)};
            if (!opt_parity.empty()) {
                cfg.parity = opt_parity == "even" ? billiard::Parity::even
                                                  : billiard::Parity::odd;
            }
            cfg.fit_pool_parities = false;
        }
        const auto report = billiard::run_stage(cfg, stage);
        std::printf("%s: %d computed, %d cache hits, %.1f s\n", billiard::stage_name(stage),
                    report.computed, report.cache_hits, report.wall_seconds);
        return 0;
    } catch (const billiard::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const billiard::MissingStageError& e) {
        std::fprintf(stderr, "missing stage: %s\n", e.what());
        return 3;
    } catch (const billiard::NumericalError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    }
}

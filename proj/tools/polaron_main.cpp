#include <CLI11.hpp>
#include <cstdio>
#include <exception>

#include "polaron/experiments.hpp"

// Subcommands: pekar-min, alpha-sweep, localize-check, husimi.
// Exit codes: 0 success, 2 invalid configuration, 3 solver non-convergence.
// Capacity overruns inside a sweep or ladder mark the affected row and still
// exit 0 with partial results.

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_override;
};

void add_common(CLI::App* sub, CommonArgs& args) {
    sub->add_option("--config", args.config_path, "experiment configuration file")->required();
    sub->add_option("--out", args.out_override, "output directory (overrides the config)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"polaron: a quasi-classical polaron laboratory"};
    app.require_subcommand(1);

    CommonArgs args;
    CLI::App* pekar = app.add_subcommand("pekar-min", "minimize the Pekar functional");
    CLI::App* sweep = app.add_subcommand("alpha-sweep", "ground states along the alpha ladder");
    CLI::App* localize = app.add_subcommand("localize-check", "localization identities and ladders");
    CLI::App* husimi = app.add_subcommand("husimi", "one-mode anti-Wick (Husimi) marginals");
    for (CLI::App* sub : {pekar, sweep, localize, husimi}) add_common(sub, args);

    CLI11_PARSE(app, argc, argv);

    polaron::ExperimentConfig config;
    try {
        config = polaron::ExperimentConfig::parse_file(args.config_path);
    } catch (const std::exception& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return 2;
    }
    const std::filesystem::path out =
        args.out_override.empty() ? std::filesystem::path(config.output_dir)
                                  : std::filesystem::path(args.out_override);

    try {
        if (pekar->parsed()) {
            polaron::PekarRun run = polaron::run_pekar(config, out);
            std::printf("pekar-min: energy=%.12g residual=%.3g iterations=%d %s\n",
                        run.result.energy, run.result.gradient_residual, run.result.iterations,
                        run.result.converged ? "converged" : "NOT CONVERGED");
            return run.result.converged ? 0 : 3;
        }
        if (sweep->parsed()) {
            polaron::SweepRecord record = polaron::run_sweep(config, out);
            for (const auto& row : record.rows) {
                if (row.ok)
                    std::printf("alpha=%-8.5g E=%.10g trial=%.10g trace_dist=%.3g\n", row.alpha,
                                row.energy_alpha, row.energy_trial, row.trace_distance);
                else
                    std::printf("alpha=%-8.5g SKIPPED: %s\n", row.alpha, row.error.c_str());
            }
            std::printf("wrote %s\n", record.csv_path.string().c_str());
            return 0;
        }
        if (localize->parsed()) {
            polaron::LocalizationRun run = polaron::run_localization(config, out);
            std::printf("localize-check: particle=%.3g field=%.3g sigma=%.3g trace=%.3g%s\n",
                        run.identities.particle_deviation, run.identities.field_deviation,
                        run.identities.sigma_deviation, run.identities.trace_deviation,
                        run.any_capacity_exceeded ? " (capacity rows flagged)" : "");
            return 0;
        }
        if (husimi->parsed()) {
            polaron::HusimiRun run = polaron::run_husimi(config, out);
            for (const auto& row : run.rows)
                std::printf("alpha=%-8.5g husimi mass near prediction=%.6f total=%.6f%s\n",
                            row.alpha, row.mass_near_prediction, row.total_mass,
                            row.coarse_warning ? " (coarse grid)" : "");
            return 0;
        }
    } catch (const polaron::ConfigError& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return 2;
    } catch (const polaron::ValidationError& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return 2;
    } catch (const polaron::ConfigurationError& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return 2;
    } catch (const polaron::ConvergenceError& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return 3;
    } catch (const std::exception& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return 1;
    }
    return 0;
}

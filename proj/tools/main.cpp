// cupcur: cup-curriculum training and experiment harness.
//
// Subcommands:
//   train     one cup-curriculum run per seed for a single strategy
//   baseline  early-stopping or IMP baseline runs
//   grid      strategy sweep (plus baselines), optionally in parallel
//   report    aggregate run summaries into tables with significance tests
//   plotdata  tidy per-epoch CSV for plotting

#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cupcur/curriculum.hpp"
#include "cupcur/experiment.hpp"

namespace {

using namespace cupcur;

ExperimentSpec load_spec(const std::string& config_path, const std::string& out_override,
                         const std::vector<std::uint64_t>& seed_override) {
    ExperimentSpec spec = config_path.empty() ? ExperimentSpec{} : ExperimentSpec::from_file(config_path);
    if (!out_override.empty()) spec.out_dir = out_override;
    if (!seed_override.empty()) spec.seeds = seed_override;
    return spec;
}

std::vector<Strategy> parse_strategies(const std::string& csv) {
    std::vector<Strategy> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(Strategy::parse(item));
    }
    return out;
}

std::vector<Strategy> full_grid() {
    std::vector<Strategy> out;
    for (const auto r : {Rewinding::Initial, Rewinding::Warm, Rewinding::Best, Rewinding::No}) {
        for (const auto i : {Initialization::Original, Initialization::Random, Initialization::Old,
                             Initialization::Top}) {
            for (const auto u : {UpdateScheme::Freezing, UpdateScheme::Identical, UpdateScheme::Dynamic}) {
                out.push_back(Strategy{r, i, u});
            }
        }
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cup-curriculum trainer and experiment harness"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::vector<std::uint64_t> seeds;
    app.add_option("--config", config_path, "experiment config (JSON)")->check(CLI::ExistingFile);
    app.add_option("--out", out_dir, "output directory (overrides config)");
    app.add_option("--seeds", seeds, "seeds (overrides config)");

    auto* train = app.add_subcommand("train", "run the cup curriculum for one strategy");
    std::string strategy_str;
    train->add_option("--strategy", strategy_str, "rewinding:initialization:update");

    auto* baseline = app.add_subcommand("baseline", "run a baseline");
    std::string kind = "early_stop";
    baseline->add_option("--kind", kind, "early_stop | imp")
        ->check(CLI::IsMember({"early_stop", "imp"}));

    auto* grid = app.add_subcommand("grid", "strategy sweep with baselines");
    std::string strategies_csv;
    bool all_strategies = false;
    int parallel = 1;
    grid->add_option("--strategies", strategies_csv, "comma-separated strategy triples");
    grid->add_flag("--full", all_strategies, "sweep all 48 scheme combinations");
    grid->add_option("--parallel", parallel, "concurrent runs")->check(CLI::PositiveNumber);

    auto* report = app.add_subcommand("report", "aggregate summaries under --out");
    auto* plotdata = app.add_subcommand("plotdata", "emit per-epoch CSV from runs under --out");
    std::string csv_path;
    plotdata->add_option("--csv", csv_path, "output CSV path (default <out>/plotdata.csv)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (report->parsed()) {
            const std::string dir = out_dir.empty() ? "out" : out_dir;
            const GridReport rep = build_report(dir);
            std::cout << format_report(rep);
            return rep.any_failed ? EXIT_FAILURE : EXIT_SUCCESS;
        }
        if (plotdata->parsed()) {
            const std::string dir = out_dir.empty() ? "out" : out_dir;
            if (csv_path.empty()) csv_path = dir + "/plotdata.csv";
            emit_plot_data(dir, csv_path);
            std::cout << "wrote " << csv_path << "\n";
            return EXIT_SUCCESS;
        }

        ExperimentSpec spec = load_spec(config_path, out_dir, seeds);
        ExperimentRunner runner(std::move(spec));
        bool any_failed = false;

        if (train->parsed()) {
            const Strategy strategy = strategy_str.empty() ? runner.spec().curriculum.strategy()
                                                           : Strategy::parse(strategy_str);
            for (const auto seed : runner.spec().seeds) {
                std::cout << "cup run, strategy " << strategy.str() << ", seed " << seed << "\n";
                const RunSummary s = runner.run_cup(seed, strategy);
                if (s.ok) {
                    std::cout << "  best val loss " << s.best_val_loss << " (perplexity "
                              << perplexity(s.best_val_loss) << ")\n";
                } else {
                    any_failed = true;
                }
            }
        } else if (baseline->parsed()) {
            const auto results = kind == "imp" ? runner.run_imp_baseline()
                                               : runner.run_early_stopping_baseline();
            double best = std::numeric_limits<double>::infinity();
            for (const auto& s : results) {
                if (!s.ok) {
                    any_failed = true;
                    continue;
                }
                best = std::min(best, s.best_val_loss);
            }
            std::cout << kind << " best val loss: " << best << "\n";
        } else if (grid->parsed()) {
            std::vector<Strategy> strategies;
            if (all_strategies) {
                strategies = full_grid();
            } else if (!strategies_csv.empty()) {
                strategies = parse_strategies(strategies_csv);
            } else {
                strategies = {runner.spec().curriculum.strategy()};
            }
            const GridReport rep = runner.run_strategy_grid(strategies, parallel);
            std::cout << format_report(rep);
            any_failed = rep.any_failed;
        }
        return any_failed ? EXIT_FAILURE : EXIT_SUCCESS;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return EXIT_FAILURE;
    }
}

#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cupcur/curriculum.hpp"
#include "cupcur/data.hpp"
#include "cupcur/stats.hpp"

namespace cupcur {

struct BaselineConfig {
    int early_stopping_runs = 20;
    int imp_runs = 5;
    int es_max_epochs = 0;  // 0: same epoch budget as a full cup run
    int patience = 3;
    Rewinding imp_rewinding = Rewinding::Initial;
};

void to_json(nlohmann::json& j, const BaselineConfig& c);
void from_json(const nlohmann::json& j, BaselineConfig& c);

// Everything that determines an experiment. Serializes to/from JSON; the
// resolved form (all defaults materialized) is written into the output
// directory so every run is reproducible from its artifacts alone.
struct ExperimentSpec {
    std::string model_preset = "small";  // small | medium | large | custom
    ModelConfig model;                   // vocab_size 0 = sized from the corpus
    DataConfig data;
    CurriculumConfig curriculum;
    OptimConfig optim;
    BaselineConfig baselines;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    std::string out_dir = "out";

    void validate() const;
    static ExperimentSpec from_json(const nlohmann::json& j);
    static ExperimentSpec from_file(const std::string& path);
    nlohmann::json to_json_resolved() const;
};

struct RunSummary {
    std::string run_id;
    std::string kind;  // cup | early_stop | imp
    std::string strategy;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    double best_val_loss = std::numeric_limits<double>::infinity();
    double prune_best_val = std::numeric_limits<double>::infinity();
    double boundary_val = std::numeric_limits<double>::quiet_NaN();      // last pruning-phase epoch
    double final_growth_val = std::numeric_limits<double>::quiet_NaN();  // last growth epoch
    int epochs = 0;
};

void to_json(nlohmann::json& j, const RunSummary& s);
void from_json(const nlohmann::json& j, RunSummary& s);

struct StrategyReportRow {
    std::string strategy;
    int seeds = 0;
    std::vector<double> best_losses;  // per seed
    double mean_rel = 0.0, min_rel = 0.0, max_rel = 0.0;  // vs early-stopping best
    double wmw_p = 1.0;
    bool significant = false;
};

struct GridReport {
    double es_best = std::numeric_limits<double>::infinity();
    std::vector<double> es_run_bests;
    double imp_best = std::numeric_limits<double>::infinity();
    std::vector<StrategyReportRow> rows;
    bool any_failed = false;
};

void to_json(nlohmann::json& j, const StrategyReportRow& r);
void to_json(nlohmann::json& j, const GridReport& r);

// Loads the corpus once and executes runs into per-run subdirectories of
// spec.out_dir. Each run writes metrics.jsonl (one JSON object per epoch),
// summary.json, and phase-boundary checkpoints; failures are isolated per
// run and recorded in the summary.
class ExperimentRunner {
public:
    explicit ExperimentRunner(ExperimentSpec spec);

    const ExperimentSpec& spec() const { return spec_; }
    const DataSet& dataset() const { return data_; }
    ModelConfig model_config() const;  // vocab resolved

    RunSummary run_cup(std::uint64_t seed, const Strategy& strategy);
    std::vector<RunSummary> run_early_stopping_baseline();
    std::vector<RunSummary> run_imp_baseline();
    // Runs |strategies| x |seeds| cup runs (plus baselines if missing), up to
    // `parallel` at a time, then aggregates.
    GridReport run_strategy_grid(const std::vector<Strategy>& strategies, int parallel = 1);

    // Seed used for the k-th baseline run (k may exceed the seed list).
    std::uint64_t baseline_seed(const std::string& kind, int k) const;

private:
    RunSummary run_dense(std::uint64_t seed, const std::string& run_id);
    RunSummary run_imp_single(std::uint64_t seed, const std::string& run_id);
    void write_run_files(const std::string& run_dir, const RunSummary& summary) const;

    ExperimentSpec spec_;
    DataSet data_;
};

// Aggregates summaries already on disk under out_dir into a report and
// writes report.txt / report.csv there. Returns the report.
GridReport build_report(const std::string& out_dir, double alpha = 0.01);
std::string format_report(const GridReport& report);

// Tidy per-epoch CSV (run_id, phase, cycle, epoch, train_loss, val_loss,
// capacity_pct, prune_best_val) across the run directories under out_dir.
// Unreadable run directories are reported on stderr and skipped.
void emit_plot_data(const std::string& out_dir, const std::string& csv_path);

}  // namespace cupcur

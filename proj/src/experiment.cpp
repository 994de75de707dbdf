#include "cupcur/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <iomanip>
#include <sstream>
#include <thread>

#include "cupcur/error.hpp"
#include "cupcur/serialize.hpp"

namespace cupcur {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::mutex g_log_mutex;

void log_line(const std::string& msg) {
    std::lock_guard<std::mutex> lock(g_log_mutex);
    std::cout << msg << "\n";
}

std::string seed_tag(std::uint64_t seed) { return "s" + std::to_string(seed); }

std::string strategy_tag(const Strategy& s) {
    std::string t = s.str();
    std::replace(t.begin(), t.end(), ':', '-');
    return t;
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void to_json(json& j, const BaselineConfig& c) {
    j = json{{"early_stopping_runs", c.early_stopping_runs},
             {"imp_runs", c.imp_runs},
             {"es_max_epochs", c.es_max_epochs},
             {"patience", c.patience},
             {"imp_rewinding", to_string(c.imp_rewinding)}};
}

void from_json(const json& j, BaselineConfig& c) {
    maybe(j, "early_stopping_runs", c.early_stopping_runs);
    maybe(j, "imp_runs", c.imp_runs);
    maybe(j, "es_max_epochs", c.es_max_epochs);
    maybe(j, "patience", c.patience);
    if (j.contains("imp_rewinding")) {
        c.imp_rewinding = parse_rewinding(j.at("imp_rewinding").get<std::string>());
    }
}

void to_json(json& j, const RunSummary& s) {
    j = json{{"run_id", s.run_id},
             {"kind", s.kind},
             {"strategy", s.strategy},
             {"seed", s.seed},
             {"ok", s.ok},
             {"error", s.error},
             {"best_val_loss", s.best_val_loss},
             {"prune_best_val", s.prune_best_val},
             {"boundary_val", s.boundary_val},
             {"final_growth_val", s.final_growth_val},
             {"epochs", s.epochs}};
}

void from_json(const json& j, RunSummary& s) {
    maybe(j, "run_id", s.run_id);
    maybe(j, "kind", s.kind);
    maybe(j, "strategy", s.strategy);
    maybe(j, "seed", s.seed);
    maybe(j, "ok", s.ok);
    maybe(j, "error", s.error);
    maybe(j, "best_val_loss", s.best_val_loss);
    maybe(j, "prune_best_val", s.prune_best_val);
    maybe(j, "boundary_val", s.boundary_val);
    maybe(j, "final_growth_val", s.final_growth_val);
    maybe(j, "epochs", s.epochs);
}

void to_json(json& j, const StrategyReportRow& r) {
    j = json{{"strategy", r.strategy},   {"seeds", r.seeds},     {"best_losses", r.best_losses},
             {"mean_rel", r.mean_rel},   {"min_rel", r.min_rel}, {"max_rel", r.max_rel},
             {"wmw_p", r.wmw_p},         {"significant", r.significant}};
}

void to_json(json& j, const GridReport& r) {
    j = json{{"es_best", r.es_best},
             {"es_run_bests", r.es_run_bests},
             {"imp_best", r.imp_best},
             {"rows", r.rows},
             {"any_failed", r.any_failed}};
}

void ExperimentSpec::validate() const {
    if (seeds.empty()) throw ConfigError("experiment needs at least one seed");
    std::vector<std::uint64_t> sorted = seeds;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw ConfigError("seeds must be distinct");
    }
    if (baselines.early_stopping_runs < 1 || baselines.imp_runs < 0) {
        throw ConfigError("baseline run counts invalid");
    }
    curriculum.validate();
    if (data.path.empty() && data.train_path.empty()) throw ConfigError("no corpus configured");
}

ExperimentSpec ExperimentSpec::from_json(const json& j) {
    ExperimentSpec spec;
    if (j.contains("model")) {
        const auto& jm = j.at("model");
        if (jm.contains("preset")) {
            spec.model_preset = jm.at("preset").get<std::string>();
            if (spec.model_preset != "custom") {
                spec.model = ModelConfig::preset(spec.model_preset, /*vocab=*/0);
            }
        }
        cupcur::from_json(jm, spec.model);  // explicit keys override the preset
    }
    if (j.contains("data")) spec.data = j.at("data").get<DataConfig>();
    if (j.contains("curriculum")) spec.curriculum = j.at("curriculum").get<CurriculumConfig>();
    if (j.contains("optim")) spec.optim = j.at("optim").get<OptimConfig>();
    if (j.contains("baselines")) spec.baselines = j.at("baselines").get<BaselineConfig>();
    maybe(j, "seeds", spec.seeds);
    maybe(j, "out_dir", spec.out_dir);
    return spec;
}

ExperimentSpec ExperimentSpec::from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw InputError("cannot open config file " + path);
    json j;
    is >> j;
    return from_json(j);
}

json ExperimentSpec::to_json_resolved() const {
    json jm = model;
    jm["preset"] = model_preset;
    return json{{"model", std::move(jm)}, {"data", data},           {"curriculum", curriculum},
                {"optim", optim},         {"baselines", baselines}, {"seeds", seeds},
                {"out_dir", out_dir}};
}

ExperimentRunner::ExperimentRunner(ExperimentSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    data_ = load_corpus(spec_.data);
    fs::create_directories(spec_.out_dir);
    std::ofstream os(fs::path(spec_.out_dir) / "resolved_spec.json");
    os << spec_.to_json_resolved().dump(2) << "\n";
}

ModelConfig ExperimentRunner::model_config() const {
    ModelConfig cfg = spec_.model;
    if (cfg.vocab_size == 0) cfg.vocab_size = data_.vocab.size();
    cfg.validate();
    return cfg;
}

std::uint64_t ExperimentRunner::baseline_seed(const std::string& kind, int k) const {
    const auto& seeds = spec_.seeds;
    const auto s = static_cast<std::size_t>(k) % seeds.size();
    if (static_cast<std::size_t>(k) < seeds.size()) return seeds[s];
    return RngStream::root(seeds[s]).child(kind).child(static_cast<std::uint64_t>(k)).next_u64();
}

void ExperimentRunner::write_run_files(const std::string& run_dir, const RunSummary& summary) const {
    std::ofstream os(fs::path(run_dir) / "summary.json");
    os << json(summary).dump(2) << "\n";
}

RunSummary ExperimentRunner::run_cup(std::uint64_t seed, const Strategy& strategy) {
    RunSummary summary;
    summary.kind = "cup";
    summary.strategy = strategy.str();
    summary.seed = seed;
    summary.run_id = "cup_" + strategy_tag(strategy) + "_" + seed_tag(seed);
    const fs::path run_dir = fs::path(spec_.out_dir) / summary.run_id;
    fs::create_directories(run_dir);
    std::ofstream metrics(run_dir / "metrics.jsonl");
    try {
        CurriculumConfig cur = spec_.curriculum;
        cur.set_strategy(strategy);
        TransformerLM model(model_config(), seed);
        CupRun run(model, batchify(data_.train, spec_.data.batch_size, spec_.data.seq_len),
                   batchify(data_.valid, spec_.data.batch_size, spec_.data.seq_len), cur, spec_.optim,
                   seed, spec_.data.shuffle);
        run.set_row_sink([&](const EpochRow& row) {
            metrics << metrics_line(summary.run_id, seed, row) << "\n";
        });

        const auto& pruning = run.run_pruning_phase();
        summary.boundary_val = run.record().rows.empty()
                                   ? std::numeric_limits<double>::quiet_NaN()
                                   : run.record().rows.back().val_loss;
        Checkpoint ckpt = Checkpoint::of(model);
        ckpt.masks = pruning.masks;
        ckpt.ages = run.introduction_ages();
        save_checkpoint((run_dir / "checkpoint_prune_end.bin").string(), ckpt);

        run.run_growth_phase();
        const auto& record = run.record();
        ckpt = Checkpoint::of(model);
        ckpt.masks = pruning.masks;
        ckpt.ages = run.introduction_ages();
        save_checkpoint((run_dir / "checkpoint_growth_end.bin").string(), ckpt);

        summary.ok = true;
        summary.best_val_loss = record.best_val_loss;
        summary.prune_best_val = record.prune_best_val;
        summary.final_growth_val = record.rows.back().val_loss;
        summary.epochs = static_cast<int>(record.rows.size());
    } catch (const std::exception& e) {
        summary.ok = false;
        summary.error = e.what();
        log_line("run " + summary.run_id + " failed: " + summary.error);
    }
    write_run_files(run_dir.string(), summary);
    return summary;
}

RunSummary ExperimentRunner::run_dense(std::uint64_t seed, const std::string& run_id) {
    RunSummary summary;
    summary.kind = "early_stop";
    summary.seed = seed;
    summary.run_id = run_id;
    const fs::path run_dir = fs::path(spec_.out_dir) / run_id;
    fs::create_directories(run_dir);
    std::ofstream metrics(run_dir / "metrics.jsonl");
    try {
        TransformerLM model(model_config(), seed);
        auto train_batches = batchify(data_.train, spec_.data.batch_size, spec_.data.seq_len);
        auto val_batches = batchify(data_.valid, spec_.data.batch_size, spec_.data.seq_len);
        const RngStream root = RngStream::root(seed);
        RngStream shuffle_rng = root.child("shuffle");
        RngStream dropout_rng = root.child("dropout");

        TrainOptions opt;
        opt.epochs = spec_.baselines.es_max_epochs > 0
                         ? spec_.baselines.es_max_epochs
                         : (spec_.curriculum.n + spec_.curriculum.m) * spec_.curriculum.epochs_per_cycle;
        opt.lr0 = spec_.optim.lr0;
        opt.lr_decay = spec_.optim.lr_decay;
        opt.grad_clip = spec_.optim.grad_clip;
        opt.early_stop = true;
        opt.patience = spec_.baselines.patience;
        opt.shuffle = spec_.data.shuffle;

        const std::vector<double> ones(static_cast<std::size_t>(model.params().weight_count()), 1.0);
        int epochs = 0;
        auto hook = [&](int epoch, double train_loss, double val_loss) {
            EpochRow row;
            row.phase = Phase::Dense;
            row.cycle = 1;
            row.epoch = epoch;
            row.train_loss = train_loss;
            row.val_loss = val_loss;
            row.capacity_pct = 100.0;
            metrics << metrics_line(run_id, seed, row) << "\n";
            ++epochs;
        };
        CycleLog log = train_epochs(model, train_batches, val_batches, opt, ones, shuffle_rng,
                                    dropout_rng, hook);
        summary.ok = true;
        summary.best_val_loss = log.best_val;
        summary.epochs = epochs;
    } catch (const std::exception& e) {
        summary.ok = false;
        summary.error = e.what();
        log_line("run " + run_id + " failed: " + summary.error);
    }
    write_run_files(run_dir.string(), summary);
    return summary;
}

RunSummary ExperimentRunner::run_imp_single(std::uint64_t seed, const std::string& run_id) {
    RunSummary summary;
    summary.kind = "imp";
    summary.seed = seed;
    summary.run_id = run_id;
    const fs::path run_dir = fs::path(spec_.out_dir) / run_id;
    fs::create_directories(run_dir);
    std::ofstream metrics(run_dir / "metrics.jsonl");
    try {
        CurriculumConfig cur = spec_.curriculum;
        cur.rewinding = spec_.baselines.imp_rewinding;
        TransformerLM model(model_config(), seed);
        CupRun run(model, batchify(data_.train, spec_.data.batch_size, spec_.data.seq_len),
                   batchify(data_.valid, spec_.data.batch_size, spec_.data.seq_len), cur, spec_.optim,
                   seed, spec_.data.shuffle);
        run.set_row_sink([&](const EpochRow& row) {
            metrics << metrics_line(run_id, seed, row) << "\n";
        });
        const auto& pruning = run.run_pruning_phase();
        Checkpoint ckpt = Checkpoint::of(model);
        ckpt.masks = pruning.masks;
        save_checkpoint((run_dir / "checkpoint_prune_end.bin").string(), ckpt);
        summary.ok = true;
        summary.best_val_loss = run.record().best_val_loss;
        summary.prune_best_val = run.record().prune_best_val;
        summary.epochs = static_cast<int>(run.record().rows.size());
    } catch (const std::exception& e) {
        summary.ok = false;
        summary.error = e.what();
        log_line("run " + run_id + " failed: " + summary.error);
    }
    write_run_files(run_dir.string(), summary);
    return summary;
}

std::vector<RunSummary> ExperimentRunner::run_early_stopping_baseline() {
    std::vector<RunSummary> out;
    for (int k = 0; k < spec_.baselines.early_stopping_runs; ++k) {
        const auto seed = baseline_seed("early_stop", k);
        const std::string run_id = "es_r" + std::to_string(k) + "_" + seed_tag(seed);
        log_line("early-stopping run " + std::to_string(k + 1) + "/" +
                 std::to_string(spec_.baselines.early_stopping_runs));
        out.push_back(run_dense(seed, run_id));
    }
    return out;
}

std::vector<RunSummary> ExperimentRunner::run_imp_baseline() {
    std::vector<RunSummary> out;
    for (int k = 0; k < spec_.baselines.imp_runs; ++k) {
        const auto seed = baseline_seed("imp", k);
        const std::string run_id = "imp_r" + std::to_string(k) + "_" + seed_tag(seed);
        log_line("imp run " + std::to_string(k + 1) + "/" + std::to_string(spec_.baselines.imp_runs));
        out.push_back(run_imp_single(seed, run_id));
    }
    return out;
}

GridReport ExperimentRunner::run_strategy_grid(const std::vector<Strategy>& strategies, int parallel) {
    std::vector<std::function<RunSummary()>> tasks;
    for (int k = 0; k < spec_.baselines.early_stopping_runs; ++k) {
        const auto seed = baseline_seed("early_stop", k);
        const std::string run_id = "es_r" + std::to_string(k) + "_" + seed_tag(seed);
        tasks.emplace_back([this, seed, run_id] { return run_dense(seed, run_id); });
    }
    for (int k = 0; k < spec_.baselines.imp_runs; ++k) {
        const auto seed = baseline_seed("imp", k);
        const std::string run_id = "imp_r" + std::to_string(k) + "_" + seed_tag(seed);
        tasks.emplace_back([this, seed, run_id] { return run_imp_single(seed, run_id); });
    }
    for (const auto& strategy : strategies) {
        for (const auto seed : spec_.seeds) {
            tasks.emplace_back([this, seed, strategy] { return run_cup(seed, strategy); });
        }
    }

    std::vector<RunSummary> results(tasks.size());
    std::atomic<std::size_t> next{0};
    const int workers = std::max(1, std::min<int>(parallel, static_cast<int>(tasks.size())));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= tasks.size()) break;
                results[i] = tasks[i]();
            }
        });
    }
    for (auto& t : pool) t.join();

    return build_report(spec_.out_dir);
}

namespace {

std::vector<RunSummary> scan_summaries(const std::string& out_dir) {
    std::vector<RunSummary> out;
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(out_dir)) {
        if (entry.is_directory()) dirs.push_back(entry.path());
    }
    std::sort(dirs.begin(), dirs.end());
    for (const auto& dir : dirs) {
        const fs::path p = dir / "summary.json";
        if (!fs::exists(p)) continue;
        try {
            std::ifstream is(p);
            json j;
            is >> j;
            out.push_back(j.get<RunSummary>());
        } catch (const std::exception& e) {
            std::cerr << "skipping unreadable summary " << p << ": " << e.what() << "\n";
        }
    }
    return out;
}

}  // namespace

GridReport build_report(const std::string& out_dir, double alpha) {
    GridReport report;
    const auto summaries = scan_summaries(out_dir);
    std::map<std::string, std::vector<const RunSummary*>> by_strategy;
    for (const auto& s : summaries) {
        if (!s.ok) {
            report.any_failed = true;
            continue;
        }
        if (s.kind == "early_stop") {
            report.es_run_bests.push_back(s.best_val_loss);
            report.es_best = std::min(report.es_best, s.best_val_loss);
        } else if (s.kind == "imp") {
            report.imp_best = std::min(report.imp_best, s.best_val_loss);
        } else if (s.kind == "cup") {
            by_strategy[s.strategy].push_back(&s);
        }
    }
    for (const auto& [strategy, runs] : by_strategy) {
        StrategyReportRow row;
        row.strategy = strategy;
        row.seeds = static_cast<int>(runs.size());
        for (const auto* r : runs) row.best_losses.push_back(r->best_val_loss);
        if (!report.es_run_bests.empty() && !row.best_losses.empty()) {
            double sum = 0.0;
            row.min_rel = std::numeric_limits<double>::infinity();
            row.max_rel = -std::numeric_limits<double>::infinity();
            for (const auto loss : row.best_losses) {
                const double rel = relative_performance(loss, report.es_best);
                sum += rel;
                row.min_rel = std::min(row.min_rel, rel);
                row.max_rel = std::max(row.max_rel, rel);
            }
            row.mean_rel = sum / static_cast<double>(row.best_losses.size());
            // per-seed cup bests vs per-run early-stopping bests
            const auto cmp = wmw_test(row.best_losses, report.es_run_bests, Alternative::Less, alpha);
            row.wmw_p = cmp.p_value;
            row.significant = cmp.significant;
        }
        report.rows.push_back(std::move(row));
    }

    std::ofstream txt(fs::path(out_dir) / "report.txt");
    txt << format_report(report);
    std::ofstream csv(fs::path(out_dir) / "report.csv");
    csv.precision(10);
    csv << "strategy,seeds,mean_rel_pct,min_rel_pct,max_rel_pct,wmw_p,significant\n";
    for (const auto& row : report.rows) {
        csv << row.strategy << ',' << row.seeds << ',' << row.mean_rel << ',' << row.min_rel << ','
            << row.max_rel << ',' << row.wmw_p << ',' << (row.significant ? 1 : 0) << "\n";
    }
    return report;
}

std::string format_report(const GridReport& report) {
    std::ostringstream os;
    os << "early-stopping best val loss: ";
    if (std::isfinite(report.es_best)) {
        os << report.es_best << " (" << report.es_run_bests.size() << " runs)";
    } else {
        os << "n/a";
    }
    os << "\nimp best val loss:            ";
    if (std::isfinite(report.imp_best)) {
        os << report.imp_best;
    } else {
        os << "n/a";
    }
    os << "\n\nstrategy                        seeds  mean%    min%    max%    wmw_p      sig\n";
    for (const auto& row : report.rows) {
        const bool highlighted = row.strategy == "best:random:identical";
        std::ostringstream name;
        name << (highlighted ? "*" : " ") << row.strategy;
        os << name.str();
        for (std::size_t i = name.str().size(); i < 32; ++i) os << ' ';
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%5d  %6.3f  %6.3f  %6.3f  %.4g  %s", row.seeds,
                      row.mean_rel, row.min_rel, row.max_rel, row.wmw_p,
                      row.significant ? "yes" : "no");
        os << buf << "\n";
    }
    if (report.any_failed) os << "\nwarning: some runs failed; see their summary.json\n";
    return os.str();
}

void emit_plot_data(const std::string& out_dir, const std::string& csv_path) {
    std::ofstream csv(csv_path);
    if (!csv) throw InputError("cannot write plot data to " + csv_path);
    csv.precision(10);
    csv << "run_id,phase,cycle,epoch,train_loss,val_loss,capacity_pct,prune_best_val\n";
    if (!fs::exists(out_dir)) return;
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(out_dir)) {
        if (entry.is_directory()) dirs.push_back(entry.path());
    }
    std::sort(dirs.begin(), dirs.end());
    for (const auto& dir : dirs) {
        const fs::path metrics = dir / "metrics.jsonl";
        if (!fs::exists(metrics)) continue;
        double prune_best = std::numeric_limits<double>::quiet_NaN();
        const fs::path sump = dir / "summary.json";
        if (fs::exists(sump)) {
            try {
                std::ifstream is(sump);
                json j;
                is >> j;
                const auto s = j.get<RunSummary>();
                if (std::isfinite(s.prune_best_val)) prune_best = s.prune_best_val;
            } catch (const std::exception&) {
            }
        }
        try {
            std::ifstream is(metrics);
            std::string line;
            while (std::getline(is, line)) {
                if (line.empty()) continue;
                const json j = json::parse(line);
                csv << j.at("run_id").get<std::string>() << ',' << j.at("phase").get<std::string>()
                    << ',' << j.at("cycle").get<int>() << ',' << j.at("epoch").get<int>() << ','
                    << j.at("train_loss").get<double>() << ',' << j.at("val_loss").get<double>() << ','
                    << j.at("capacity_pct").get<double>() << ',';
                if (std::isfinite(prune_best)) csv << prune_best;
                csv << "\n";
            }
        } catch (const std::exception& e) {
            std::cerr << "skipping corrupt metrics in " << dir << ": " << e.what() << "\n";
        }
    }
}

}  // namespace cupcur

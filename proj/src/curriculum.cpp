#include "cupcur/curriculum.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cupcur/error.hpp"

namespace cupcur {

namespace {
using i64 = std::int64_t;
}

std::string to_string(Rewinding r) {
    switch (r) {
        case Rewinding::Initial: return "initial";
        case Rewinding::Warm: return "warm";
        case Rewinding::Best: return "best";
        case Rewinding::No: return "no";
    }
    return "?";
}

std::string to_string(Initialization i) {
    switch (i) {
        case Initialization::Original: return "original";
        case Initialization::Random: return "random";
        case Initialization::Old: return "old";
        case Initialization::Top: return "top";
    }
    return "?";
}

std::string to_string(UpdateScheme u) {
    switch (u) {
        case UpdateScheme::Freezing: return "freezing";
        case UpdateScheme::Identical: return "identical";
        case UpdateScheme::Dynamic: return "dynamic";
    }
    return "?";
}

std::string to_string(Phase p) {
    switch (p) {
        case Phase::Dense: return "dense";
        case Phase::Prune: return "prune";
        case Phase::Grow: return "grow";
    }
    return "?";
}

Rewinding parse_rewinding(const std::string& s) {
    if (s == "initial") return Rewinding::Initial;
    if (s == "warm") return Rewinding::Warm;
    if (s == "best") return Rewinding::Best;
    if (s == "no") return Rewinding::No;
    throw ConfigError("unknown rewinding scheme: " + s);
}

Initialization parse_initialization(const std::string& s) {
    if (s == "original") return Initialization::Original;
    if (s == "random") return Initialization::Random;
    if (s == "old") return Initialization::Old;
    if (s == "top") return Initialization::Top;
    throw ConfigError("unknown initialization scheme: " + s);
}

UpdateScheme parse_update_scheme(const std::string& s) {
    if (s == "freezing") return UpdateScheme::Freezing;
    if (s == "identical") return UpdateScheme::Identical;
    if (s == "dynamic") return UpdateScheme::Dynamic;
    throw ConfigError("unknown update scheme: " + s);
}

Strategy Strategy::parse(const std::string& spec) {
    const auto a = spec.find(':');
    const auto b = spec.find(':', a == std::string::npos ? a : a + 1);
    if (a == std::string::npos || b == std::string::npos) {
        throw ConfigError("strategy must be rewinding:initialization:update, got " + spec);
    }
    Strategy s;
    s.rewinding = parse_rewinding(spec.substr(0, a));
    s.initialization = parse_initialization(spec.substr(a + 1, b - a - 1));
    s.update = parse_update_scheme(spec.substr(b + 1));
    return s;
}

std::string Strategy::str() const {
    return to_string(rewinding) + ":" + to_string(initialization) + ":" + to_string(update);
}

void CurriculumConfig::validate() const {
    if (n < 1) throw ConfigError("need at least one pruning cycle");
    if (m < 1) throw ConfigError("need at least one growth cycle");
    if (m > n + (restore_full_capacity ? 1 : 0)) {
        throw ConfigError("growth cycles m=" + std::to_string(m) + " exceed pruning cycles n=" +
                          std::to_string(n) + (restore_full_capacity ? "+1" : ""));
    }
    if (prune_fraction <= 0.0 || prune_fraction >= 1.0) {
        throw ConfigError("prune_fraction must be in (0,1)");
    }
    if (dynamic_factor < 0.0) throw ConfigError("dynamic_factor must be >= 0");
    if (epochs_per_cycle < 0) throw ConfigError("epochs_per_cycle must be >= 0");
    if (warmup_epochs < 1) throw ConfigError("warmup_epochs must be >= 1");
    if (patience < 1) throw ConfigError("patience must be >= 1");
}

void CurriculumConfig::set_strategy(const Strategy& s) {
    rewinding = s.rewinding;
    initialization = s.initialization;
    update = s.update;
}

double update_scale(std::int32_t age, std::int32_t current_step, UpdateScheme scheme, double f) {
    switch (scheme) {
        case UpdateScheme::Freezing: return age == current_step ? 1.0 : 0.0;
        case UpdateScheme::Identical: return 1.0;
        case UpdateScheme::Dynamic: return age == 0 ? 1.0 : std::pow(f, static_cast<double>(age));
    }
    return 1.0;
}

bool EarlyStopTracker::observe(double val_loss) {
    ++epoch_;
    if (val_loss < best_val_) {
        best_val_ = val_loss;
        best_epoch_ = epoch_;
        return false;
    }
    return epoch_ - best_epoch_ >= patience_;
}

CycleLog train_epochs(TransformerLM& model, const std::vector<Batch>& train_batches,
                      const std::vector<Batch>& val_batches, const TrainOptions& opt,
                      std::span<const double> scale, RngStream& shuffle_rng,
                      RngStream& dropout_rng, const EpochHook& hook) {
    CycleLog log;
    if (opt.epochs == 0) return log;
    if (train_batches.empty() || val_batches.empty()) {
        throw InputError("train_epochs needs non-empty train and validation batches");
    }
    auto& params = model.params();
    const auto& mask = params.active_mask();
    EarlyStopTracker stopper(opt.patience);

    std::vector<std::size_t> order(train_batches.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (int e = 0; e < opt.epochs; ++e) {
        const double lr = opt.lr0 * std::pow(opt.lr_decay, opt.lr_epoch_offset + e);
        if (opt.shuffle) shuffle_rng.shuffle(order);
        double train_total = 0.0;
        for (const auto bi : order) {
            params.zero_grads();
            Graph g;
            const Tensor loss = model.forward(g, train_batches[bi], /*train_mode=*/true, &dropout_rng);
            g.backward(loss);
            if (opt.grad_clip > 0.0) clip_grad_norm(params, opt.grad_clip);
            sgd_step(params, lr, scale, mask);
            train_total += loss.item();
        }
        const double train_loss = train_total / static_cast<double>(train_batches.size());
        const double val_loss = model.eval_loss(val_batches);
        if (!std::isfinite(train_loss) || !std::isfinite(val_loss)) {
            throw StateError("training diverged at epoch " + std::to_string(e + 1) +
                             " (train=" + std::to_string(train_loss) +
                             ", val=" + std::to_string(val_loss) + ")");
        }
        log.losses.emplace_back(train_loss, val_loss);
        if (val_loss < log.best_val) {
            log.best_val = val_loss;
            log.best_epoch = e;
            log.best_state = params.snapshot();
        }
        if (hook) hook(e + 1, train_loss, val_loss);
        const bool stop = stopper.observe(val_loss);
        if (opt.early_stop && stop) break;
    }
    return log;
}

// ---------------------------------------------------------------------------
// CupRun
// ---------------------------------------------------------------------------

CupRun::CupRun(TransformerLM& model, std::vector<Batch> train_batches, std::vector<Batch> val_batches,
               CurriculumConfig curriculum, OptimConfig optim, std::uint64_t seed, bool shuffle)
    : model_(model),
      cur_(curriculum),
      optim_(optim),
      seed_(seed),
      shuffle_(shuffle),
      train_batches_(std::move(train_batches)),
      val_batches_(std::move(val_batches)) {
    cur_.validate();
    record_.seed = seed;
    const RngStream root = RngStream::root(seed);
    shuffle_rng_ = root.child("shuffle");
    dropout_rng_ = root.child("dropout");
    redraw_rng_ = root.child("redraw");
    active_ = MaskSet::all_ones(model_.params());
    all_ones_ = active_;
    ages_.assign(static_cast<std::size_t>(model_.params().weight_count()), 0);
    pruned_at_.assign(static_cast<std::size_t>(model_.params().weight_count()), 0);
    // initial state: captured before any training step
    snapshots_.theta0 = model_.params().snapshot();
}

void CupRun::emit(const EpochRow& row) {
    record_.rows.push_back(row);
    if (row.val_loss < record_.best_val_loss) {
        record_.best_val_loss = row.val_loss;
        record_.best_phase = row.phase;
        record_.best_cycle = row.cycle;
        record_.best_epoch = row.epoch;
        record_.best_state = model_.params().snapshot();
    }
    if (row.phase == Phase::Prune) {
        record_.prune_best_val = std::min(record_.prune_best_val, row.val_loss);
    }
    if (row_sink_) row_sink_(row);
    if (inspector_) inspector_(row, model_, active_);
}

CycleLog CupRun::run_cycle(Phase phase, int cycle, std::span<const double> scale,
                           bool allow_early_stop) {
    TrainOptions opt;
    opt.epochs = cur_.epochs_per_cycle;
    opt.lr0 = optim_.lr0;
    opt.lr_decay = optim_.lr_decay;
    opt.lr_epoch_offset = optim_.reset_lr_per_cycle ? 0 : global_epochs_;
    opt.grad_clip = optim_.grad_clip;
    opt.early_stop = allow_early_stop;
    opt.patience = cur_.patience;
    opt.shuffle = shuffle_;

    const double cap = capacity_pct(active_, model_.params());
    auto hook = [&](int epoch, double train_loss, double val_loss) {
        if (phase == Phase::Prune && cycle == 1 && epoch == cur_.warmup_epochs && !snapshots_.theta_warm) {
            snapshots_.theta_warm = model_.params().snapshot();
        }
        EpochRow row;
        row.phase = phase;
        row.cycle = cycle;
        row.epoch = epoch;
        row.train_loss = train_loss;
        row.val_loss = val_loss;
        row.capacity_pct = cap;
        emit(row);
    };
    CycleLog log = train_epochs(model_, train_batches_, val_batches_, opt, scale, shuffle_rng_,
                                dropout_rng_, hook);
    global_epochs_ += static_cast<int>(log.losses.size());
    return log;
}

const PruningPhaseResult& CupRun::run_pruning_phase() {
    if (pruning_) return *pruning_;
    PruningPhaseResult result;
    const std::vector<double> unit_scale(static_cast<std::size_t>(model_.params().weight_count()), 1.0);

    for (int cycle = 1; cycle <= cur_.n; ++cycle) {
        const bool early = cur_.early_stop_within_cycle && cur_.rewinding != Rewinding::No;
        CycleLog log = run_cycle(Phase::Prune, cycle, unit_scale, early);

        // best state of a zero-epoch cycle is the current state
        result.best_states.push_back(log.best_epoch >= 0 ? log.best_state : model_.params().snapshot());
        result.final_states.push_back(model_.params().snapshot());
        snapshots_.theta_best.push_back(result.best_states.back());
        snapshots_.theta_last.push_back(result.final_states.back());

        const auto scores = compute_scores(model_.params(), snapshots_.theta0, active_);
        rewind(cur_.rewinding, cycle);
        MaskSet next = prune_layerwise(model_.params(), active_, scores, cur_.prune_fraction);
        for (const auto idx : active_.support_minus(next, model_.params())) {
            pruned_at_[static_cast<std::size_t>(idx)] = cycle;
        }
        active_ = next;
        result.masks.push(active_);
        for (const auto& [name, bits] : active_.masks()) {
            if (std::none_of(bits.begin(), bits.end(), [](std::uint8_t b) { return b != 0; })) {
                throw StateError("capacity underflow: " + name + " fully pruned at cycle " +
                                 std::to_string(cycle));
            }
        }
    }
    result.final_state = model_.params().snapshot();
    pruning_ = std::move(result);
    return *pruning_;
}

const PruningPhaseResult& CupRun::pruning_result() const {
    if (!pruning_) throw StateError("pruning phase has not run");
    return *pruning_;
}

void CupRun::rewind(Rewinding scheme, int cycle) {
    switch (scheme) {
        case Rewinding::No:
            return;
        case Rewinding::Initial:
            model_.params().restore(snapshots_.theta0);
            break;
        case Rewinding::Warm:
            if (!snapshots_.theta_warm) {
                throw StateError("warm rewinding requested before the warm-up state exists");
            }
            model_.params().restore(*snapshots_.theta_warm);
            break;
        case Rewinding::Best: {
            if (cycle < 1 || cycle > static_cast<int>(snapshots_.theta_best.size())) {
                throw StateError("best rewinding: no snapshot for cycle " + std::to_string(cycle));
            }
            model_.params().restore(snapshots_.theta_best[static_cast<std::size_t>(cycle - 1)]);
            break;
        }
    }
    // Restoring writes full tensors; pruned positions must stay zero.
    apply_mask(model_.params(), active_);
}

const MaskSet& CupRun::growth_target_mask(int step) const {
    if (!pruning_) throw StateError("growth phase needs a completed pruning phase");
    if (step < 1 || step > cur_.m) throw InvariantError("growth step out of range");
    if (cur_.restore_full_capacity && step == cur_.m) return *all_ones_;
    // reversed stack: step 1 -> last mask (introduces nothing)
    return pruning_->masks.at(static_cast<std::size_t>(cur_.n - step));
}

std::vector<std::int64_t> CupRun::weights_to_introduce(int step) const {
    return growth_target_mask(step).support_minus(active_, model_.params());
}

void CupRun::initialize_introduced(const std::vector<std::int64_t>& weights, Initialization scheme,
                                   int step) {
    auto& params = model_.params();
    for (const auto idx : weights) {
        if (params.active_mask()[static_cast<std::size_t>(idx)]) {
            throw InvariantError("weight " + std::to_string(idx) + " is already active");
        }
        i64 offset = 0;
        ParamEntry& entry = params.entry_for_index(idx, offset);
        double value = 0.0;
        switch (scheme) {
            case Initialization::Original:
                value = (*snapshots_.theta0.find(entry.name))[static_cast<std::size_t>(offset)];
                break;
            case Initialization::Random:
                value = redraw_rng_.uniform(entry.init.low, entry.init.high);
                break;
            case Initialization::Old:
            case Initialization::Top: {
                const auto cycle = pruned_at_[static_cast<std::size_t>(idx)];
                if (cycle < 1) {
                    throw InvariantError("weight " + std::to_string(idx) + " has no pruning cycle");
                }
                const auto& store = scheme == Initialization::Old ? snapshots_.theta_last
                                                                  : snapshots_.theta_best;
                value = (*store[static_cast<std::size_t>(cycle - 1)].find(entry.name))
                    [static_cast<std::size_t>(offset)];
                break;
            }
        }
        entry.tensor.values()[static_cast<std::size_t>(offset)] = value;
        ages_[static_cast<std::size_t>(idx)] = step;
    }
}

std::vector<double> CupRun::growth_scales(int step) const {
    const auto total = static_cast<std::size_t>(model_.params().weight_count());
    std::vector<double> scales(total);
    for (std::size_t i = 0; i < total; ++i) {
        scales[i] = update_scale(ages_[i], step, cur_.update, cur_.dynamic_factor);
    }
    return scales;
}

const std::vector<GrowthStepResult>& CupRun::run_growth_phase() {
    if (growth_done_) return growth_;
    run_pruning_phase();

    for (int step = 1; step <= cur_.m; ++step) {
        const MaskSet target = growth_target_mask(step);
        const auto introduced = target.support_minus(active_, model_.params());
        initialize_introduced(introduced, cur_.initialization, step);
        active_ = target;
        apply_mask(model_.params(), active_);

        const auto scales = growth_scales(step);
        CycleLog log = run_cycle(Phase::Grow, step, scales, /*allow_early_stop=*/false);

        GrowthStepResult r;
        r.step = step;
        r.capacity = capacity_pct(active_, model_.params());
        r.best_val = log.best_val;
        r.best_state = log.best_epoch >= 0 ? std::move(log.best_state) : model_.params().snapshot();
        growth_.push_back(std::move(r));
    }
    growth_done_ = true;
    return growth_;
}

const RunRecord& CupRun::run() {
    run_pruning_phase();
    run_growth_phase();
    return record_;
}

}  // namespace cupcur

#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cupcur/model.hpp"
#include "cupcur/pruning.hpp"

namespace cupcur {

// Where surviving weights are reset to after each pruning step.
enum class Rewinding { Initial, Warm, Best, No };
// Value assigned to a weight when it is reintroduced during growth.
enum class Initialization { Original, Random, Old, Top };
// Per-weight gradient scaling during the growth phase.
enum class UpdateScheme { Freezing, Identical, Dynamic };

enum class Phase { Dense, Prune, Grow };

std::string to_string(Rewinding r);
std::string to_string(Initialization i);
std::string to_string(UpdateScheme u);
std::string to_string(Phase p);
Rewinding parse_rewinding(const std::string& s);
Initialization parse_initialization(const std::string& s);
UpdateScheme parse_update_scheme(const std::string& s);

// A full scheme triple, written "rewinding:initialization:update".
struct Strategy {
    Rewinding rewinding = Rewinding::Best;
    Initialization initialization = Initialization::Random;
    UpdateScheme update = UpdateScheme::Identical;

    static Strategy parse(const std::string& spec);
    std::string str() const;
};

struct CurriculumConfig {
    int n = 4;                   // pruning cycles
    int m = 4;                   // growth cycles
    int epochs_per_cycle = 5;    // e_i, uniform
    double prune_fraction = 0.2;
    Rewinding rewinding = Rewinding::Best;
    Initialization initialization = Initialization::Random;
    UpdateScheme update = UpdateScheme::Identical;
    double dynamic_factor = 0.5;  // f in the Dynamic scheme
    int warmup_epochs = 3;        // epochs of cycle 1 defining the warm state
    bool restore_full_capacity = false;  // final growth step jumps to 100%
    bool early_stop_within_cycle = false;
    int patience = 3;

    void validate() const;
    Strategy strategy() const { return {rewinding, initialization, update}; }
    void set_strategy(const Strategy& s);
};

struct OptimConfig {
    double lr0 = 5.0;
    double lr_decay = 0.95;          // multiplicative, per epoch
    bool reset_lr_per_cycle = true;  // restart the schedule at cycle boundaries
    double grad_clip = 0.25;         // global-norm clip; 0 disables
};

// Parameter states the rewinding and initialization schemes draw from.
struct SnapshotStore {
    Snapshot theta0;
    std::optional<Snapshot> theta_warm;
    std::vector<Snapshot> theta_best;  // index cycle-1
    std::vector<Snapshot> theta_last;
};

struct EpochRow {
    Phase phase = Phase::Dense;
    int cycle = 1;  // pruning cycle or growth step; 1 for dense runs
    int epoch = 1;  // 1-based within the cycle
    double train_loss = 0.0;
    double val_loss = 0.0;
    double capacity_pct = 100.0;
};

struct RunRecord {
    std::uint64_t seed = 0;
    std::vector<EpochRow> rows;
    double best_val_loss = std::numeric_limits<double>::infinity();
    Phase best_phase = Phase::Dense;
    int best_cycle = 0;
    int best_epoch = 0;
    double prune_best_val = std::numeric_limits<double>::infinity();
    Snapshot best_state;
};

// Gradient scale for a weight of the given introduction age while training
// growth step `current_step` (0 during the pruning phase).
//   Freezing : 1 if age == current_step else 0
//   Identical: 1
//   Dynamic  : f^age (never-pruned weights have age 0)
double update_scale(std::int32_t age, std::int32_t current_step, UpdateScheme scheme, double f);

// Stops training `patience` epochs after the best validation epoch.
class EarlyStopTracker {
public:
    explicit EarlyStopTracker(int patience) : patience_(patience) {}
    // Returns true when training should halt after this epoch.
    bool observe(double val_loss);
    int best_epoch() const { return best_epoch_; }
    double best_val() const { return best_val_; }

private:
    int patience_ = 3;
    int epoch_ = -1;
    int best_epoch_ = -1;
    double best_val_ = std::numeric_limits<double>::infinity();
};

struct TrainOptions {
    int epochs = 0;
    double lr0 = 5.0;
    double lr_decay = 0.95;
    int lr_epoch_offset = 0;  // continue a decay schedule across cycles
    double grad_clip = 0.25;
    bool early_stop = false;
    int patience = 3;
    bool shuffle = true;  // shuffle batch order each epoch
};

struct CycleLog {
    std::vector<std::pair<double, double>> losses;  // (train, val) per epoch
    int best_epoch = -1;                            // 0-based; -1 when no epochs ran
    double best_val = std::numeric_limits<double>::infinity();
    Snapshot best_state;
};

// Called after each epoch with the 1-based epoch index and its losses.
using EpochHook = std::function<void(int epoch, double train_loss, double val_loss)>;

// Minibatch SGD with per-weight scaling against the store's active mask.
// Shuffles batch order each epoch from shuffle_rng; evaluates on the
// validation batches after every epoch; tracks the best validation state.
// Throws StateError on NaN/inf losses.
CycleLog train_epochs(TransformerLM& model, const std::vector<Batch>& train_batches,
                      const std::vector<Batch>& val_batches, const TrainOptions& opt,
                      std::span<const double> scale, RngStream& shuffle_rng,
                      RngStream& dropout_rng, const EpochHook& hook = {});

struct PruningPhaseResult {
    Snapshot final_state;
    std::vector<Snapshot> best_states;
    std::vector<Snapshot> final_states;
    MaskStack masks;
};

struct GrowthStepResult {
    int step = 0;
    double capacity = 0.0;
    double best_val = std::numeric_limits<double>::infinity();
    Snapshot best_state;
};

// One cup-curriculum run over a model: the pruning phase (train, snapshot,
// score, rewind, prune) followed by the growth phase (LIFO reintroduction
// under an initialization and update scheme). Scheme mechanics (rewind,
// initialize_introduced, weights_to_introduce) are public for direct use.
class CupRun {
public:
    using RowSink = std::function<void(const EpochRow&)>;
    using EpochInspector = std::function<void(const EpochRow&, const TransformerLM&, const MaskSet&)>;

    CupRun(TransformerLM& model, std::vector<Batch> train_batches, std::vector<Batch> val_batches,
           CurriculumConfig curriculum, OptimConfig optim, std::uint64_t seed, bool shuffle = true);

    void set_row_sink(RowSink sink) { row_sink_ = std::move(sink); }
    void set_inspector(EpochInspector cb) { inspector_ = std::move(cb); }

    const PruningPhaseResult& run_pruning_phase();
    const std::vector<GrowthStepResult>& run_growth_phase();
    // Pruning phase then growth phase; returns the completed record.
    const RunRecord& run();

    void rewind(Rewinding scheme, int cycle);
    // Global indices the given growth step would activate.
    std::vector<std::int64_t> weights_to_introduce(int step) const;
    void initialize_introduced(const std::vector<std::int64_t>& weights, Initialization scheme, int step);
    // The mask the given growth step trains under.
    const MaskSet& growth_target_mask(int step) const;

    TransformerLM& model() { return model_; }
    const CurriculumConfig& curriculum() const { return cur_; }
    const MaskSet& active_mask() const { return active_; }
    const SnapshotStore& snapshots() const { return snapshots_; }
    const std::vector<std::int32_t>& introduction_ages() const { return ages_; }
    const std::vector<std::int32_t>& pruned_at_cycle() const { return pruned_at_; }
    const RunRecord& record() const { return record_; }
    const PruningPhaseResult& pruning_result() const;

private:
    std::vector<double> growth_scales(int step) const;
    CycleLog run_cycle(Phase phase, int cycle, std::span<const double> scale, bool allow_early_stop);
    void emit(const EpochRow& row);

    TransformerLM& model_;
    CurriculumConfig cur_;
    OptimConfig optim_;
    std::uint64_t seed_ = 0;
    bool shuffle_ = true;

    std::vector<Batch> train_batches_;
    std::vector<Batch> val_batches_;

    RngStream shuffle_rng_;
    RngStream dropout_rng_;
    RngStream redraw_rng_;

    MaskSet active_;
    SnapshotStore snapshots_;
    std::vector<std::int32_t> ages_;       // introduction step per weight (0 = never pruned)
    std::vector<std::int32_t> pruned_at_;  // cycle that pruned the weight (0 = never)
    std::optional<PruningPhaseResult> pruning_;
    std::vector<GrowthStepResult> growth_;
    std::optional<MaskSet> all_ones_;
    RunRecord record_;
    int global_epochs_ = 0;
    bool growth_done_ = false;

    RowSink row_sink_;
    EpochInspector inspector_;
};

}  // namespace cupcur

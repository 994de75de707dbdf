#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cupcur/param_store.hpp"

namespace cupcur {

// Per-weight pruning score. The criterion is the magnitude change
// |w_current| - |w_initial|; weights whose magnitude grew least are pruned
// first, preserving the directions training strengthened.
struct PruneScore {
    std::int64_t weight_index = 0;  // global enumeration index
    double current_value = 0.0;
    double initial_value = 0.0;
    double criterion = 0.0;
};

// Binary keep-masks for the prunable parameters, aligned with store order.
// Non-prunable parameters have implicit all-ones masks.
class MaskSet {
public:
    static MaskSet all_ones(const ParamStore& params);

    const std::vector<std::uint8_t>* find(const std::string& name) const;
    std::vector<std::pair<std::string, std::vector<std::uint8_t>>>& masks() { return masks_; }
    const std::vector<std::pair<std::string, std::vector<std::uint8_t>>>& masks() const { return masks_; }

    std::int64_t active_count() const;
    std::int64_t total_count() const;

    // True when every kept weight of this mask is also kept by `outer`.
    bool subset_of(const MaskSet& outer) const;
    bool operator==(const MaskSet& other) const { return masks_ == other.masks_; }

    // Global weight indices kept by this mask but not by `inner`.
    std::vector<std::int64_t> support_minus(const MaskSet& inner, const ParamStore& params) const;

private:
    std::vector<std::pair<std::string, std::vector<std::uint8_t>>> masks_;
};

// Masks recorded per pruning cycle, oldest first. Supports are strictly
// nested; reading the stack backwards drives LIFO reintroduction.
struct MaskStack {
    std::vector<MaskSet> masks;

    void push(MaskSet m) { masks.push_back(std::move(m)); }
    std::size_t size() const { return masks.size(); }
    const MaskSet& at(std::size_t i) const { return masks.at(i); }
};

// One score per currently-unpruned prunable weight, comparing current values
// against the initial snapshot.
std::vector<PruneScore> compute_scores(const ParamStore& params, const Snapshot& initial,
                                       const MaskSet& active);

// Within each prunable tensor independently, removes the
// round-half-even(fraction * unpruned) weights with the lowest criterion
// (ties broken toward the lowest weight index), zeroes their values, and
// returns the tightened mask. Tensors with no unpruned weights are skipped
// with a warning on stderr.
MaskSet prune_layerwise(ParamStore& params, const MaskSet& active,
                        const std::vector<PruneScore>& scores, double fraction);

// 100 * unpruned prunable weights / total prunable weights.
double capacity_pct(const MaskSet& masks, const ParamStore& params);

// Zeroes masked-out weight values and installs the mask into the store's
// global active mask so sgd_step blocks their updates. Idempotent.
void apply_mask(ParamStore& params, const MaskSet& masks);

std::int64_t round_half_even(double x);

}  // namespace cupcur

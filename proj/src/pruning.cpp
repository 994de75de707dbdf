#include "cupcur/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "cupcur/error.hpp"

namespace cupcur {

namespace {
using i64 = std::int64_t;
}

MaskSet MaskSet::all_ones(const ParamStore& params) {
    MaskSet m;
    for (const auto& e : params.entries()) {
        if (e.prunable) {
            m.masks_.emplace_back(e.name,
                                  std::vector<std::uint8_t>(static_cast<std::size_t>(e.tensor.size()), 1));
        }
    }
    return m;
}

const std::vector<std::uint8_t>* MaskSet::find(const std::string& name) const {
    for (const auto& [n, bits] : masks_) {
        if (n == name) return &bits;
    }
    return nullptr;
}

std::int64_t MaskSet::active_count() const {
    i64 n = 0;
    for (const auto& [name, bits] : masks_) {
        for (const auto b : bits) n += b;
    }
    return n;
}

std::int64_t MaskSet::total_count() const {
    i64 n = 0;
    for (const auto& [name, bits] : masks_) n += static_cast<i64>(bits.size());
    return n;
}

bool MaskSet::subset_of(const MaskSet& outer) const {
    if (masks_.size() != outer.masks_.size()) return false;
    for (std::size_t i = 0; i < masks_.size(); ++i) {
        const auto& [name, bits] = masks_[i];
        const auto& [oname, obits] = outer.masks_[i];
        if (name != oname || bits.size() != obits.size()) return false;
        for (std::size_t j = 0; j < bits.size(); ++j) {
            if (bits[j] && !obits[j]) return false;
        }
    }
    return true;
}

std::vector<std::int64_t> MaskSet::support_minus(const MaskSet& inner, const ParamStore& params) const {
    std::vector<i64> out;
    for (const auto& [name, bits] : masks_) {
        const auto* ibits = inner.find(name);
        if (!ibits || ibits->size() != bits.size()) throw InvariantError("mask misalignment at " + name);
        const i64 base = params.at(name).base;
        for (std::size_t j = 0; j < bits.size(); ++j) {
            if (bits[j] && !(*ibits)[j]) out.push_back(base + static_cast<i64>(j));
        }
    }
    return out;
}

std::int64_t round_half_even(double x) {
    const double floor_x = std::floor(x);
    const double frac = x - floor_x;
    const auto f = static_cast<i64>(floor_x);
    if (frac > 0.5) return f + 1;
    if (frac < 0.5) return f;
    return (f % 2 == 0) ? f : f + 1;
}

std::vector<PruneScore> compute_scores(const ParamStore& params, const Snapshot& initial,
                                       const MaskSet& active) {
    std::vector<PruneScore> scores;
    for (const auto& e : params.entries()) {
        if (!e.prunable) continue;
        const auto* bits = active.find(e.name);
        if (!bits || static_cast<i64>(bits->size()) != e.tensor.size()) {
            throw InvariantError("active mask misaligned with parameter " + e.name);
        }
        const auto* init_vals = initial.find(e.name);
        if (!init_vals || init_vals->size() != e.tensor.values().size()) {
            throw StateError("initial snapshot missing parameter " + e.name);
        }
        for (std::size_t j = 0; j < bits->size(); ++j) {
            if (!(*bits)[j]) continue;
            PruneScore s;
            s.weight_index = e.base + static_cast<i64>(j);
            s.current_value = e.tensor.values()[j];
            s.initial_value = (*init_vals)[j];
            s.criterion = std::abs(s.current_value) - std::abs(s.initial_value);
            scores.push_back(s);
        }
    }
    return scores;
}

MaskSet prune_layerwise(ParamStore& params, const MaskSet& active,
                        const std::vector<PruneScore>& scores, double fraction) {
    if (fraction <= 0.0 || fraction >= 1.0) {
        throw ConfigError("prune fraction must be in (0,1), got " + std::to_string(fraction));
    }
    MaskSet next = active;
    std::size_t cursor = 0;  // scores are emitted in store order
    for (auto& [name, bits] : next.masks()) {
        const auto& entry = params.at(name);
        const i64 base = entry.base;
        const i64 size = entry.tensor.size();
        // Collect this tensor's slice of the score array.
        std::vector<const PruneScore*> layer;
        while (cursor < scores.size() && scores[cursor].weight_index >= base &&
               scores[cursor].weight_index < base + size) {
            layer.push_back(&scores[cursor]);
            ++cursor;
        }
        if (layer.empty()) {
            std::cerr << "warning: no unpruned weights left in " << name << ", skipping\n";
            continue;
        }
        const i64 to_prune = round_half_even(fraction * static_cast<double>(layer.size()));
        if (to_prune <= 0) continue;
        std::nth_element(layer.begin(), layer.begin() + (to_prune - 1), layer.end(),
                         [](const PruneScore* a, const PruneScore* b) {
                             if (a->criterion != b->criterion) return a->criterion < b->criterion;
                             return a->weight_index < b->weight_index;
                         });
        for (i64 i = 0; i < to_prune; ++i) {
            bits[static_cast<std::size_t>(layer[static_cast<std::size_t>(i)]->weight_index - base)] = 0;
        }
    }
    apply_mask(params, next);
    return next;
}

double capacity_pct(const MaskSet& masks, const ParamStore& params) {
    const i64 total = params.prunable_weight_count();
    if (total == 0) return 100.0;
    return 100.0 * static_cast<double>(masks.active_count()) / static_cast<double>(total);
}

void apply_mask(ParamStore& params, const MaskSet& masks) {
    auto& global = params.active_mask();
    for (const auto& [name, bits] : masks.masks()) {
        auto& entry = params.at(name);
        if (static_cast<i64>(bits.size()) != entry.tensor.size()) {
            throw InvariantError("mask misaligned with parameter " + name);
        }
        auto& values = entry.tensor.values();
        for (std::size_t j = 0; j < bits.size(); ++j) {
            global[static_cast<std::size_t>(entry.base) + j] = bits[j];
            if (!bits[j]) values[j] = 0.0;
        }
    }
}

}  // namespace cupcur

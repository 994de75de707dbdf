#include "cupcur/param_store.hpp"

#include <cmath>

#include "cupcur/error.hpp"

namespace cupcur {

const std::vector<double>* Snapshot::find(const std::string& name) const {
    for (const auto& [n, v] : params) {
        if (n == name) return &v;
    }
    return nullptr;
}

Tensor& ParamStore::add(std::string name, Tensor tensor, bool prunable, ParamInit init) {
    if (by_name_.count(name)) throw InvariantError("duplicate parameter name: " + name);
    ParamEntry e;
    e.name = std::move(name);
    e.tensor = std::move(tensor);
    e.prunable = prunable;
    e.base = weight_count_;
    e.init = init;
    weight_count_ += e.tensor.size();
    by_name_.emplace(e.name, entries_.size());
    entries_.push_back(std::move(e));
    active_mask_.resize(static_cast<std::size_t>(weight_count_), 1);
    return entries_.back().tensor;
}

ParamEntry& ParamStore::at(const std::string& name) {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw InvariantError("unknown parameter: " + name);
    return entries_[it->second];
}

const ParamEntry& ParamStore::at(const std::string& name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw InvariantError("unknown parameter: " + name);
    return entries_[it->second];
}

std::int64_t ParamStore::prunable_weight_count() const {
    std::int64_t n = 0;
    for (const auto& e : entries_) {
        if (e.prunable) n += e.tensor.size();
    }
    return n;
}

const ParamEntry& ParamStore::entry_for_index(std::int64_t global_index, std::int64_t& offset_out) const {
    if (global_index < 0 || global_index >= weight_count_) {
        throw IndexError("weight index out of range: " + std::to_string(global_index));
    }
    // entries are sorted by base; binary search for the owning tensor
    std::size_t lo = 0, hi = entries_.size();
    while (hi - lo > 1) {
        const std::size_t mid = (lo + hi) / 2;
        if (entries_[mid].base <= global_index) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    offset_out = global_index - entries_[lo].base;
    return entries_[lo];
}

ParamEntry& ParamStore::entry_for_index(std::int64_t global_index, std::int64_t& offset_out) {
    return const_cast<ParamEntry&>(
        static_cast<const ParamStore&>(*this).entry_for_index(global_index, offset_out));
}

void ParamStore::zero_grads() {
    for (auto& e : entries_) e.tensor.zero_grad();
}

Snapshot ParamStore::snapshot() const {
    Snapshot s;
    s.params.reserve(entries_.size());
    for (const auto& e : entries_) s.params.emplace_back(e.name, e.tensor.values());
    return s;
}

void ParamStore::restore(const Snapshot& snap) {
    if (snap.params.size() != entries_.size()) {
        throw InvariantError("snapshot parameter count mismatch");
    }
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const auto& [name, values] = snap.params[i];
        auto& e = entries_[i];
        if (name != e.name || static_cast<std::int64_t>(values.size()) != e.tensor.size()) {
            throw InvariantError("snapshot entry mismatch at " + name);
        }
        e.tensor.values() = values;
    }
}

void sgd_step(ParamStore& params, double lr, std::span<const double> scale,
              std::span<const std::uint8_t> mask) {
    const auto total = static_cast<std::size_t>(params.weight_count());
    if (scale.size() != total || mask.size() != total) {
        throw InvariantError("sgd_step scale/mask length mismatch");
    }
    for (auto& e : params.entries()) {
        const auto n = static_cast<std::size_t>(e.tensor.size());
        const auto base = static_cast<std::size_t>(e.base);
        auto& w = e.tensor.values();
        const auto& g = e.tensor.grad();
        for (std::size_t i = 0; i < n; ++i) {
            if (mask[base + i]) w[i] -= lr * scale[base + i] * g[i];
        }
    }
}

double grad_norm(const ParamStore& params) {
    double sq = 0.0;
    for (const auto& e : params.entries()) {
        for (const double g : e.tensor.grad()) sq += g * g;
    }
    return std::sqrt(sq);
}

double clip_grad_norm(ParamStore& params, double max_norm) {
    const double norm = grad_norm(params);
    if (norm <= max_norm || norm == 0.0) return 1.0;
    const double factor = max_norm / norm;
    for (auto& e : params.entries()) {
        for (double& g : e.tensor.grad()) g *= factor;
    }
    return factor;
}

}  // namespace cupcur

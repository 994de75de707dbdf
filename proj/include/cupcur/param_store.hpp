#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cupcur/tensor.hpp"

namespace cupcur {

// Full deep copy of all parameter values, in store order.
struct Snapshot {
    std::vector<std::pair<std::string, std::vector<double>>> params;

    const std::vector<double>* find(const std::string& name) const;
    bool operator==(const Snapshot& other) const { return params == other.params; }
};

// Uniform init range a parameter was drawn from; (0,0) means constant init.
struct ParamInit {
    double low = 0.0;
    double high = 0.0;
};

struct ParamEntry {
    std::string name;
    Tensor tensor;
    bool prunable = false;
    std::int64_t base = 0;  // global index of this parameter's first weight
    ParamInit init;
};

// Named parameter tensors with a stable, contiguous global weight
// enumeration. Registration order is fixed by the model builder, so indices
// are deterministic given the config. Holds the run's active mask: a global
// 0/1 array aligned with the enumeration (non-prunable weights stay 1).
class ParamStore {
public:
    Tensor& add(std::string name, Tensor tensor, bool prunable, ParamInit init = {});

    bool contains(const std::string& name) const { return by_name_.count(name) != 0; }
    ParamEntry& at(const std::string& name);
    const ParamEntry& at(const std::string& name) const;

    std::vector<ParamEntry>& entries() { return entries_; }
    const std::vector<ParamEntry>& entries() const { return entries_; }

    std::int64_t weight_count() const { return weight_count_; }
    std::int64_t prunable_weight_count() const;

    // Maps a global weight index back to its parameter; offset_out receives
    // the position within that tensor.
    const ParamEntry& entry_for_index(std::int64_t global_index, std::int64_t& offset_out) const;
    ParamEntry& entry_for_index(std::int64_t global_index, std::int64_t& offset_out);

    void zero_grads();

    Snapshot snapshot() const;
    // Copies values from the snapshot into every parameter. Names and sizes
    // must match exactly.
    void restore(const Snapshot& snap);

    std::vector<std::uint8_t>& active_mask() { return active_mask_; }
    const std::vector<std::uint8_t>& active_mask() const { return active_mask_; }

private:
    std::vector<ParamEntry> entries_;
    std::unordered_map<std::string, std::size_t> by_name_;
    std::int64_t weight_count_ = 0;
    std::vector<std::uint8_t> active_mask_;
};

// w <- w - lr * scale[w] * grad[w] for every weight with mask[w] == 1.
// Masked-out weights receive no update (their values stay exactly 0 as long
// as they were zeroed when masked). scale/mask are indexed by the global
// weight enumeration and must cover the full store.
void sgd_step(ParamStore& params, double lr, std::span<const double> scale,
              std::span<const std::uint8_t> mask);

// Global L2 norm of all gradients.
double grad_norm(const ParamStore& params);

// Scales gradients so their global norm is at most max_norm.
// Returns the factor applied (1.0 if already within bounds).
double clip_grad_norm(ParamStore& params, double max_norm);

}  // namespace cupcur

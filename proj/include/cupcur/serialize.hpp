#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cupcur/curriculum.hpp"
#include "cupcur/data.hpp"
#include "cupcur/model.hpp"
#include "cupcur/pruning.hpp"

namespace cupcur {

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
void to_json(nlohmann::json& j, const CurriculumConfig& c);
void from_json(const nlohmann::json& j, CurriculumConfig& c);
void to_json(nlohmann::json& j, const OptimConfig& c);
void from_json(const nlohmann::json& j, OptimConfig& c);
void to_json(nlohmann::json& j, const DataConfig& c);
void from_json(const nlohmann::json& j, DataConfig& c);

// Self-describing binary model snapshot (MessagePack). Parameter values are
// stored as raw little-endian doubles, so save/load round-trips bitwise.
struct Checkpoint {
    ModelConfig config;
    std::uint64_t seed = 0;
    Snapshot params;
    MaskStack masks;                  // empty before any pruning
    std::vector<std::int32_t> ages;   // empty outside the growth phase

    static Checkpoint of(const TransformerLM& model);
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Rebuilds the model from a checkpoint: constructs from config/seed,
// restores parameter values, and re-applies the newest mask if any.
TransformerLM restore_model(const Checkpoint& ckpt);

// One metrics line: a compact JSON object (keys sorted, shortest
// round-trip doubles), identical across reruns of the same seed.
std::string metrics_line(const std::string& run_id, std::uint64_t seed, const EpochRow& row);

}  // namespace cupcur

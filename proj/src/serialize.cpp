#include "cupcur/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "cupcur/error.hpp"

namespace cupcur {

namespace {

using nlohmann::json;

std::vector<std::uint8_t> pack_doubles(const std::vector<double>& v) {
    std::vector<std::uint8_t> out(v.size() * 8);
    for (std::size_t i = 0; i < v.size(); ++i) {
        const auto bits = std::bit_cast<std::uint64_t>(v[i]);
        for (int b = 0; b < 8; ++b) out[i * 8 + b] = static_cast<std::uint8_t>(bits >> (8 * b));
    }
    return out;
}

std::vector<double> unpack_doubles(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() % 8 != 0) throw InputError("corrupt double payload");
    std::vector<double> out(bytes.size() / 8);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[i * 8 + b]) << (8 * b);
        out[i] = std::bit_cast<double>(bits);
    }
    return out;
}

std::string positional_name(Positional p) { return p == Positional::Learned ? "learned" : "sinusoidal"; }
Positional positional_from(const std::string& s) {
    if (s == "learned") return Positional::Learned;
    if (s == "sinusoidal") return Positional::Sinusoidal;
    throw ConfigError("unknown positional encoding: " + s);
}

std::string activation_name(Activation a) { return a == Activation::Relu ? "relu" : "gelu"; }
Activation activation_from(const std::string& s) {
    if (s == "relu") return Activation::Relu;
    if (s == "gelu") return Activation::Gelu;
    throw ConfigError("unknown activation: " + s);
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void to_json(json& j, const ModelConfig& c) {
    j = json{{"vocab_size", c.vocab_size}, {"d_model", c.d_model},     {"n_heads", c.n_heads},
             {"n_layers", c.n_layers},     {"d_ffn", c.d_ffn},         {"max_seq_len", c.max_seq_len},
             {"dropout_p", c.dropout_p},   {"positional", positional_name(c.positional)},
             {"activation", activation_name(c.activation)}};
}

void from_json(const json& j, ModelConfig& c) {
    maybe(j, "vocab_size", c.vocab_size);
    maybe(j, "d_model", c.d_model);
    maybe(j, "n_heads", c.n_heads);
    maybe(j, "n_layers", c.n_layers);
    maybe(j, "d_ffn", c.d_ffn);
    maybe(j, "max_seq_len", c.max_seq_len);
    maybe(j, "dropout_p", c.dropout_p);
    if (j.contains("positional")) c.positional = positional_from(j.at("positional").get<std::string>());
    if (j.contains("activation")) c.activation = activation_from(j.at("activation").get<std::string>());
}

void to_json(json& j, const CurriculumConfig& c) {
    j = json{{"n", c.n},
             {"m", c.m},
             {"epochs_per_cycle", c.epochs_per_cycle},
             {"prune_fraction", c.prune_fraction},
             {"rewinding", to_string(c.rewinding)},
             {"initialization", to_string(c.initialization)},
             {"update", to_string(c.update)},
             {"dynamic_factor", c.dynamic_factor},
             {"warmup_epochs", c.warmup_epochs},
             {"restore_full_capacity", c.restore_full_capacity},
             {"early_stop_within_cycle", c.early_stop_within_cycle},
             {"patience", c.patience}};
}

void from_json(const json& j, CurriculumConfig& c) {
    maybe(j, "n", c.n);
    maybe(j, "m", c.m);
    maybe(j, "epochs_per_cycle", c.epochs_per_cycle);
    maybe(j, "prune_fraction", c.prune_fraction);
    if (j.contains("rewinding")) c.rewinding = parse_rewinding(j.at("rewinding").get<std::string>());
    if (j.contains("initialization")) {
        c.initialization = parse_initialization(j.at("initialization").get<std::string>());
    }
    if (j.contains("update")) c.update = parse_update_scheme(j.at("update").get<std::string>());
    maybe(j, "dynamic_factor", c.dynamic_factor);
    maybe(j, "warmup_epochs", c.warmup_epochs);
    maybe(j, "restore_full_capacity", c.restore_full_capacity);
    maybe(j, "early_stop_within_cycle", c.early_stop_within_cycle);
    maybe(j, "patience", c.patience);
}

void to_json(json& j, const OptimConfig& c) {
    j = json{{"lr0", c.lr0},
             {"lr_decay", c.lr_decay},
             {"reset_lr_per_cycle", c.reset_lr_per_cycle},
             {"grad_clip", c.grad_clip}};
}

void from_json(const json& j, OptimConfig& c) {
    maybe(j, "lr0", c.lr0);
    maybe(j, "lr_decay", c.lr_decay);
    maybe(j, "reset_lr_per_cycle", c.reset_lr_per_cycle);
    maybe(j, "grad_clip", c.grad_clip);
}

void to_json(json& j, const DataConfig& c) {
    j = json{{"path", c.path},
             {"train_path", c.train_path},
             {"valid_path", c.valid_path},
             {"test_path", c.test_path},
             {"train_frac", c.train_frac},
             {"valid_frac", c.valid_frac},
             {"max_vocab", c.max_vocab},
             {"min_freq", c.min_freq},
             {"add_eos", c.add_eos},
             {"batch_size", c.batch_size},
             {"seq_len", c.seq_len},
             {"shuffle", c.shuffle}};
}

void from_json(const json& j, DataConfig& c) {
    maybe(j, "path", c.path);
    maybe(j, "train_path", c.train_path);
    maybe(j, "valid_path", c.valid_path);
    maybe(j, "test_path", c.test_path);
    maybe(j, "train_frac", c.train_frac);
    maybe(j, "valid_frac", c.valid_frac);
    maybe(j, "max_vocab", c.max_vocab);
    maybe(j, "min_freq", c.min_freq);
    maybe(j, "add_eos", c.add_eos);
    maybe(j, "batch_size", c.batch_size);
    maybe(j, "seq_len", c.seq_len);
    maybe(j, "shuffle", c.shuffle);
}

Checkpoint Checkpoint::of(const TransformerLM& model) {
    Checkpoint c;
    c.config = model.config();
    c.seed = model.seed();
    c.params = model.params().snapshot();
    return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    json j;
    j["format"] = "cupcur.checkpoint";
    j["version"] = 1;
    j["config"] = ckpt.config;
    j["seed"] = ckpt.seed;
    json params = json::array();
    for (const auto& [name, values] : ckpt.params.params) {
        params.push_back(json{{"name", name}, {"values", json::binary(pack_doubles(values))}});
    }
    j["params"] = std::move(params);
    json masks = json::array();
    for (const auto& mask_set : ckpt.masks.masks) {
        json one = json::array();
        for (const auto& [name, bits] : mask_set.masks()) {
            one.push_back(json{{"name", name},
                               {"bits", json::binary(std::vector<std::uint8_t>(bits.begin(), bits.end()))}});
        }
        masks.push_back(std::move(one));
    }
    j["masks"] = std::move(masks);
    std::vector<std::uint8_t> age_bytes(ckpt.ages.size() * 4);
    for (std::size_t i = 0; i < ckpt.ages.size(); ++i) {
        const auto u = static_cast<std::uint32_t>(ckpt.ages[i]);
        for (int b = 0; b < 4; ++b) age_bytes[i * 4 + b] = static_cast<std::uint8_t>(u >> (8 * b));
    }
    j["ages"] = json::binary(std::move(age_bytes));

    const auto blob = json::to_msgpack(j);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InputError("cannot write checkpoint to " + path);
    os.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InputError("cannot read checkpoint from " + path);
    std::vector<std::uint8_t> blob((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    const json j = json::from_msgpack(blob);
    if (j.value("format", "") != std::string("cupcur.checkpoint")) {
        throw InputError("not a checkpoint file: " + path);
    }
    Checkpoint c;
    c.config = j.at("config").get<ModelConfig>();
    c.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& p : j.at("params")) {
        c.params.params.emplace_back(p.at("name").get<std::string>(),
                                     unpack_doubles(p.at("values").get_binary()));
    }
    for (const auto& m : j.at("masks")) {
        MaskSet ms;
        for (const auto& entry : m) {
            const auto& bin = entry.at("bits").get_binary();
            ms.masks().emplace_back(entry.at("name").get<std::string>(),
                                    std::vector<std::uint8_t>(bin.begin(), bin.end()));
        }
        c.masks.push(std::move(ms));
    }
    const auto& age_bytes = j.at("ages").get_binary();
    c.ages.resize(age_bytes.size() / 4);
    for (std::size_t i = 0; i < c.ages.size(); ++i) {
        std::uint32_t u = 0;
        for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(age_bytes[i * 4 + b]) << (8 * b);
        c.ages[i] = static_cast<std::int32_t>(u);
    }
    return c;
}

TransformerLM restore_model(const Checkpoint& ckpt) {
    TransformerLM model(ckpt.config, ckpt.seed);
    model.params().restore(ckpt.params);
    if (!ckpt.masks.masks.empty()) apply_mask(model.params(), ckpt.masks.masks.back());
    return model;
}

std::string metrics_line(const std::string& run_id, std::uint64_t seed, const EpochRow& row) {
    const json j{{"run_id", run_id},
                 {"seed", seed},
                 {"phase", to_string(row.phase)},
                 {"cycle", row.cycle},
                 {"epoch", row.epoch},
                 {"train_loss", row.train_loss},
                 {"val_loss", row.val_loss},
                 {"capacity_pct", row.capacity_pct}};
    return j.dump();
}

}  // namespace cupcur

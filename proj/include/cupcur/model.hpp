#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cupcur/param_store.hpp"
#include "cupcur/rng.hpp"
#include "cupcur/tensor.hpp"

namespace cupcur {

enum class Positional { Learned, Sinusoidal };
enum class Activation { Relu, Gelu };

struct ModelConfig {
    std::int64_t vocab_size = 0;
    std::int64_t d_model = 64;
    std::int64_t n_heads = 2;
    std::int64_t n_layers = 2;
    std::int64_t d_ffn = 256;
    std::int64_t max_seq_len = 32;
    double dropout_p = 0.2;
    Positional positional = Positional::Learned;
    Activation activation = Activation::Relu;

    std::int64_t head_dim() const { return d_model / n_heads; }
    void validate() const;

    // Presets fix heads/layers; widths stay at the desk-scale defaults.
    static ModelConfig small_preset(std::int64_t vocab);   // 2 heads, 2 layers
    static ModelConfig medium_preset(std::int64_t vocab);  // 4 heads, 4 layers
    static ModelConfig large_preset(std::int64_t vocab);   // 8 heads, 8 layers
    static ModelConfig preset(const std::string& name, std::int64_t vocab);

    // Exact parameter counts as pure functions of the config.
    std::int64_t total_param_count() const;
    std::int64_t prunable_param_count() const;
};

// One training batch: token ids (batch x seq) with targets shifted by one.
struct Batch {
    std::int64_t batch_size = 0;
    std::int64_t seq_len = 0;
    std::vector<std::int32_t> inputs;   // row-major
    std::vector<std::int32_t> targets;
};

// Causal transformer encoder language model. Attention projections and FFN
// matrices are registered prunable; embeddings, biases, layer norms and the
// output head are not.
class TransformerLM {
public:
    TransformerLM(ModelConfig cfg, std::uint64_t seed);

    const ModelConfig& config() const { return cfg_; }
    std::uint64_t seed() const { return seed_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    // Mean next-token cross-entropy over the batch. dropout_rng is consumed
    // only in train mode.
    Tensor forward(Graph& g, const Batch& batch, bool train_mode, RngStream* dropout_rng = nullptr);

    // Next-token logits, shape (batch*seq, vocab).
    Tensor forward_logits(Graph& g, const Batch& batch, bool train_mode,
                          RngStream* dropout_rng = nullptr);

    // Mean loss over a batch list in eval mode.
    double eval_loss(const std::vector<Batch>& batches);

private:
    struct HeadMaps {
        std::vector<std::int64_t> split;  // (B*S,D) -> (B*H,S,hd)
        std::vector<std::int64_t> merge;  // (B*H,S,hd) -> (B*S,D)
    };
    const HeadMaps& head_maps(std::int64_t batch, std::int64_t seq);
    const Tensor& causal_bias(std::int64_t seq);
    const Tensor& positional_rows(std::int64_t batch, std::int64_t seq);

    ModelConfig cfg_;
    std::uint64_t seed_ = 0;
    ParamStore params_;
    std::map<std::pair<std::int64_t, std::int64_t>, HeadMaps> head_map_cache_;
    std::map<std::int64_t, Tensor> causal_bias_cache_;
    std::map<std::pair<std::int64_t, std::int64_t>, Tensor> sinusoidal_cache_;
};

// exp(mean cross-entropy); the per-word performance measure.
double perplexity(double loss);

}  // namespace cupcur

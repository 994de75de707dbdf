#include "cupcur/model.hpp"

#include <cmath>

#include "cupcur/error.hpp"

namespace cupcur {

namespace {

using i64 = std::int64_t;

Tensor draw_uniform(Shape shape, double low, double high, RngStream rng) {
    Tensor t = Tensor::zeros(std::move(shape), true);
    for (auto& v : t.values()) v = rng.uniform(low, high);
    return t;
}

double xavier_bound(i64 fan_in, i64 fan_out) {
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

constexpr double kEmbeddingInitBound = 0.1;

}  // namespace

void ModelConfig::validate() const {
    if (vocab_size < 1) throw ConfigError("vocab_size must be >= 1");
    if (d_model < 1 || n_layers < 1 || n_heads < 1 || d_ffn < 1 || max_seq_len < 1) {
        throw ConfigError("model dimensions must be positive");
    }
    if (d_model % n_heads != 0) {
        throw ConfigError("d_model " + std::to_string(d_model) + " not divisible by n_heads " +
                          std::to_string(n_heads));
    }
    if (dropout_p < 0.0 || dropout_p >= 1.0) throw ConfigError("dropout_p must be in [0,1)");
}

ModelConfig ModelConfig::small_preset(i64 vocab) {
    ModelConfig c;
    c.vocab_size = vocab;
    c.n_heads = 2;
    c.n_layers = 2;
    return c;
}

ModelConfig ModelConfig::medium_preset(i64 vocab) {
    ModelConfig c;
    c.vocab_size = vocab;
    c.n_heads = 4;
    c.n_layers = 4;
    return c;
}

ModelConfig ModelConfig::large_preset(i64 vocab) {
    ModelConfig c;
    c.vocab_size = vocab;
    c.n_heads = 8;
    c.n_layers = 8;
    return c;
}

ModelConfig ModelConfig::preset(const std::string& name, i64 vocab) {
    if (name == "small") return small_preset(vocab);
    if (name == "medium") return medium_preset(vocab);
    if (name == "large") return large_preset(vocab);
    throw ConfigError("unknown model preset: " + name);
}

std::int64_t ModelConfig::prunable_param_count() const {
    // Attention projections (q,k,v,o) plus the two FFN matrices, per layer.
    return n_layers * (4 * d_model * d_model + 2 * d_model * d_ffn);
}

std::int64_t ModelConfig::total_param_count() const {
    i64 n = vocab_size * d_model;                                  // token embedding
    if (positional == Positional::Learned) n += max_seq_len * d_model;
    n += prunable_param_count();
    n += n_layers * (4 * d_model + d_ffn);                         // attention + ffn biases
    n += n_layers * 4 * d_model;                                   // two layer norms
    n += d_model * vocab_size + vocab_size;                        // output head
    return n;
}

TransformerLM::TransformerLM(ModelConfig cfg, std::uint64_t seed) : cfg_(cfg), seed_(seed) {
    cfg_.validate();
    const RngStream init = RngStream::root(seed).child("init");
    const i64 d = cfg_.d_model, f = cfg_.d_ffn, v = cfg_.vocab_size;

    auto add_uniform = [&](const std::string& name, Shape shape, double bound, bool prunable) {
        params_.add(name, draw_uniform(std::move(shape), -bound, bound, init.child(name)), prunable,
                    ParamInit{-bound, bound});
    };
    auto add_const = [&](const std::string& name, Shape shape, double fill) {
        params_.add(name, Tensor::full(std::move(shape), fill, true), false);
    };

    add_uniform("tok_emb", {v, d}, kEmbeddingInitBound, false);
    if (cfg_.positional == Positional::Learned) {
        add_uniform("pos_emb", {cfg_.max_seq_len, d}, kEmbeddingInitBound, false);
    }
    for (i64 l = 0; l < cfg_.n_layers; ++l) {
        const std::string p = "layers." + std::to_string(l) + ".";
        const double attn_bound = xavier_bound(d, d);
        for (const char* w : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"}) {
            add_uniform(p + w, {d, d}, attn_bound, true);
        }
        for (const char* b : {"attn.bq", "attn.bk", "attn.bv", "attn.bo"}) {
            add_const(p + b, {d}, 0.0);
        }
        add_const(p + "ln1.gain", {d}, 1.0);
        add_const(p + "ln1.bias", {d}, 0.0);
        add_uniform(p + "ffn.w1", {d, f}, xavier_bound(d, f), true);
        add_const(p + "ffn.b1", {f}, 0.0);
        add_uniform(p + "ffn.w2", {f, d}, xavier_bound(f, d), true);
        add_const(p + "ffn.b2", {d}, 0.0);
        add_const(p + "ln2.gain", {d}, 1.0);
        add_const(p + "ln2.bias", {d}, 0.0);
    }
    add_uniform("head.w", {d, v}, kEmbeddingInitBound, false);
    add_const("head.b", {v}, 0.0);
}

const TransformerLM::HeadMaps& TransformerLM::head_maps(i64 batch, i64 seq) {
    const auto key = std::make_pair(batch, seq);
    auto it = head_map_cache_.find(key);
    if (it != head_map_cache_.end()) return it->second;

    const i64 h = cfg_.n_heads, hd = cfg_.head_dim(), d = cfg_.d_model;
    HeadMaps maps;
    maps.split.resize(static_cast<std::size_t>(batch * seq * d));
    maps.merge.resize(static_cast<std::size_t>(batch * seq * d));
    for (i64 b = 0; b < batch; ++b) {
        for (i64 s = 0; s < seq; ++s) {
            for (i64 head = 0; head < h; ++head) {
                for (i64 e = 0; e < hd; ++e) {
                    const i64 flat = (b * seq + s) * d + head * hd + e;
                    const i64 split = ((b * h + head) * seq + s) * hd + e;
                    maps.split[split] = flat;
                    maps.merge[flat] = split;
                }
            }
        }
    }
    return head_map_cache_.emplace(key, std::move(maps)).first->second;
}

const Tensor& TransformerLM::causal_bias(i64 seq) {
    auto it = causal_bias_cache_.find(seq);
    if (it != causal_bias_cache_.end()) return it->second;
    Tensor bias = Tensor::zeros({seq, seq});
    for (i64 i = 0; i < seq; ++i) {
        for (i64 j = i + 1; j < seq; ++j) bias.values()[i * seq + j] = -1e30;
    }
    return causal_bias_cache_.emplace(seq, std::move(bias)).first->second;
}

const Tensor& TransformerLM::positional_rows(i64 batch, i64 seq) {
    const auto key = std::make_pair(batch, seq);
    auto it = sinusoidal_cache_.find(key);
    if (it != sinusoidal_cache_.end()) return it->second;
    const i64 d = cfg_.d_model;
    Tensor pe = Tensor::zeros({batch * seq, d});
    for (i64 r = 0; r < batch * seq; ++r) {
        const i64 pos = r % seq;
        for (i64 j = 0; j < d; j += 2) {
            const double angle = static_cast<double>(pos) *
                                 std::exp(-std::log(10000.0) * static_cast<double>(j) / static_cast<double>(d));
            pe.values()[r * d + j] = std::sin(angle);
            if (j + 1 < d) pe.values()[r * d + j + 1] = std::cos(angle);
        }
    }
    return sinusoidal_cache_.emplace(key, std::move(pe)).first->second;
}

Tensor TransformerLM::forward(Graph& g, const Batch& batch, bool train_mode, RngStream* dropout_rng) {
    return g.softmax_ce_loss(forward_logits(g, batch, train_mode, dropout_rng), batch.targets);
}

Tensor TransformerLM::forward_logits(Graph& g, const Batch& batch, bool train_mode,
                                     RngStream* dropout_rng) {
    if (batch.seq_len > cfg_.max_seq_len) {
        throw ShapeError("sequence length " + std::to_string(batch.seq_len) + " exceeds max " +
                         std::to_string(cfg_.max_seq_len));
    }
    if (train_mode && cfg_.dropout_p > 0.0 && dropout_rng == nullptr) {
        throw UsageError("train-mode forward needs a dropout stream");
    }
    const i64 bsz = batch.batch_size, seq = batch.seq_len;
    const i64 d = cfg_.d_model, heads = cfg_.n_heads, hd = cfg_.head_dim();
    const i64 rows = bsz * seq;
    const double p = cfg_.dropout_p;
    RngStream dummy;
    RngStream& rng = dropout_rng ? *dropout_rng : dummy;

    auto drop = [&](const Tensor& t) { return g.dropout(t, p, train_mode, rng); };

    Tensor x = g.scale(g.embedding_lookup(params_.at("tok_emb").tensor, batch.inputs),
                       std::sqrt(static_cast<double>(d)));
    if (cfg_.positional == Positional::Learned) {
        std::vector<std::int32_t> pos_ids(static_cast<std::size_t>(rows));
        for (i64 r = 0; r < rows; ++r) pos_ids[r] = static_cast<std::int32_t>(r % seq);
        x = g.add(x, g.embedding_lookup(params_.at("pos_emb").tensor, pos_ids));
    } else {
        x = g.add(x, positional_rows(bsz, seq));
    }
    x = drop(x);

    const auto& maps = head_maps(bsz, seq);
    const Tensor& mask_bias = causal_bias(seq);
    const Shape heads_shape{bsz * heads, seq, hd};

    for (i64 l = 0; l < cfg_.n_layers; ++l) {
        const std::string pref = "layers." + std::to_string(l) + ".";
        auto P = [&](const std::string& n) -> const Tensor& { return params_.at(pref + n).tensor; };

        Tensor q = g.add_row_bias(g.matmul(x, P("attn.wq")), P("attn.bq"));
        Tensor k = g.add_row_bias(g.matmul(x, P("attn.wk")), P("attn.bk"));
        Tensor v = g.add_row_bias(g.matmul(x, P("attn.wv")), P("attn.bv"));
        q = g.permute(q, maps.split, heads_shape);
        k = g.permute(k, maps.split, heads_shape);
        v = g.permute(v, maps.split, heads_shape);

        Tensor scores = g.scale(g.bmm_nt(q, k), 1.0 / std::sqrt(static_cast<double>(hd)));
        Tensor probs = drop(g.softmax_rows(scores, &mask_bias));
        Tensor ctx = g.permute(g.bmm(probs, v), maps.merge, Shape{rows, d});

        Tensor attn_out = drop(g.add_row_bias(g.matmul(ctx, P("attn.wo")), P("attn.bo")));
        x = g.layer_norm(g.add(x, attn_out), P("ln1.gain"), P("ln1.bias"));

        Tensor hmid = g.add_row_bias(g.matmul(x, P("ffn.w1")), P("ffn.b1"));
        hmid = cfg_.activation == Activation::Relu ? g.relu(hmid) : g.gelu(hmid);
        hmid = drop(hmid);
        Tensor ffn_out = drop(g.add_row_bias(g.matmul(hmid, P("ffn.w2")), P("ffn.b2")));
        x = g.layer_norm(g.add(x, ffn_out), P("ln2.gain"), P("ln2.bias"));
    }

    return g.add_row_bias(g.matmul(x, params_.at("head.w").tensor), params_.at("head.b").tensor);
}

double TransformerLM::eval_loss(const std::vector<Batch>& batches) {
    if (batches.empty()) throw InputError("eval_loss needs at least one batch");
    double total = 0.0;
    for (const auto& b : batches) {
        Graph g(/*enable_grad=*/false);
        total += forward(g, b, /*train_mode=*/false).item();
    }
    return total / static_cast<double>(batches.size());
}

double perplexity(double loss) {
    if (loss < 0.0) throw InputError("perplexity needs a non-negative loss");
    return std::exp(loss);
}

}  // namespace cupcur

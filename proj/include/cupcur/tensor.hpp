#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "cupcur/rng.hpp"

namespace cupcur {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct TensorNode {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;  // sized like values iff requires_grad
    bool requires_grad = false;
};

}  // namespace detail

// Dense 64-bit float tensor. Value-semantic handle onto a shared node so
// graph closures and parameter stores can alias the same storage. Shapes
// are fixed at construction.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double fill, bool requires_grad = false);
    static Tensor from_values(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::int64_t size() const { return static_cast<std::int64_t>(node_->values.size()); }
    std::int64_t dim(std::size_t i) const { return node_->shape[i]; }
    std::size_t rank() const { return node_->shape.size(); }

    std::vector<double>& values() { return node_->values; }
    const std::vector<double>& values() const { return node_->values; }

    bool requires_grad() const { return node_->requires_grad; }
    std::vector<double>& grad();
    const std::vector<double>& grad() const;
    void zero_grad();

    // Scalar extraction; the tensor must hold exactly one element.
    double item() const;

    bool same_node(const Tensor& other) const { return node_ == other.node_; }

private:
    explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}
    std::shared_ptr<detail::TensorNode> node_;
};

// Reverse-mode tape. Ops append their backward closure in execution order;
// backward() replays the tape in exact reverse. One Graph per forward pass;
// gradients accumulate into leaf tensors (caller zeroes them).
class Graph {
public:
    Graph() = default;
    // enable_grad=false skips all tape recording (cheap eval-only forward).
    explicit Graph(bool enable_grad) : enable_grad_(enable_grad) {}

    // (M,K) x (K,N) -> (M,N)
    Tensor matmul(const Tensor& a, const Tensor& b);
    // Batched: (B,M,K) x (B,K,N) -> (B,M,N)
    Tensor bmm(const Tensor& a, const Tensor& b);
    // Batched with transposed rhs: (B,M,K) x (B,N,K) -> (B,M,N)
    Tensor bmm_nt(const Tensor& a, const Tensor& b);

    Tensor add(const Tensor& a, const Tensor& b);
    // Elementwise product of same-shape tensors.
    Tensor mul(const Tensor& a, const Tensor& b);
    // Sum of all elements -> scalar.
    Tensor sum(const Tensor& x);
    // (R,C) + (C,) broadcast over rows; works on any tensor whose last dim is C.
    Tensor add_row_bias(const Tensor& x, const Tensor& bias);
    Tensor scale(const Tensor& x, double factor);
    Tensor relu(const Tensor& x);
    Tensor gelu(const Tensor& x);

    // Normalizes over the last dimension; gain/bias have that length.
    Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

    // table (V,D), ids length L -> (L,D). Backward scatter-adds into table.
    Tensor embedding_lookup(const Tensor& table, const std::vector<std::int32_t>& ids);

    // Inverted dropout: keeps with probability 1-p and scales by 1/(1-p).
    // Identity when train_mode is false or p == 0.
    Tensor dropout(const Tensor& x, double p, bool train_mode, RngStream& rng);

    Tensor reshape(const Tensor& x, Shape new_shape);
    Tensor transpose2d(const Tensor& x);
    // Gather by precomputed index map: out[i] = x[index_map[i]]. The map must
    // be a bijection (used for head split/merge).
    Tensor permute(const Tensor& x, const std::vector<std::int64_t>& index_map, Shape out_shape);

    // Softmax over the last dimension of x (N,R,C) with an optional additive
    // bias (R,C) shared across the leading dimension. The bias is a constant
    // (attention masking), never differentiated.
    Tensor softmax_rows(const Tensor& x, const Tensor* additive_bias = nullptr);

    // logits (R,V), one target id per row -> scalar mean cross-entropy.
    // Max-shifted for numerical stability.
    Tensor softmax_ce_loss(const Tensor& logits, const std::vector<std::int32_t>& targets);

    // Seeds d(loss)/d(loss) = 1 and replays the tape in reverse.
    void backward(const Tensor& loss);

    std::size_t tape_size() const { return tape_.size(); }
    bool grad_enabled() const { return enable_grad_; }

private:
    void record(std::function<void()> fn) { tape_.push_back(std::move(fn)); }
    bool enable_grad_ = true;
    std::vector<std::function<void()>> tape_;
};

}  // namespace cupcur

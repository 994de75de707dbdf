#include "cupcur/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "cupcur/error.hpp"

namespace cupcur {

namespace {

using i64 = std::int64_t;

// c (M,N) += a (M,K) * b (K,N)
void mm_accum(const double* a, const double* b, double* c, i64 m, i64 k, i64 n) {
    for (i64 i = 0; i < m; ++i) {
        double* crow = c + i * n;
        const double* arow = a + i * k;
        for (i64 p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b + p * n;
            for (i64 j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// c (M,N) += a (M,K) * b (N,K)^T  -- row-by-row dot products
void mm_nt_accum(const double* a, const double* b, double* c, i64 m, i64 k, i64 n) {
    for (i64 i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (i64 j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double acc = 0.0;
            for (i64 p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] += acc;
        }
    }
}

// c (K,N) += a (M,K)^T * b (M,N)
void mm_tn_accum(const double* a, const double* b, double* c, i64 m, i64 k, i64 n) {
    for (i64 i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        const double* brow = b + i * n;
        for (i64 p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            double* crow = c + p * n;
            for (i64 j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

}  // namespace

std::int64_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), i64{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ')';
    return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double fill, bool requires_grad) {
    auto node = std::make_shared<detail::TensorNode>();
    const i64 n = shape_numel(shape);
    node->shape = std::move(shape);
    node->values.assign(static_cast<std::size_t>(n), fill);
    node->requires_grad = requires_grad;
    if (requires_grad) node->grad.assign(static_cast<std::size_t>(n), 0.0);
    return Tensor(std::move(node));
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values, bool requires_grad) {
    const i64 n = shape_numel(shape);
    if (n != static_cast<i64>(values.size())) {
        throw ShapeError("tensor values length " + std::to_string(values.size()) +
                         " does not match shape " + shape_str(shape));
    }
    auto node = std::make_shared<detail::TensorNode>();
    node->shape = std::move(shape);
    node->values = std::move(values);
    node->requires_grad = requires_grad;
    if (requires_grad) node->grad.assign(static_cast<std::size_t>(n), 0.0);
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from_values({1}, {value}, requires_grad);
}

std::vector<double>& Tensor::grad() {
    if (!node_->requires_grad) throw UsageError("tensor does not track gradients");
    return node_->grad;
}

const std::vector<double>& Tensor::grad() const {
    if (!node_->requires_grad) throw UsageError("tensor does not track gradients");
    return node_->grad;
}

void Tensor::zero_grad() {
    if (node_->requires_grad) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

double Tensor::item() const {
    if (size() != 1) throw UsageError("item() requires a single-element tensor, got " + shape_str(shape()));
    return node_->values[0];
}

// ---------------------------------------------------------------------------
// ops
// ---------------------------------------------------------------------------

Tensor Graph::matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    const i64 m = a.dim(0), k = a.dim(1), n = b.dim(1);
    const bool rg = enable_grad_ && (a.requires_grad() || b.requires_grad());
    Tensor out = Tensor::zeros({m, n}, rg);
    mm_accum(a.values().data(), b.values().data(), out.values().data(), m, k, n);
    if (rg) {
        record([a = a, b = b, out, m, k, n]() mutable {
            const double* dc = out.grad().data();
            if (a.requires_grad()) mm_nt_accum(dc, b.values().data(), a.grad().data(), m, n, k);
            if (b.requires_grad()) mm_tn_accum(a.values().data(), dc, b.grad().data(), m, k, n);
        });
    }
    return out;
}

Tensor Graph::bmm(const Tensor& a, const Tensor& b) {
    if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1)) {
        throw ShapeError("bmm shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    const i64 nb = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
    const bool rg = enable_grad_ && (a.requires_grad() || b.requires_grad());
    Tensor out = Tensor::zeros({nb, m, n}, rg);
    for (i64 t = 0; t < nb; ++t) {
        mm_accum(a.values().data() + t * m * k, b.values().data() + t * k * n,
                 out.values().data() + t * m * n, m, k, n);
    }
    if (rg) {
        record([a = a, b = b, out, nb, m, k, n]() mutable {
            for (i64 t = 0; t < nb; ++t) {
                const double* dc = out.grad().data() + t * m * n;
                if (a.requires_grad()) {
                    mm_nt_accum(dc, b.values().data() + t * k * n,
                                a.grad().data() + t * m * k, m, n, k);
                }
                if (b.requires_grad()) {
                    mm_tn_accum(a.values().data() + t * m * k, dc,
                                b.grad().data() + t * k * n, m, k, n);
                }
            }
        });
    }
    return out;
}

Tensor Graph::bmm_nt(const Tensor& a, const Tensor& b) {
    if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2)) {
        throw ShapeError("bmm_nt shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    const i64 nb = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(1);
    const bool rg = enable_grad_ && (a.requires_grad() || b.requires_grad());
    Tensor out = Tensor::zeros({nb, m, n}, rg);
    for (i64 t = 0; t < nb; ++t) {
        mm_nt_accum(a.values().data() + t * m * k, b.values().data() + t * n * k,
                    out.values().data() + t * m * n, m, k, n);
    }
    if (rg) {
        record([a = a, b = b, out, nb, m, k, n]() mutable {
            for (i64 t = 0; t < nb; ++t) {
                const double* dc = out.grad().data() + t * m * n;
                if (a.requires_grad()) {
                    mm_accum(dc, b.values().data() + t * n * k,
                             a.grad().data() + t * m * k, m, n, k);
                }
                if (b.requires_grad()) {
                    mm_tn_accum(dc, a.values().data() + t * m * k,
                                b.grad().data() + t * n * k, m, n, k);
                }
            }
        });
    }
    return out;
}

Tensor Graph::add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError("add shapes " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    const bool rg = enable_grad_ && (a.requires_grad() || b.requires_grad());
    Tensor out = Tensor::zeros(a.shape(), rg);
    const i64 n = a.size();
    for (i64 i = 0; i < n; ++i) out.values()[i] = a.values()[i] + b.values()[i];
    if (rg) {
        record([a = a, b = b, out, n]() mutable {
            const auto& d = out.grad();
            if (a.requires_grad()) {
                auto& ga = a.grad();
                for (i64 i = 0; i < n; ++i) ga[i] += d[i];
            }
            if (b.requires_grad()) {
                auto& gb = b.grad();
                for (i64 i = 0; i < n; ++i) gb[i] += d[i];
            }
        });
    }
    return out;
}

Tensor Graph::mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError("mul shapes " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    const bool rg = enable_grad_ && (a.requires_grad() || b.requires_grad());
    Tensor out = Tensor::zeros(a.shape(), rg);
    const i64 n = a.size();
    for (i64 i = 0; i < n; ++i) out.values()[i] = a.values()[i] * b.values()[i];
    if (rg) {
        record([a = a, b = b, out, n]() mutable {
            const auto& d = out.grad();
            if (a.requires_grad()) {
                auto& ga = a.grad();
                for (i64 i = 0; i < n; ++i) ga[i] += d[i] * b.values()[i];
            }
            if (b.requires_grad()) {
                auto& gb = b.grad();
                for (i64 i = 0; i < n; ++i) gb[i] += d[i] * a.values()[i];
            }
        });
    }
    return out;
}

Tensor Graph::sum(const Tensor& x) {
    const bool rg = enable_grad_ && (x.requires_grad());
    double total = 0.0;
    for (const double v : x.values()) total += v;
    Tensor out = Tensor::scalar(total, rg);
    if (rg) {
        const i64 n = x.size();
        record([x = x, out, n]() mutable {
            auto& gx = x.grad();
            const double d = out.grad()[0];
            for (i64 i = 0; i < n; ++i) gx[i] += d;
        });
    }
    return out;
}

Tensor Graph::add_row_bias(const Tensor& x, const Tensor& bias) {
    if (x.rank() < 1 || bias.rank() != 1 || x.shape().back() != bias.dim(0)) {
        throw ShapeError("add_row_bias shapes " + shape_str(x.shape()) + " + " + shape_str(bias.shape()));
    }
    const i64 c = bias.dim(0);
    const i64 rows = x.size() / c;
    const bool rg = enable_grad_ && (x.requires_grad() || bias.requires_grad());
    Tensor out = Tensor::zeros(x.shape(), rg);
    for (i64 r = 0; r < rows; ++r) {
        const double* xi = x.values().data() + r * c;
        double* yo = out.values().data() + r * c;
        const double* bv = bias.values().data();
        for (i64 j = 0; j < c; ++j) yo[j] = xi[j] + bv[j];
    }
    if (rg) {
        record([x = x, bias = bias, out, rows, c]() mutable {
            const auto& d = out.grad();
            if (x.requires_grad()) {
                auto& gx = x.grad();
                for (i64 i = 0; i < rows * c; ++i) gx[i] += d[i];
            }
            if (bias.requires_grad()) {
                auto& gb = bias.grad();
                for (i64 r = 0; r < rows; ++r) {
                    const double* dr = d.data() + r * c;
                    for (i64 j = 0; j < c; ++j) gb[j] += dr[j];
                }
            }
        });
    }
    return out;
}

Tensor Graph::scale(const Tensor& x, double factor) {
    const bool rg = enable_grad_ && (x.requires_grad());
    Tensor out = Tensor::zeros(x.shape(), rg);
    const i64 n = x.size();
    for (i64 i = 0; i < n; ++i) out.values()[i] = x.values()[i] * factor;
    if (rg) {
        record([x = x, out, factor, n]() mutable {
            auto& gx = x.grad();
            const auto& d = out.grad();
            for (i64 i = 0; i < n; ++i) gx[i] += d[i] * factor;
        });
    }
    return out;
}

Tensor Graph::relu(const Tensor& x) {
    const bool rg = enable_grad_ && (x.requires_grad());
    Tensor out = Tensor::zeros(x.shape(), rg);
    const i64 n = x.size();
    for (i64 i = 0; i < n; ++i) out.values()[i] = x.values()[i] > 0.0 ? x.values()[i] : 0.0;
    if (rg) {
        record([x = x, out, n]() mutable {
            auto& gx = x.grad();
            const auto& d = out.grad();
            for (i64 i = 0; i < n; ++i) {
                if (x.values()[i] > 0.0) gx[i] += d[i];
            }
        });
    }
    return out;
}

Tensor Graph::gelu(const Tensor& x) {
    const bool rg = enable_grad_ && (x.requires_grad());
    Tensor out = Tensor::zeros(x.shape(), rg);
    const i64 n = x.size();
    for (i64 i = 0; i < n; ++i) {
        const double v = x.values()[i];
        out.values()[i] = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
    }
    if (rg) {
        record([x = x, out, n]() mutable {
            auto& gx = x.grad();
            const auto& d = out.grad();
            for (i64 i = 0; i < n; ++i) {
                const double v = x.values()[i];
                const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
                const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
                gx[i] += d[i] * (cdf + v * pdf);
            }
        });
    }
    return out;
}

Tensor Graph::layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    if (x.rank() < 1 || gain.rank() != 1 || bias.rank() != 1 ||
        x.shape().back() != gain.dim(0) || gain.dim(0) != bias.dim(0)) {
        throw ShapeError("layer_norm shapes " + shape_str(x.shape()) + ", gain " + shape_str(gain.shape()));
    }
    const i64 c = gain.dim(0);
    const i64 rows = x.size() / c;
    const bool rg = enable_grad_ && (x.requires_grad() || gain.requires_grad() || bias.requires_grad());
    Tensor out = Tensor::zeros(x.shape(), rg);
    auto xhat = std::make_shared<std::vector<double>>(static_cast<std::size_t>(x.size()));
    auto inv_std = std::make_shared<std::vector<double>>(static_cast<std::size_t>(rows));
    for (i64 r = 0; r < rows; ++r) {
        const double* xi = x.values().data() + r * c;
        double mean = 0.0;
        for (i64 j = 0; j < c; ++j) mean += xi[j];
        mean /= static_cast<double>(c);
        double var = 0.0;
        for (i64 j = 0; j < c; ++j) {
            const double dv = xi[j] - mean;
            var += dv * dv;
        }
        var /= static_cast<double>(c);
        const double istd = 1.0 / std::sqrt(var + eps);
        (*inv_std)[r] = istd;
        double* xh = xhat->data() + r * c;
        double* yo = out.values().data() + r * c;
        for (i64 j = 0; j < c; ++j) {
            xh[j] = (xi[j] - mean) * istd;
            yo[j] = xh[j] * gain.values()[j] + bias.values()[j];
        }
    }
    if (rg) {
        record([x = x, gain = gain, bias = bias, out, xhat, inv_std, rows, c]() mutable {
            const auto& d = out.grad();
            for (i64 r = 0; r < rows; ++r) {
                const double* dr = d.data() + r * c;
                const double* xh = xhat->data() + r * c;
                if (gain.requires_grad()) {
                    auto& gg = gain.grad();
                    for (i64 j = 0; j < c; ++j) gg[j] += dr[j] * xh[j];
                }
                if (bias.requires_grad()) {
                    auto& gb = bias.grad();
                    for (i64 j = 0; j < c; ++j) gb[j] += dr[j];
                }
                if (x.requires_grad()) {
                    auto& gx = x.grad();
                    double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
                    for (i64 j = 0; j < c; ++j) {
                        const double dxh = dr[j] * gain.values()[j];
                        sum_dxhat += dxh;
                        sum_dxhat_xhat += dxh * xh[j];
                    }
                    const double inv_c = 1.0 / static_cast<double>(c);
                    const double istd = (*inv_std)[r];
                    for (i64 j = 0; j < c; ++j) {
                        const double dxh = dr[j] * gain.values()[j];
                        gx[r * c + j] += istd * (dxh - inv_c * sum_dxhat - xh[j] * inv_c * sum_dxhat_xhat);
                    }
                }
            }
        });
    }
    return out;
}

Tensor Graph::embedding_lookup(const Tensor& table, const std::vector<std::int32_t>& ids) {
    if (table.rank() != 2) throw ShapeError("embedding table must be rank 2, got " + shape_str(table.shape()));
    const i64 v = table.dim(0), d = table.dim(1);
    const i64 l = static_cast<i64>(ids.size());
    for (const auto id : ids) {
        if (id < 0 || id >= v) {
            throw IndexError("embedding id " + std::to_string(id) + " out of range [0," + std::to_string(v) + ")");
        }
    }
    const bool rg = enable_grad_ && (table.requires_grad());
    Tensor out = Tensor::zeros({l, d}, rg);
    for (i64 r = 0; r < l; ++r) {
        const double* src = table.values().data() + static_cast<i64>(ids[r]) * d;
        std::copy(src, src + d, out.values().data() + r * d);
    }
    if (rg) {
        record([table = table, out, ids, l, d]() mutable {
            auto& gt = table.grad();
            const auto& dv = out.grad();
            for (i64 r = 0; r < l; ++r) {
                double* dst = gt.data() + static_cast<i64>(ids[r]) * d;
                const double* src = dv.data() + r * d;
                for (i64 j = 0; j < d; ++j) dst[j] += src[j];
            }
        });
    }
    return out;
}

Tensor Graph::dropout(const Tensor& x, double p, bool train_mode, RngStream& rng) {
    if (p < 0.0 || p >= 1.0) throw ConfigError("dropout rate must be in [0,1), got " + std::to_string(p));
    if (!train_mode || p == 0.0) return x;
    const i64 n = x.size();
    const double keep_scale = 1.0 / (1.0 - p);
    auto mult = std::make_shared<std::vector<double>>(static_cast<std::size_t>(n));
    const bool rg = enable_grad_ && (x.requires_grad());
    Tensor out = Tensor::zeros(x.shape(), rg);
    for (i64 i = 0; i < n; ++i) {
        const double m = rng.next_double() < p ? 0.0 : keep_scale;
        (*mult)[i] = m;
        out.values()[i] = x.values()[i] * m;
    }
    if (rg) {
        record([x = x, out, mult, n]() mutable {
            auto& gx = x.grad();
            const auto& d = out.grad();
            for (i64 i = 0; i < n; ++i) gx[i] += d[i] * (*mult)[i];
        });
    }
    return out;
}

Tensor Graph::reshape(const Tensor& x, Shape new_shape) {
    if (shape_numel(new_shape) != x.size()) {
        throw ShapeError("reshape " + shape_str(x.shape()) + " -> " + shape_str(new_shape));
    }
    const bool rg = enable_grad_ && (x.requires_grad());
    Tensor out = Tensor::from_values(std::move(new_shape), x.values(), rg);
    if (rg) {
        const i64 n = x.size();
        record([x = x, out, n]() mutable {
            auto& gx = x.grad();
            const auto& d = out.grad();
            for (i64 i = 0; i < n; ++i) gx[i] += d[i];
        });
    }
    return out;
}

Tensor Graph::transpose2d(const Tensor& x) {
    if (x.rank() != 2) throw ShapeError("transpose2d needs rank 2, got " + shape_str(x.shape()));
    const i64 r = x.dim(0), c = x.dim(1);
    const bool rg = enable_grad_ && (x.requires_grad());
    Tensor out = Tensor::zeros({c, r}, rg);
    for (i64 i = 0; i < r; ++i) {
        for (i64 j = 0; j < c; ++j) out.values()[j * r + i] = x.values()[i * c + j];
    }
    if (rg) {
        record([x = x, out, r, c]() mutable {
            auto& gx = x.grad();
            const auto& d = out.grad();
            for (i64 i = 0; i < r; ++i) {
                for (i64 j = 0; j < c; ++j) gx[i * c + j] += d[j * r + i];
            }
        });
    }
    return out;
}

Tensor Graph::permute(const Tensor& x, const std::vector<std::int64_t>& index_map, Shape out_shape) {
    if (static_cast<i64>(index_map.size()) != x.size() || shape_numel(out_shape) != x.size()) {
        throw ShapeError("permute map/shape mismatch for " + shape_str(x.shape()));
    }
    const i64 n = x.size();
    const bool rg = enable_grad_ && (x.requires_grad());
    Tensor out = Tensor::zeros(std::move(out_shape), rg);
    for (i64 i = 0; i < n; ++i) out.values()[i] = x.values()[index_map[i]];
    if (rg) {
        record([x = x, out, index_map, n]() mutable {
            auto& gx = x.grad();
            const auto& d = out.grad();
            for (i64 i = 0; i < n; ++i) gx[index_map[i]] += d[i];
        });
    }
    return out;
}

Tensor Graph::softmax_rows(const Tensor& x, const Tensor* additive_bias) {
    if (x.rank() < 1) throw ShapeError("softmax_rows needs rank >= 1");
    const i64 c = x.shape().back();
    const i64 rows = x.size() / c;
    i64 bias_rows = 0;
    if (additive_bias) {
        if (additive_bias->requires_grad()) throw UsageError("softmax additive bias must be a constant");
        if (additive_bias->size() % c != 0) {
            throw ShapeError("softmax bias shape " + shape_str(additive_bias->shape()));
        }
        bias_rows = additive_bias->size() / c;
        if (rows % bias_rows != 0) throw ShapeError("softmax bias does not tile input rows");
    }
    const bool rg = enable_grad_ && (x.requires_grad());
    Tensor out = Tensor::zeros(x.shape(), rg);
    for (i64 r = 0; r < rows; ++r) {
        const double* xi = x.values().data() + r * c;
        const double* bi = additive_bias ? additive_bias->values().data() + (r % bias_rows) * c : nullptr;
        double* yo = out.values().data() + r * c;
        double mx = -std::numeric_limits<double>::infinity();
        for (i64 j = 0; j < c; ++j) {
            const double v = xi[j] + (bi ? bi[j] : 0.0);
            yo[j] = v;
            mx = std::max(mx, v);
        }
        double sum = 0.0;
        for (i64 j = 0; j < c; ++j) {
            yo[j] = std::exp(yo[j] - mx);
            sum += yo[j];
        }
        const double inv = 1.0 / sum;
        for (i64 j = 0; j < c; ++j) yo[j] *= inv;
    }
    if (rg) {
        record([x = x, out, rows, c]() mutable {
            auto& gx = x.grad();
            const auto& d = out.grad();
            for (i64 r = 0; r < rows; ++r) {
                const double* p = out.values().data() + r * c;
                const double* dr = d.data() + r * c;
                double dot = 0.0;
                for (i64 j = 0; j < c; ++j) dot += dr[j] * p[j];
                for (i64 j = 0; j < c; ++j) gx[r * c + j] += (dr[j] - dot) * p[j];
            }
        });
    }
    return out;
}

Tensor Graph::softmax_ce_loss(const Tensor& logits, const std::vector<std::int32_t>& targets) {
    if (logits.rank() != 2) throw ShapeError("softmax_ce_loss logits must be rank 2");
    const i64 rows = logits.dim(0), v = logits.dim(1);
    if (static_cast<i64>(targets.size()) != rows) {
        throw ShapeError("softmax_ce_loss targets length " + std::to_string(targets.size()) +
                         " vs " + std::to_string(rows) + " rows");
    }
    for (const auto t : targets) {
        if (t < 0 || t >= v) {
            throw IndexError("target id " + std::to_string(t) + " out of range [0," + std::to_string(v) + ")");
        }
    }
    const bool rg = enable_grad_ && (logits.requires_grad());
    auto probs = std::make_shared<std::vector<double>>(static_cast<std::size_t>(rows * v));
    double total = 0.0;
    for (i64 r = 0; r < rows; ++r) {
        const double* xi = logits.values().data() + r * v;
        double mx = xi[0];
        for (i64 j = 1; j < v; ++j) mx = std::max(mx, xi[j]);
        double sum = 0.0;
        double* pr = probs->data() + r * v;
        for (i64 j = 0; j < v; ++j) {
            pr[j] = std::exp(xi[j] - mx);
            sum += pr[j];
        }
        const double inv = 1.0 / sum;
        for (i64 j = 0; j < v; ++j) pr[j] *= inv;
        total += std::log(sum) + mx - xi[targets[r]];
    }
    Tensor out = Tensor::scalar(total / static_cast<double>(rows), rg);
    if (rg) {
        record([logits = logits, out, probs, targets, rows, v]() mutable {
            auto& gx = logits.grad();
            const double d = out.grad()[0] / static_cast<double>(rows);
            for (i64 r = 0; r < rows; ++r) {
                const double* pr = probs->data() + r * v;
                double* gr = gx.data() + r * v;
                for (i64 j = 0; j < v; ++j) gr[j] += d * pr[j];
                gr[targets[r]] -= d;
            }
        });
    }
    return out;
}

void Graph::backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1) {
        throw UsageError("backward requires a scalar loss");
    }
    if (!loss.requires_grad()) {
        throw UsageError("backward on a loss that does not track gradients");
    }
    Tensor root = loss;  // non-const handle onto the same node
    root.grad()[0] += 1.0;
    for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) (*it)();
}

}  // namespace cupcur

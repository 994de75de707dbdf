#include <cmath>
#include <vector>

#include "cupcur/error.hpp"
#include "cupcur/param_store.hpp"
#include "cupcur/rng.hpp"
#include "cupcur/tensor.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace cupcur;

namespace {

Tensor random_tensor(Shape shape, RngStream& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape), true);
    for (auto& v : t.values()) v = rng.uniform(lo, hi);
    return t;
}

// FD-checks d(weighted sum of op(inputs)) / d(inputs) for every input.
void gradcheck(const std::function<Tensor(Graph&)>& op, std::vector<Tensor> inputs,
               double tol = 1e-3, int samples_per_input = 6) {
    Graph g;
    RngStream wrng = RngStream::root(99).child("gradcheck");
    for (auto& input : inputs) input.zero_grad();
    Tensor out = op(g);
    Tensor weights = random_tensor(out.shape(), wrng);
    weights = Tensor::from_values(out.shape(), weights.values(), false);
    Tensor loss = g.sum(g.mul(out, weights));
    g.backward(loss);

    auto forward_loss = [&]() {
        Graph fg;
        Tensor fout = op(fg);
        double total = 0.0;
        for (std::int64_t i = 0; i < fout.size(); ++i) total += fout.values()[i] * weights.values()[i];
        return total;
    };
    for (auto& input : inputs) {
        RngStream pick = RngStream::root(7).child("pick");
        for (int s = 0; s < samples_per_input; ++s) {
            const auto idx = static_cast<std::size_t>(pick.next_below(static_cast<std::uint64_t>(input.size())));
            const double fd = oracles::central_diff(forward_loss, input.values()[idx]);
            const double analytic = input.grad()[idx];
            CAPTURE(idx);
            CHECK(oracles::rel_err(analytic, fd) < tol);
        }
    }
}

}  // namespace

TEST_CASE("matmul identity and hand expansion") {
    Graph g;
    Tensor eye = Tensor::from_values({2, 2}, {1, 0, 0, 1});
    Tensor b = Tensor::from_values({2, 2}, {3, 4, 5, 6});
    Tensor out = g.matmul(eye, b);
    CHECK(out.values() == std::vector<double>{3, 4, 5, 6});

    Tensor row = Tensor::from_values({1, 2}, {1, 2});
    Tensor col = Tensor::from_values({2, 1}, {3, 4});
    CHECK(g.matmul(row, col).item() == doctest::Approx(11.0));
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
    Graph g;
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({2, 3});
    CHECK_THROWS_AS(g.matmul(a, b), ShapeError);
}

TEST_CASE("matmul gradient matches finite differences") {
    RngStream rng = RngStream::root(42);
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({4, 2}, rng);
    gradcheck([&](Graph& g) { return g.matmul(a, b); }, {a, b}, 1e-5);
}

TEST_CASE("batched matmuls match finite differences") {
    RngStream rng = RngStream::root(43);
    Tensor a = random_tensor({2, 3, 4}, rng);
    Tensor b = random_tensor({2, 4, 5}, rng);
    gradcheck([&](Graph& g) { return g.bmm(a, b); }, {a, b});

    Tensor c = random_tensor({2, 3, 4}, rng);
    Tensor d = random_tensor({2, 5, 4}, rng);
    gradcheck([&](Graph& g) { return g.bmm_nt(c, d); }, {c, d});
}

TEST_CASE("elementwise and shaping ops match finite differences") {
    RngStream rng = RngStream::root(44);
    Tensor x = random_tensor({3, 5}, rng);
    Tensor y = random_tensor({3, 5}, rng);
    Tensor bias = random_tensor({5}, rng);

    gradcheck([&](Graph& g) { return g.add(x, y); }, {x, y});
    gradcheck([&](Graph& g) { return g.mul(x, y); }, {x, y});
    gradcheck([&](Graph& g) { return g.add_row_bias(x, bias); }, {x, bias});
    gradcheck([&](Graph& g) { return g.scale(x, -2.5); }, {x});
    gradcheck([&](Graph& g) { return g.gelu(x); }, {x});
    gradcheck([&](Graph& g) { return g.transpose2d(x); }, {x});
    gradcheck([&](Graph& g) { return g.reshape(x, {5, 3}); }, {x});

    // keep relu inputs away from the kink
    Tensor xr = random_tensor({4, 4}, rng);
    for (auto& v : xr.values()) v += v >= 0.0 ? 0.5 : -0.5;
    gradcheck([&](Graph& g) { return g.relu(xr); }, {xr});
}

TEST_CASE("layer_norm gradient and constant-row behavior") {
    RngStream rng = RngStream::root(45);
    Tensor x = random_tensor({4, 6}, rng);
    Tensor gain = random_tensor({6}, rng, 0.5, 1.5);
    Tensor bias = random_tensor({6}, rng);
    gradcheck([&](Graph& g) { return g.layer_norm(x, gain, bias); }, {x, gain, bias});

    // zero variance: normalized output is zero before the affine part
    Graph g;
    Tensor c = Tensor::full({1, 6}, 3.25);
    Tensor ones = Tensor::full({6}, 1.0);
    Tensor zeros = Tensor::zeros({6});
    Tensor out = g.layer_norm(c, ones, zeros);
    for (const double v : out.values()) CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("embedding lookup gathers rows and scatter-adds gradients") {
    RngStream rng = RngStream::root(46);
    Tensor table = random_tensor({7, 3}, rng);
    const std::vector<std::int32_t> ids{1, 3, 1, 6};
    gradcheck([&](Graph& g) { return g.embedding_lookup(table, ids); }, {table});

    Graph g;
    CHECK_THROWS_AS(g.embedding_lookup(table, {7}), IndexError);
    CHECK_THROWS_AS(g.embedding_lookup(table, {-1}), IndexError);
}

TEST_CASE("softmax_rows matches finite differences with a causal bias") {
    RngStream rng = RngStream::root(47);
    Tensor x = random_tensor({2, 3, 3}, rng);
    Tensor bias = Tensor::zeros({3, 3});
    for (int i = 0; i < 3; ++i) {
        for (int j = i + 1; j < 3; ++j) bias.values()[i * 3 + j] = -1e30;
    }
    gradcheck([&](Graph& g) { return g.softmax_rows(x, &bias); }, {x});

    Graph g;
    Tensor probs = g.softmax_rows(x, &bias);
    for (int b = 0; b < 2; ++b) {
        CHECK(probs.values()[b * 9 + 1] == 0.0);  // masked: row 0 attends only to itself
        CHECK(probs.values()[b * 9 + 0] == doctest::Approx(1.0));
    }
}

TEST_CASE("softmax cross-entropy: uniform, saturated, and oracle cases") {
    Graph g;
    const std::int64_t v = 13;
    Tensor uniform = Tensor::full({2, v}, 0.7);
    CHECK(g.softmax_ce_loss(uniform, {3, 9}).item() ==
          doctest::Approx(std::log(static_cast<double>(v))));

    Tensor hot = Tensor::zeros({1, 4});
    hot.values()[2] = 1e9;
    CHECK(g.softmax_ce_loss(hot, {2}).item() == doctest::Approx(0.0));

    RngStream rng = RngStream::root(48);
    Tensor logits = random_tensor({4, 7}, rng, -2.0, 2.0);
    const std::vector<std::int32_t> targets{0, 6, 3, 3};
    const double got = g.softmax_ce_loss(logits, targets).item();
    const double want = oracles::direct_ce(logits.values(), targets, 4, 7);
    CHECK(oracles::rel_err(got, want) < 1e-10);

    CHECK_THROWS_AS(g.softmax_ce_loss(logits, {0, 1, 2, 7}), IndexError);
    gradcheck([&](Graph& gg) { return gg.softmax_ce_loss(logits, targets); }, {logits});
}

TEST_CASE("dropout: p=0 identity, eval identity, expectation, config error") {
    RngStream rng = RngStream::root(49);
    Tensor x = random_tensor({2, 8}, rng);
    Graph g;
    RngStream drop = RngStream::root(50).child("dropout");

    Tensor same = g.dropout(x, 0.0, true, drop);
    CHECK(same.same_node(x));
    Tensor eval_same = g.dropout(x, 0.4, false, drop);
    CHECK(eval_same.same_node(x));
    CHECK_THROWS_AS(g.dropout(x, 1.0, true, drop), ConfigError);
    CHECK_THROWS_AS(g.dropout(x, -0.1, true, drop), ConfigError);

    // Monte Carlo: E[dropout(x)] == x within 1% on 1e5 samples
    Tensor one = Tensor::full({1}, 1.0);
    const int n = 100000;
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        Graph gg;
        total += gg.dropout(one, 0.2, true, drop).values()[0];
    }
    CHECK(total / n == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("backward: square via repeated input, accumulation, disconnected leaf") {
    Tensor x = Tensor::from_values({1, 1}, {3.0}, true);
    Tensor unused = Tensor::from_values({1, 1}, {5.0}, true);
    Graph g;
    Tensor sq = g.matmul(x, x);  // x^2 exercises double-use accumulation
    g.backward(sq);
    CHECK(x.grad()[0] == doctest::Approx(6.0));
    CHECK(unused.grad()[0] == 0.0);

    CHECK_THROWS_AS(g.backward(g.matmul(x, Tensor::from_values({1, 2}, {1, 1}, true))), UsageError);
}

TEST_CASE("forward values are deterministic given the seed") {
    auto make_loss = [](std::uint64_t seed) {
        RngStream rng = RngStream::root(seed);
        Tensor a = random_tensor({4, 4}, rng);
        Tensor b = random_tensor({4, 4}, rng);
        Graph g;
        RngStream drop = RngStream::root(seed).child("d");
        return g.sum(g.dropout(g.matmul(a, b), 0.3, true, drop)).item();
    };
    CHECK(make_loss(123) == make_loss(123));
    CHECK(make_loss(123) != make_loss(124));
}

TEST_CASE("sgd_step applies lr, scale, and mask per weight") {
    ParamStore store;
    Tensor w = Tensor::from_values({4}, {1.0, 1.0, 1.0, 0.0}, true);
    store.add("w", w, true);
    auto& grad = store.at("w").tensor.grad();
    grad = {2.0, 2.0, 2.0, 2.0};

    const std::vector<double> scale{1.0, 0.0, 0.25, 1.0};
    const std::vector<std::uint8_t> mask{1, 1, 1, 0};
    sgd_step(store, 1.0, scale, mask);

    const auto& vals = store.at("w").tensor.values();
    CHECK(vals[0] == doctest::Approx(-1.0));   // plain step
    CHECK(vals[1] == doctest::Approx(1.0));    // frozen by scale 0
    CHECK(vals[2] == doctest::Approx(0.5));    // f^n scaling: delta -0.5
    CHECK(vals[3] == 0.0);                     // masked out, stays exactly 0

    const std::vector<double> short_scale{1.0};
    CHECK_THROWS_AS(sgd_step(store, 1.0, short_scale, mask), InvariantError);
}

TEST_CASE("masked weights stay exactly zero across arbitrary sgd steps") {
    RngStream rng = RngStream::root(51);
    ParamStore store;
    store.add("a", random_tensor({6, 6}, rng), true);
    store.add("b", random_tensor({10}, rng), true);
    const auto total = static_cast<std::size_t>(store.weight_count());

    std::vector<std::uint8_t> mask(total, 1);
    for (std::size_t i = 0; i < total; ++i) {
        if (rng.next_double() < 0.4) mask[i] = 0;
    }
    for (auto& e : store.entries()) {
        for (std::int64_t j = 0; j < e.tensor.size(); ++j) {
            if (!mask[static_cast<std::size_t>(e.base + j)]) e.tensor.values()[j] = 0.0;
        }
    }
    const std::vector<double> scale(total, 1.0);
    for (int step = 0; step < 20; ++step) {
        for (auto& e : store.entries()) {
            for (auto& gv : e.tensor.grad()) gv = rng.uniform(-3.0, 3.0);
        }
        sgd_step(store, 0.1, scale, mask);
    }
    for (const auto& e : store.entries()) {
        for (std::int64_t j = 0; j < e.tensor.size(); ++j) {
            if (!mask[static_cast<std::size_t>(e.base + j)]) CHECK(e.tensor.values()[j] == 0.0);
        }
    }
}

TEST_CASE("grad clipping rescales to the requested norm") {
    ParamStore store;
    Tensor w = Tensor::from_values({2}, {0.0, 0.0}, true);
    store.add("w", w, true);
    store.at("w").tensor.grad() = {3.0, 4.0};
    CHECK(grad_norm(store) == doctest::Approx(5.0));
    const double factor = clip_grad_norm(store, 1.0);
    CHECK(factor == doctest::Approx(0.2));
    CHECK(grad_norm(store) == doctest::Approx(1.0));
    CHECK(clip_grad_norm(store, 10.0) == 1.0);
}

TEST_CASE("permute round-trips through its inverse map") {
    RngStream rng = RngStream::root(52);
    Tensor x = random_tensor({2, 6}, rng);
    std::vector<std::int64_t> fwd(12), inv(12);
    std::vector<std::int64_t> perm(12);
    for (std::int64_t i = 0; i < 12; ++i) perm[i] = i;
    rng.shuffle(perm);
    for (std::int64_t i = 0; i < 12; ++i) {
        fwd[i] = perm[i];
        inv[perm[i]] = i;
    }
    Graph g;
    Tensor y = g.permute(x, fwd, {12});
    Tensor back = g.permute(y, inv, {2, 6});
    CHECK(back.values() == x.values());
    gradcheck([&](Graph& gg) { return gg.permute(x, fwd, {12}); }, {x});
}

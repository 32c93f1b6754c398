#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ttrec/fd_check.hpp"
#include "ttrec/graph.hpp"

using namespace ttrec;

namespace {

Tensor<double> vec(std::initializer_list<double> vals) {
    Tensor<double> t(Extents{static_cast<std::int64_t>(vals.size())});
    std::int64_t i = 0;
    for (double v : vals) t[i++] = v;
    return t;
}

} // namespace

TEST_CASE("softmax of a constant vector is uniform") {
    Graph<double> g;
    const auto& y = g.value(g.softmax(g.constant(vec({0, 0, 0}))));
    for (std::int64_t i = 0; i < 3; ++i) CHECK(y[i] == doctest::Approx(1.0 / 3));
}

TEST_CASE("layer normalization maps constant rows to zero") {
    Graph<double> g;
    Tensor<double> m(Extents{2, 4}, 3.25);
    const auto& y = g.value(g.layer_norm_rows(g.constant(m)));
    for (std::int64_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(0.0));
}

TEST_CASE("cosine similarity of a vector with itself is one") {
    Graph<double> g;
    NodeId v = g.constant(vec({0.3, -0.2, 0.05}));
    CHECK(g.scalar(g.cosine_sim(v, v)) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("sum backward is all ones; dot backward swaps operands") {
    ParamStore<double> store;
    Rng rng(3);
    store.add_uniform("w", Extents{3, 2}, rng);
    store.add("a", vec({1, 2, 3}));
    store.add("b", vec({-1, 0.5, 2}));

    Graph<double> g;
    NodeId loss = g.add(g.sum(g.param(store, "w")), g.dot(g.param(store, "a"), g.param(store, "b")));
    g.backward(loss);
    for (std::int64_t i = 0; i < 6; ++i) CHECK(store.grad("w")[i] == doctest::Approx(1.0));
    for (std::int64_t i = 0; i < 3; ++i) {
        CHECK(store.grad("a")[i] == doctest::Approx(store.value("b")[i]));
        CHECK(store.grad("b")[i] == doctest::Approx(store.value("a")[i]));
    }
}

TEST_CASE("backward twice without a rebuild is rejected") {
    ParamStore<double> store;
    store.add("x", vec({2}));
    Graph<double> g;
    NodeId loss = g.sum(g.param(store, "x"));
    g.backward(loss);
    CHECK_THROWS_AS(g.backward(loss), std::logic_error);
}

TEST_CASE("gradients accumulate when a parameter is used twice") {
    ParamStore<double> store;
    store.add("x", vec({3}));
    Graph<double> g;
    NodeId x = g.param(store, "x");
    NodeId loss = g.sum(g.mul(x, x)); // d/dx x^2 = 2x
    g.backward(loss);
    CHECK(store.grad("x")[0] == doctest::Approx(6.0));
}

TEST_CASE("shape mismatches are rejected with extents in the message") {
    Graph<double> g;
    NodeId a = g.constant(Tensor<double>(Extents{2, 3}));
    NodeId b = g.constant(Tensor<double>(Extents{4, 2}));
    try {
        g.matmul(a, b);
        FAIL("expected a shape error");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("(2, 3)") != std::string::npos);
        CHECK(msg.find("(4, 2)") != std::string::npos);
    }
}

TEST_CASE("finite differences confirm a chain exercising every primitive") {
    Rng seed_rng(90210);
    for (int trial = 0; trial < 5; ++trial) {
        ParamStore<double> store;
        Rng rng(seed_rng.next_u64());
        store.add_uniform("m1", Extents{4, 6}, rng, -0.5, 0.5);
        store.add_uniform("m2", Extents{6, 4}, rng, -0.5, 0.5);
        store.add_uniform("v1", Extents{4}, rng, -0.5, 0.5);
        store.add_uniform("v2", Extents{4}, rng, -0.5, 0.5);
        store.add_uniform("stp_a", Extents{3, 6}, rng, -0.5, 0.5);
        store.add_uniform("stp_b", Extents{3, 5}, rng, -0.5, 0.5);

        auto build = [&store](Graph<double>& g) {
            NodeId m1 = g.param(store, "m1");
            NodeId m2 = g.param(store, "m2");
            NodeId v1 = g.param(store, "v1");
            NodeId v2 = g.param(store, "v2");
            NodeId prod = g.matmul(m1, m2); // 4x4
            NodeId normed = g.layer_norm_rows(prod);
            NodeId gated = g.mul(g.sigmoid(normed), g.relu(g.add_row_broadcast(prod, v1)));
            NodeId attn = g.softmax_rows_causal(g.scale(gated, 0.7));
            NodeId pooled = g.mean_rows(g.concat_cols({attn, g.transpose(gated)}));
            NodeId row = g.row_gather(m1, {1, 3});
            NodeId merged = g.concat({g.mean_rows(row), v2});
            NodeId sm = g.softmax(g.mean_rows(g.reshape(merged, Extents{2, 4})));
            NodeId kl = g.dot(sm, g.sub(g.log_softmax(v2), g.log_op(g.clamp(sm, 1e-8, 1.0))));
            NodeId st = g.stp_op(g.param(store, "stp_a"), g.param(store, "stp_b"), 2);
            NodeId perm = g.permute(st, {9, 3, 5, 0, 7, 1}, Extents{6});
            NodeId cos = g.cosine_sim(g.exp_op(g.scale(g.mean_rows(g.reshape(perm, Extents{2, 3})), 0.3)),
                                      g.matmul(g.row_gather(m2, {2, 4}), g.mean_rows(attn)));
            NodeId lse = g.log_sum_exp(pooled);
            return g.add(g.add(g.sum(attn), g.scale(kl, 0.5)), g.add(g.mul(cos, cos), lse));
        };

        store.zero_grads();
        {
            Graph<double> g;
            g.backward(build(g));
        }
        auto rebuild = [&]() {
            Graph<double> g;
            return static_cast<double>(g.scalar(build(g)));
        };
        CHECK(fd_check<double>(rebuild, store, 1e-5) < 1e-6);
    }
}

TEST_CASE("stp backward matches finite differences for n in {1, 2, 4}") {
    for (std::int64_t n : {1, 2, 4}) {
        ParamStore<double> store;
        Rng rng(100 + static_cast<std::uint64_t>(n));
        store.add_uniform("a", Extents{3, n * 2}, rng, -1, 1);
        store.add_uniform("b", Extents{2, 3}, rng, -1, 1);
        auto rebuild = [&]() {
            Graph<double> g;
            NodeId c = g.stp_op(g.param(store, "a"), g.param(store, "b"), n);
            return static_cast<double>(g.scalar(g.sum(g.mul(c, c))));
        };
        store.zero_grads();
        {
            Graph<double> g;
            NodeId c = g.stp_op(g.param(store, "a"), g.param(store, "b"), n);
            g.backward(g.sum(g.mul(c, c)));
        }
        CHECK(fd_check<double>(rebuild, store, 1e-5) < 1e-7);
    }
}

TEST_CASE("quadratic loss gradient check is near machine precision") {
    ParamStore<double> store;
    Rng rng(55);
    store.add_uniform("w", Extents{5, 5}, rng, -1, 1);
    auto rebuild = [&]() {
        Graph<double> g;
        NodeId w = g.param(store, "w");
        return static_cast<double>(g.scalar(g.sum(g.mul(w, w))));
    };
    store.zero_grads();
    {
        Graph<double> g;
        NodeId w = g.param(store, "w");
        g.backward(g.sum(g.mul(w, w)));
    }
    CHECK(fd_check<double>(rebuild, store, 1e-4) < 1e-8);
}

TEST_CASE("softmax cross entropy toy gradient check") {
    ParamStore<double> store;
    Rng rng(77);
    store.add_uniform("logits", Extents{6}, rng, -1, 1);
    Tensor<double> onehot(Extents{6});
    onehot[2] = 1.0;
    auto rebuild = [&]() {
        Graph<double> g;
        NodeId p = g.softmax(g.param(store, "logits"));
        return static_cast<double>(
            g.scalar(g.scale(g.dot(g.log_op(p), g.constant(onehot)), -1.0)));
    };
    store.zero_grads();
    {
        Graph<double> g;
        NodeId p = g.softmax(g.param(store, "logits"));
        g.backward(g.scale(g.dot(g.log_op(p), g.constant(onehot)), -1.0));
    }
    CHECK(fd_check<double>(rebuild, store, 1e-5) < 1e-6);
}

TEST_CASE("fd_check rejects a non-finite loss") {
    ParamStore<double> store;
    store.add("x", vec({1}));
    store.zero_grads();
    auto bad = [&]() { return std::numeric_limits<double>::quiet_NaN(); };
    CHECK_THROWS_AS(fd_check<double>(bad, store), NumericalError);
}

TEST_CASE("dropout: evaluation is the identity, training mean matches it") {
    Rng rng(11);
    Tensor<double> x(Extents{50}, 1.0);
    {
        Graph<double> g(false);
        const auto& y = g.value(g.dropout(g.constant(x), 0.3));
        for (std::int64_t i = 0; i < x.size(); ++i) CHECK(y[i] == 1.0);
    }
    const int draws = 20000;
    const double p = 0.3;
    std::vector<double> mean(50, 0.0);
    Graph<double> keep(true, &rng); // one graph per draw below; this checks ctor
    for (int t = 0; t < draws; ++t) {
        Graph<double> g(true, &rng);
        const auto& y = g.value(g.dropout(g.constant(x), p));
        for (std::int64_t i = 0; i < x.size(); ++i) mean[static_cast<std::size_t>(i)] += y[i];
    }
    // per-entry mean of mask/(1-p) is 1 with variance p/(1-p); 3-sigma bound
    const double sigma = std::sqrt(p / (1 - p) / draws);
    for (double m : mean) CHECK(std::abs(m / draws - 1.0) < 3.5 * sigma);
}

TEST_CASE("adam: zero gradients leave parameters unchanged") {
    ParamStore<double> store;
    Rng rng(13);
    store.add_uniform("w", Extents{4}, rng);
    Tensor<double> before = store.value("w");
    store.zero_grads();
    store.adam_step(0.01, 0.9, 0.999, 1e-8, 0.0);
    for (std::int64_t i = 0; i < 4; ++i) CHECK(store.value("w")[i] == before[i]);
}

TEST_CASE("adam: first step with unit gradient moves by about the learning rate") {
    ParamStore<double> store;
    store.add("w", Tensor<double>::scalar(0.5));
    store.grad("w")[0] = 1.0;
    store.adam_step(0.001);
    // bias-corrected first step: lr * 1 / (1 + eps)
    CHECK(std::abs(0.5 - store.value("w")[0]) == doctest::Approx(0.001).epsilon(1e-6));
}

TEST_CASE("adam: identical stores and gradients stay bitwise identical") {
    auto make = [] {
        ParamStore<float> s;
        Rng rng(99);
        s.add_uniform("w", Extents{8}, rng);
        return s;
    };
    ParamStore<float> a = make(), b = make();
    for (int step = 0; step < 5; ++step) {
        for (std::int64_t i = 0; i < 8; ++i) {
            a.grad("w")[i] = static_cast<float>(0.1 * (i + step));
            b.grad("w")[i] = static_cast<float>(0.1 * (i + step));
        }
        a.adam_step(0.01, 0.9, 0.999, 1e-8, 1e-5);
        b.adam_step(0.01, 0.9, 0.999, 1e-8, 1e-5);
        a.zero_grads();
        b.zero_grads();
    }
    for (std::int64_t i = 0; i < 8; ++i) CHECK(a.value("w")[i] == b.value("w")[i]);
}

TEST_CASE("adam rejects non-finite parameters after a step") {
    ParamStore<double> store;
    store.add("w", Tensor<double>::scalar(1.0));
    store.grad("w")[0] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(store.adam_step(0.1), NumericalError);
}

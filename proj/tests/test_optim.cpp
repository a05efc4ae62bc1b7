// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "layerwise/optim.hpp"

using namespace layerwise;

namespace {

ModelConfig small() {
    ModelConfig cfg;
    cfg.n_layers = 2;
    cfg.d_model = 4;
    cfg.n_heads = 1;
    cfg.context_len = 3;
    cfg.vocab_size = 5;
    cfg.precision = Precision::verify64;
    return cfg;
}

std::vector<std::size_t> all_groups(const ParameterStore<double>& store) {
    std::vector<std::size_t> g(store.group_count());
    std::iota(g.begin(), g.end(), std::size_t{0});
    return g;
}

void fill_grads(ParameterStore<double>& store, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> dist(0.0, scale);
    for (auto& g : store.groups()) {
        for (auto& p : g.params) {
            for (std::size_t i = 0; i < p.grad().size(); ++i) p.grad()[i] = dist(rng);
        }
    }
}

// Textbook AdamW on one scalar, kept apart from the library loop.
struct ScalarAdamW {
    double w;
    double m = 0;
    double v = 0;
    int t = 0;

    void update(double g, double lr, double b1, double b2, double eps, double wd) {
        ++t;
        w = w - lr * wd * w;
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        const double mh = m / (1 - std::pow(b1, t));
        const double vh = v / (1 - std::pow(b2, t));
        w = w - lr * mh / (std::sqrt(vh) + eps);
    }
};

}  // namespace

TEST_CASE("lr warmup is linear then constant") {
    AdamWConfig cfg;
    cfg.lr = 1e-3;
    CHECK(lr_at(cfg, 0) == 1e-3);
    CHECK(lr_at(cfg, 12345) == 1e-3);
    cfg.warmup_steps = 10;
    CHECK(lr_at(cfg, 0) == 0.0);
    CHECK(lr_at(cfg, 5) == doctest::Approx(5e-4).epsilon(1e-15));
    CHECK(lr_at(cfg, 10) == 1e-3);
    CHECK(lr_at(cfg, 11) == 1e-3);
}

TEST_CASE("config validation") {
    AdamWConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.lr = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.beta2 = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.grad_clip_norm = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.warmup_steps = -1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("first step moves every weight by lr * g / (|g| + eps) plus decay") {
    auto store = init_model<double>(small());
    const auto before = store;
    OptState<double> state;
    const auto groups = all_groups(store);
    register_new_groups(state, store, std::span<const std::size_t>(groups));
    std::mt19937_64 rng(1);
    fill_grads(store, rng);

    AdamWConfig cfg;
    cfg.lr = 1e-2;
    cfg.weight_decay = 0.1;
    cfg.grad_clip_norm.reset();
    const auto report = step(store, state, cfg, 1);
    CHECK(report.lr == 1e-2);
    CHECK_FALSE(report.clipped);

    double worst = 0;
    for (std::size_t g = 0; g < store.group_count(); ++g) {
        for (std::size_t k = 0; k < store.group(g).params.size(); ++k) {
            const auto& p = store.group(g).params[k];
            const auto& w0 = before.group(g).params[k].value();
            const double wd = p.value().rank() >= 2 ? cfg.weight_decay : 0.0;
            for (std::size_t i = 0; i < p.value().size(); ++i) {
                const double gi = p.grad()[i];
                const double expected = w0[i] * (1 - cfg.lr * wd) - cfg.lr * gi / (std::abs(gi) + cfg.eps);
                worst = std::max(worst, std::abs(p.value()[i] - expected));
            }
        }
    }
    CHECK(worst < 1e-15);
}

TEST_CASE("multi-step trajectory matches a scalar reference") {
    auto store = init_model<double>(small());
    OptState<double> state;
    const auto groups = all_groups(store);
    register_new_groups(state, store, std::span<const std::size_t>(groups));
    AdamWConfig cfg;
    cfg.lr = 3e-3;
    cfg.warmup_steps = 3;
    cfg.grad_clip_norm.reset();

    // Track one matrix entry and one bias entry.
    auto& fc = store.block(1).params[kMlpFcWeight];
    auto& bias = store.block(1).params[kMlpFcBias];
    ScalarAdamW ref_w{fc.value()[5]};
    ScalarAdamW ref_b{bias.value()[2]};
    std::mt19937_64 rng(9);
    for (std::int64_t t = 1; t <= 7; ++t) {
        fill_grads(store, rng);
        const double lr = lr_at(cfg, t);
        ref_w.update(fc.grad()[5], lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay);
        ref_b.update(bias.grad()[2], lr, cfg.beta1, cfg.beta2, cfg.eps, 0.0);
        step(store, state, cfg, t);
        CHECK(fc.value()[5] == doctest::Approx(ref_w.w).epsilon(1e-13));
        CHECK(bias.value()[2] == doctest::Approx(ref_b.w).epsilon(1e-13));
    }
    CHECK(state.groups.at(store.block_group(1)).step == 7);
}

TEST_CASE("a late group starts its own bias correction at t = 1") {
    auto store = init_model<double>(small());
    OptState<double> state;
    const std::vector<std::size_t> first{0, 1, 3};
    register_new_groups(state, store, std::span<const std::size_t>(first));
    store.block(2).trainable = false;
    AdamWConfig cfg;
    cfg.grad_clip_norm.reset();
    cfg.weight_decay = 0.0;
    std::mt19937_64 rng(4);
    for (std::int64_t t = 1; t <= 20; ++t) {
        fill_grads(store, rng);
        step(store, state, cfg, t);
    }
    CHECK(state.groups.at(1).step == 20);
    CHECK_FALSE(state.registered(2));

    const std::vector<std::size_t> late{2};
    register_new_groups(state, store, std::span<const std::size_t>(late));
    store.block(2).trainable = true;
    const auto before = store.block(2);
    fill_grads(store, rng);
    step(store, state, cfg, 21);
    CHECK(state.groups.at(2).step == 1);
    CHECK(state.groups.at(1).step == 21);
    double worst = 0;
    for (std::size_t k = 0; k < before.params.size(); ++k) {
        const auto& p = store.block(2).params[k];
        for (std::size_t i = 0; i < p.value().size(); ++i) {
            const double gi = p.grad()[i];
            const double expected = before.params[k].value()[i] - cfg.lr * gi / (std::abs(gi) + cfg.eps);
            worst = std::max(worst, std::abs(p.value()[i] - expected));
        }
    }
    CHECK(worst < 1e-15);
}

TEST_CASE("frozen groups and their moments are untouched") {
    auto store = init_model<double>(small());
    OptState<double> state;
    const auto groups = all_groups(store);
    register_new_groups(state, store, std::span<const std::size_t>(groups));
    AdamWConfig cfg;
    std::mt19937_64 rng(2);
    fill_grads(store, rng);
    step(store, state, cfg, 1);

    store.embeddings().trainable = false;
    store.block(1).trainable = false;
    const auto emb = store.embeddings();
    const auto blk = store.block(1);
    const auto moments = state.groups.at(1).first;
    for (std::int64_t t = 2; t <= 11; ++t) {
        fill_grads(store, rng);
        step(store, state, cfg, t);
    }
    for (std::size_t k = 0; k < emb.params.size(); ++k) {
        CHECK(store.embeddings().params[k].value().bit_identical(emb.params[k].value()));
    }
    for (std::size_t k = 0; k < blk.params.size(); ++k) {
        CHECK(store.block(1).params[k].value().bit_identical(blk.params[k].value()));
        CHECK(state.groups.at(1).first[k].bit_identical(moments[k]));
    }
    CHECK(state.groups.at(1).step == 1);
    CHECK(state.groups.at(2).step == 11);
}

TEST_CASE("weight decay hits matrices only") {
    auto store = init_model<double>(small());
    OptState<double> state;
    const auto groups = all_groups(store);
    register_new_groups(state, store, std::span<const std::size_t>(groups));
    for (auto& p : store.block(1).params) p.value().fill(2.0);
    store.zero_grads();
    AdamWConfig cfg;
    cfg.lr = 0.01;
    cfg.weight_decay = 0.5;
    step(store, state, cfg, 1);
    // Zero gradient: Adam term is 0, so only decay acts.
    for (const auto& p : store.block(1).params) {
        const double expected = p.value().rank() >= 2 ? 2.0 * (1 - 0.005) : 2.0;
        for (std::size_t i = 0; i < p.value().size(); ++i) CHECK(p.value()[i] == expected);
    }
}

TEST_CASE("gradient clipping scales by max_norm / norm") {
    auto store = init_model<double>(small());
    OptState<double> state;
    const auto groups = all_groups(store);
    register_new_groups(state, store, std::span<const std::size_t>(groups));
    std::mt19937_64 rng(3);
    fill_grads(store, rng, 5.0);
    double sq = 0;
    for (const auto& g : store.groups()) {
        for (const auto& p : g.params) {
            for (std::size_t i = 0; i < p.grad().size(); ++i) sq += p.grad()[i] * p.grad()[i];
        }
    }
    const double norm = std::sqrt(sq);
    AdamWConfig cfg;
    cfg.grad_clip_norm = 1.0;
    const auto report = step(store, state, cfg, 1);
    CHECK(report.clipped);
    CHECK(report.grad_norm == doctest::Approx(norm).epsilon(1e-14));
    const auto& m = state.groups.at(0).first[0];
    const auto& g = store.embeddings().params[0].grad();
    for (std::size_t i = 0; i < 10; ++i) {
        CHECK(m[i] == doctest::Approx((1 - cfg.beta1) * g[i] / norm).epsilon(1e-14));
    }
}

TEST_CASE("optimizer errors") {
    auto store = init_model<double>(small());
    OptState<double> state;
    AdamWConfig cfg;
    CHECK_THROWS_AS(step(store, state, cfg, 1), ScheduleError);
    const std::vector<std::size_t> g0{0};
    register_new_groups(state, store, std::span<const std::size_t>(g0));
    CHECK_THROWS_AS(register_new_groups(state, store, std::span<const std::size_t>(g0)), ScheduleError);
    const std::vector<std::size_t> bad{99};
    CHECK_THROWS_AS(register_new_groups(state, store, std::span<const std::size_t>(bad)), ScheduleError);

    const auto rest = all_groups(store);
    const std::vector<std::size_t> others(rest.begin() + 1, rest.end());
    register_new_groups(state, store, std::span<const std::size_t>(others));
    store.zero_grads();
    store.block(2).params[0].grad()[3] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(step(store, state, cfg, 1), NumericError);
}

// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "gradient_oracle.hpp"
#include "layerwise/gptmodel.hpp"

using namespace layerwise;

namespace {

ModelConfig tiny(int layers = 3, std::uint64_t seed = 5) {
    ModelConfig cfg;
    cfg.n_layers = layers;
    cfg.d_model = 8;
    cfg.n_heads = 2;
    cfg.context_len = 6;
    cfg.vocab_size = 13;
    cfg.precision = Precision::verify64;
    cfg.init_seed = seed;
    return cfg;
}

std::vector<std::int32_t> tokens_for(const ModelConfig& cfg, std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::int32_t> pick(0, cfg.vocab_size - 1);
    std::vector<std::int32_t> t(n);
    for (auto& v : t) v = pick(rng);
    return t;
}

// One forward/backward pass on fixed data.
void accumulate(ParameterStore<double>& store, int depth, int lo, bool emb) {
    const auto& cfg = store.config();
    const auto in = tokens_for(cfg, 2 * 5, 1);
    const auto tg = tokens_for(cfg, 2 * 5, 2);
    const auto fwd = forward(store, std::span<const std::int32_t>(in), 2, 5, depth);
    DenseArray<double> dlogits;
    kernel::cross_entropy(fwd.logits, std::span<const std::int32_t>(tg), &dlogits);
    backward(store, fwd.tape, dlogits, depth, lo, emb);
}

bool all_zero(const ParameterGroup<double>& g) {
    for (const auto& p : g.params) {
        for (std::size_t i = 0; i < p.grad().size(); ++i) {
            if (p.grad()[i] != 0.0) return false;
        }
    }
    return true;
}

}  // namespace

TEST_CASE("parameter count matches the closed form and a hand count") {
    ModelConfig cfg;
    cfg.n_layers = 1;
    cfg.d_model = 2;
    cfg.n_heads = 1;
    cfg.context_len = 2;
    cfg.vocab_size = 4;
    // wte 4*2 + wpe 2*2 + block (ln 2+2, qkv 2*6+6, proj 2*2+2, ln 2+2, fc 2*8+8, proj 8*2+2) + ln_f 2+2
    const std::uint64_t hand = 8 + 4 + (4 + 18 + 6 + 4 + 24 + 18) + 4;
    CHECK(hand == 90);
    CHECK(count_params(cfg) == 90);
    CHECK(ParameterStore<double>(cfg).parameter_count() == 90);
    for (int layers : {1, 2, 5}) {
        for (int d : {4, 8, 12}) {
            ModelConfig c = tiny(layers);
            c.d_model = d;
            CHECK(count_params(c) == ParameterStore<float>(c).parameter_count());
        }
    }
}

TEST_CASE("config validation") {
    ModelConfig cfg = tiny();
    cfg.n_heads = 3;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = tiny();
    cfg.n_layers = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    CHECK(parse_precision("verify64") == Precision::verify64);
    CHECK(parse_precision("fast32") == Precision::fast32);
    CHECK_THROWS_AS(parse_precision("fp16"), ConfigError);
}

TEST_CASE("group layout and names") {
    ParameterStore<double> store(tiny(3));
    CHECK(store.group_count() == 5);
    CHECK(store.block_group(1) == 1);
    CHECK(store.final_norm_group() == 4);
    CHECK_THROWS_AS(store.block_group(0), ScheduleError);
    CHECK_THROWS_AS(store.block_group(4), ScheduleError);
    CHECK(store.embeddings().params[kTokenEmbedding].name == "wte");
    CHECK(store.block(2).params[kMlpFcWeight].name == "h2.mlp.fc.weight");
    CHECK(store.final_norm().params[kFinalGain].name == "ln_f.gain");
}

TEST_CASE("initialization is seeded per group") {
    const auto a = init_model<double>(tiny(3, 5));
    const auto b = init_model<double>(tiny(3, 5));
    const auto c = init_model<double>(tiny(3, 6));
    CHECK(a.bit_identical(b));
    CHECK_FALSE(a.bit_identical(c));

    auto d = init_model<double>(tiny(3, 5));
    for (auto& p : d.block(2).params) p.value().fill(0.25);
    CHECK_FALSE(d.bit_identical(a));
    init_group(d, d.block_group(2));
    CHECK(d.bit_identical(a));

    // A deeper model shares nothing with a shallower one except by seed, but
    // the embeddings stream is independent of depth.
    const auto deep = init_model<double>(tiny(4, 5));
    CHECK(deep.embeddings().bit_identical(a.embeddings()));
    CHECK(a.block(1).params[kLn1Gain].value()[0] == 1.0);
    CHECK(a.block(1).params[kAttnQkvBias].value()[0] == 0.0);
}

TEST_CASE("forward checks depth and sequence length") {
    const auto store = init_model<double>(tiny(3));
    const auto in = tokens_for(store.config(), 7, 1);
    CHECK_THROWS_AS(forward(store, std::span<const std::int32_t>(in).first(6), 1, 6, 0), ScheduleError);
    CHECK_THROWS_AS(forward(store, std::span<const std::int32_t>(in).first(6), 1, 6, 4), ScheduleError);
    CHECK_THROWS_AS(forward(store, std::span<const std::int32_t>(in), 1, 7, 3), DimensionError);
    const auto out = forward(store, std::span<const std::int32_t>(in).first(6), 1, 6, 2);
    CHECK(out.logits.shape() == Shape{1, 6, 13});
}

TEST_CASE("forward at depth k never reads deeper blocks") {
    auto store = init_model<double>(tiny(3));
    const auto in = tokens_for(store.config(), 10, 1);
    const auto before = forward(store, std::span<const std::int32_t>(in), 2, 5, 2);
    for (auto& p : store.block(3).params) p.value().fill(std::numeric_limits<double>::quiet_NaN());
    const auto after = forward(store, std::span<const std::int32_t>(in), 2, 5, 2);
    CHECK(after.logits.bit_identical(before.logits));
    CHECK_THROWS_AS(forward(store, std::span<const std::int32_t>(in), 2, 5, 3), NumericError);
}

TEST_CASE("forward is deterministic and position dependent") {
    const auto store = init_model<double>(tiny(2));
    const std::vector<std::int32_t> in{3, 3, 3, 3};
    const auto a = forward(store, std::span<const std::int32_t>(in), 1, 4, 2);
    const auto b = forward(store, std::span<const std::int32_t>(in), 1, 4, 2);
    CHECK(a.logits.bit_identical(b.logits));
    bool differs = false;
    for (std::size_t v = 0; v < 13; ++v) differs |= a.logits[v] != a.logits[13 + v];
    CHECK(differs);
}

TEST_CASE("backward touches only blocks in its gradient window") {
    auto store = init_model<double>(tiny(3));
    store.zero_grads();
    accumulate(store, 3, 3, false);
    CHECK(all_zero(store.embeddings()));
    CHECK(all_zero(store.final_norm()));
    CHECK(all_zero(store.block(1)));
    CHECK(all_zero(store.block(2)));
    CHECK_FALSE(all_zero(store.block(3)));

    store.zero_grads();
    accumulate(store, 2, 1, true);
    CHECK_FALSE(all_zero(store.embeddings()));
    CHECK_FALSE(all_zero(store.final_norm()));
    CHECK_FALSE(all_zero(store.block(1)));
    CHECK_FALSE(all_zero(store.block(2)));
    CHECK(all_zero(store.block(3)));
}

TEST_CASE("windowed gradients equal the full-backward gradients bit for bit") {
    auto full = init_model<double>(tiny(3));
    auto part = init_model<double>(tiny(3));
    full.zero_grads();
    part.zero_grads();
    accumulate(full, 3, 1, true);
    accumulate(part, 3, 2, false);
    CHECK(part.block(2).bit_identical(full.block(2)));
    CHECK(part.block(3).bit_identical(full.block(3)));
    for (const auto& p : part.block(3).params) {
        const auto& q = full.block(3).params[&p - part.block(3).params.data()];
        CHECK(p.grad().bit_identical(q.grad()));
    }
}

TEST_CASE("gradients accumulate exactly across backward passes") {
    auto store = init_model<double>(tiny(2));
    store.zero_grads();
    accumulate(store, 2, 1, true);
    std::vector<DenseArray<double>> once;
    for (const auto& g : store.groups()) {
        for (const auto& p : g.params) once.push_back(p.grad());
    }
    accumulate(store, 2, 1, true);
    std::size_t k = 0;
    bool exact = true;
    for (const auto& g : store.groups()) {
        for (const auto& p : g.params) {
            const auto& first = once[k++];
            for (std::size_t i = 0; i < first.size(); ++i) exact &= p.grad()[i] == 2.0 * first[i];
        }
    }
    CHECK(exact);
    store.zero_grads();
    for (const auto& g : store.groups()) CHECK(all_zero(g));
}

TEST_CASE("composed 2-layer model matches finite differences on every parameter") {
    for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
        for (const auto& c : layerwise::testing::model_gradient_checks(seed)) {
            INFO("seed ", seed, " ", c.name, " rel err ", c.error);
            CHECK(c.pass());
        }
    }
}

TEST_CASE("fast32 forward tracks verify64") {
    ModelConfig c64 = tiny(2);
    ModelConfig c32 = c64;
    c32.precision = Precision::fast32;
    const auto s64 = init_model<double>(c64);
    const auto s32 = init_model<float>(c32);
    const auto in = tokens_for(c64, 10, 3);
    const auto a = forward(s64, std::span<const std::int32_t>(in), 2, 5, 2);
    const auto b = forward(s32, std::span<const std::int32_t>(in), 2, 5, 2);
    double worst = 0;
    for (std::size_t i = 0; i < a.logits.size(); ++i) worst = std::max(worst, std::abs(a.logits[i] - b.logits[i]));
    CHECK(worst < 1e-5);
}

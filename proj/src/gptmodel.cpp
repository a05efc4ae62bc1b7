// SPDX-License-Identifier: Apache-2.0
#include "layerwise/gptmodel.hpp"

#include <Eigen/Core>

#include <cmath>
#include <random>
#include <string>

namespace layerwise {
namespace {

template <typename Real>
using RowMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Real>
using MatrixMap = Eigen::Map<RowMatrix<Real>>;
template <typename Real>
using ConstMatrixMap = Eigen::Map<const RowMatrix<Real>>;

template <typename Real>
ConstMatrixMap<Real> as_matrix(const DenseArray<Real>& a) {
    return ConstMatrixMap<Real>(a.data(), static_cast<Eigen::Index>(a.rows()), static_cast<Eigen::Index>(a.cols()));
}

template <typename Real>
MatrixMap<Real> as_matrix(DenseArray<Real>& a) {
    return MatrixMap<Real>(a.data(), static_cast<Eigen::Index>(a.rows()), static_cast<Eigen::Index>(a.cols()));
}

constexpr double kInitStd = 0.02;

template <typename Real>
Parameter<Real> make_param(std::string name, Shape shape) {
    return Parameter<Real>{std::move(name), DualBuffer<Real>(std::move(shape))};
}

template <typename Real>
void fill_normal(DenseArray<Real>& a, std::mt19937_64& rng, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    for (auto& v : a.values()) v = static_cast<Real>(dist(rng));
}

template <typename Real>
kernel::AttentionParams<Real> attention_params(const ParameterGroup<Real>& block) {
    return {block.params[kAttnQkvWeight].value(), block.params[kAttnQkvBias].value(),
            block.params[kAttnProjWeight].value(), block.params[kAttnProjBias].value()};
}

}  // namespace

std::string_view to_string(Precision p) {
    return p == Precision::verify64 ? "verify64" : "fast32";
}

Precision parse_precision(std::string_view text) {
    if (text == "verify64" || text == "64" || text == "f64") return Precision::verify64;
    if (text == "fast32" || text == "32" || text == "f32") return Precision::fast32;
    throw ConfigError("unknown precision '" + std::string(text) + "' (expected verify64 or fast32)");
}

void ModelConfig::validate() const {
    if (n_layers < 1) throw ConfigError("n_layers must be >= 1, got " + std::to_string(n_layers));
    if (d_model < 1) throw ConfigError("d_model must be >= 1, got " + std::to_string(d_model));
    if (n_heads < 1) throw ConfigError("n_heads must be >= 1, got " + std::to_string(n_heads));
    if (d_model % n_heads != 0) {
        throw ConfigError("d_model " + std::to_string(d_model) + " is not divisible by n_heads " +
                          std::to_string(n_heads));
    }
    if (context_len < 1) throw ConfigError("context_len must be >= 1, got " + std::to_string(context_len));
    if (vocab_size < 2) throw ConfigError("vocab_size must be >= 2, got " + std::to_string(vocab_size));
}

std::uint64_t count_params(const ModelConfig& cfg) {
    cfg.validate();
    const std::uint64_t d = static_cast<std::uint64_t>(cfg.d_model);
    const std::uint64_t per_block = 12 * d * d + 13 * d;
    return static_cast<std::uint64_t>(cfg.vocab_size) * d + static_cast<std::uint64_t>(cfg.context_len) * d +
           static_cast<std::uint64_t>(cfg.n_layers) * per_block + 2 * d;
}

// ---------------------------------------------------------------- store

template <typename Real>
std::size_t ParameterGroup<Real>::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params) n += p.value().size();
    return n;
}

template <typename Real>
void ParameterGroup<Real>::zero_grads() {
    for (auto& p : params) p.buffer.zero_grad();
}

template <typename Real>
bool ParameterGroup<Real>::bit_identical(const ParameterGroup& other) const {
    if (params.size() != other.params.size()) return false;
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].value().bit_identical(other.params[i].value())) return false;
    }
    return true;
}

template <typename Real>
ParameterStore<Real>::ParameterStore(const ModelConfig& cfg) : config_(cfg) {
    cfg.validate();
    const std::size_t d = static_cast<std::size_t>(cfg.d_model);
    const std::size_t v = static_cast<std::size_t>(cfg.vocab_size);
    const std::size_t ctx = static_cast<std::size_t>(cfg.context_len);

    ParameterGroup<Real> emb{"embeddings", {}, true};
    emb.params.push_back(make_param<Real>("wte", {v, d}));
    emb.params.push_back(make_param<Real>("wpe", {ctx, d}));
    groups_.push_back(std::move(emb));

    for (int layer = 1; layer <= cfg.n_layers; ++layer) {
        const std::string prefix = "h" + std::to_string(layer) + ".";
        ParameterGroup<Real> block{"block" + std::to_string(layer), {}, true};
        block.params.push_back(make_param<Real>(prefix + "ln1.gain", {d}));
        block.params.push_back(make_param<Real>(prefix + "ln1.bias", {d}));
        block.params.push_back(make_param<Real>(prefix + "attn.qkv.weight", {d, 3 * d}));
        block.params.push_back(make_param<Real>(prefix + "attn.qkv.bias", {3 * d}));
        block.params.push_back(make_param<Real>(prefix + "attn.proj.weight", {d, d}));
        block.params.push_back(make_param<Real>(prefix + "attn.proj.bias", {d}));
        block.params.push_back(make_param<Real>(prefix + "ln2.gain", {d}));
        block.params.push_back(make_param<Real>(prefix + "ln2.bias", {d}));
        block.params.push_back(make_param<Real>(prefix + "mlp.fc.weight", {d, 4 * d}));
        block.params.push_back(make_param<Real>(prefix + "mlp.fc.bias", {4 * d}));
        block.params.push_back(make_param<Real>(prefix + "mlp.proj.weight", {4 * d, d}));
        block.params.push_back(make_param<Real>(prefix + "mlp.proj.bias", {d}));
        groups_.push_back(std::move(block));
    }

    ParameterGroup<Real> final_norm{"final_norm", {}, true};
    final_norm.params.push_back(make_param<Real>("ln_f.gain", {d}));
    final_norm.params.push_back(make_param<Real>("ln_f.bias", {d}));
    groups_.push_back(std::move(final_norm));
}

template <typename Real>
std::size_t ParameterStore<Real>::block_group(int layer) const {
    if (layer < 1 || layer > config_.n_layers) {
        throw ScheduleError("block index " + std::to_string(layer) + " outside 1.." + std::to_string(config_.n_layers));
    }
    return static_cast<std::size_t>(layer);
}

template <typename Real>
void ParameterStore<Real>::zero_grads() {
    for (auto& g : groups_) g.zero_grads();
}

template <typename Real>
std::size_t ParameterStore<Real>::parameter_count() const {
    std::size_t n = 0;
    for (const auto& g : groups_) n += g.parameter_count();
    return n;
}

template <typename Real>
bool ParameterStore<Real>::bit_identical(const ParameterStore& other) const {
    if (!(config_ == other.config_) || groups_.size() != other.groups_.size()) return false;
    for (std::size_t g = 0; g < groups_.size(); ++g) {
        if (!groups_[g].bit_identical(other.groups_[g])) return false;
    }
    return true;
}

// ---------------------------------------------------------------- init

template <typename Real>
void init_group(ParameterStore<Real>& store, std::size_t group) {
    const ModelConfig& cfg = store.config();
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.init_seed), static_cast<std::uint32_t>(cfg.init_seed >> 32),
                      static_cast<std::uint32_t>(group)};
    std::mt19937_64 rng(seq);
    auto& g = store.group(group);
    const double residual_std = kInitStd / std::sqrt(2.0 * cfg.n_layers);

    if (group == ParameterStore<Real>::kEmbeddingGroup) {
        fill_normal(g.params[kTokenEmbedding].value(), rng, kInitStd);
        fill_normal(g.params[kPositionEmbedding].value(), rng, kInitStd);
    } else if (group == store.final_norm_group()) {
        g.params[kFinalGain].value().fill(Real{1});
        g.params[kFinalBias].value().fill(Real{0});
    } else {
        g.params[kLn1Gain].value().fill(Real{1});
        g.params[kLn1Bias].value().fill(Real{0});
        fill_normal(g.params[kAttnQkvWeight].value(), rng, kInitStd);
        g.params[kAttnQkvBias].value().fill(Real{0});
        fill_normal(g.params[kAttnProjWeight].value(), rng, residual_std);
        g.params[kAttnProjBias].value().fill(Real{0});
        g.params[kLn2Gain].value().fill(Real{1});
        g.params[kLn2Bias].value().fill(Real{0});
        fill_normal(g.params[kMlpFcWeight].value(), rng, kInitStd);
        g.params[kMlpFcBias].value().fill(Real{0});
        fill_normal(g.params[kMlpProjWeight].value(), rng, residual_std);
        g.params[kMlpProjBias].value().fill(Real{0});
    }
    g.zero_grads();
}

template <typename Real>
ParameterStore<Real> init_model(const ModelConfig& cfg) {
    ParameterStore<Real> store(cfg);
    for (std::size_t g = 0; g < store.group_count(); ++g) init_group(store, g);
    return store;
}

// ---------------------------------------------------------------- forward

template <typename Real>
ForwardResult<Real> forward(const ParameterStore<Real>& store, std::span<const std::int32_t> tokens,
                            std::size_t batch, std::size_t seq, int active_depth) {
    const ModelConfig& cfg = store.config();
    if (active_depth < 1 || active_depth > cfg.n_layers) {
        throw ScheduleError("active_depth " + std::to_string(active_depth) + " outside 1.." +
                            std::to_string(cfg.n_layers));
    }
    if (seq < 1 || seq > static_cast<std::size_t>(cfg.context_len)) {
        throw DimensionError("sequence length " + std::to_string(seq) + " exceeds context " +
                             std::to_string(cfg.context_len));
    }
    if (batch < 1 || tokens.size() != batch * seq) {
        throw DimensionError("expected " + std::to_string(batch * seq) + " tokens, got " + std::to_string(tokens.size()));
    }
    const std::size_t d = static_cast<std::size_t>(cfg.d_model);
    const std::size_t vocab = static_cast<std::size_t>(cfg.vocab_size);
    const std::size_t heads = static_cast<std::size_t>(cfg.n_heads);

    ForwardResult<Real> result;
    ActivationTape<Real>& tape = result.tape;
    tape.active_depth = active_depth;
    tape.batch = batch;
    tape.seq = seq;
    tape.tokens.assign(tokens.begin(), tokens.end());

    const auto& wte = store.embeddings().params[kTokenEmbedding].value();
    const auto& wpe = store.embeddings().params[kPositionEmbedding].value();
    DenseArray<Real> x({batch, seq, d});
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t t = 0; t < seq; ++t) {
            const std::int32_t tok = tokens[b * seq + t];
            if (tok < 0 || static_cast<std::size_t>(tok) >= vocab) {
                throw DataError("token id " + std::to_string(tok) + " outside vocabulary of " + std::to_string(vocab));
            }
            Real* out = x.data() + (b * seq + t) * d;
            const Real* te = wte.data() + static_cast<std::size_t>(tok) * d;
            const Real* pe = wpe.data() + t * d;
            for (std::size_t i = 0; i < d; ++i) out[i] = te[i] + pe[i];
        }
    }

    tape.blocks.resize(static_cast<std::size_t>(active_depth));
    for (int layer = 1; layer <= active_depth; ++layer) {
        const auto& p = store.block(layer).params;
        BlockTape<Real>& bt = tape.blocks[static_cast<std::size_t>(layer - 1)];
        bt.input = std::move(x);
        bt.ln1_out = kernel::layernorm(bt.input, p[kLn1Gain].value(), p[kLn1Bias].value(), kernel::kLayerNormEps,
                                       &bt.ln1);
        DenseArray<Real> attn_out =
            kernel::causal_self_attention(bt.ln1_out, attention_params(store.block(layer)), heads, &bt.attn);
        bt.mid = bt.input;
        kernel::add_inplace(bt.mid, attn_out);
        bt.ln2_out = kernel::layernorm(bt.mid, p[kLn2Gain].value(), p[kLn2Bias].value(), kernel::kLayerNormEps, &bt.ln2);
        bt.fc_out = kernel::linear(bt.ln2_out, p[kMlpFcWeight].value(), p[kMlpFcBias].value());
        bt.act = kernel::gelu(bt.fc_out);
        DenseArray<Real> mlp_out = kernel::linear(bt.act, p[kMlpProjWeight].value(), p[kMlpProjBias].value());
        x = bt.mid;
        kernel::add_inplace(x, mlp_out);
    }

    const auto& fp = store.final_norm().params;
    tape.final_input = std::move(x);
    tape.final_out = kernel::layernorm(tape.final_input, fp[kFinalGain].value(), fp[kFinalBias].value(),
                                       kernel::kLayerNormEps, &tape.final_ln);

    result.logits = DenseArray<Real>({batch, seq, vocab});
    as_matrix(result.logits).noalias() = as_matrix(tape.final_out) * as_matrix(wte).transpose();
    result.logits.require_finite("logits");
    return result;
}

// ---------------------------------------------------------------- backward

template <typename Real>
void backward(ParameterStore<Real>& store, const ActivationTape<Real>& tape, const DenseArray<Real>& dlogits,
              int active_depth, int grad_depth_lo, bool train_embeddings_head) {
    const ModelConfig& cfg = store.config();
    if (tape.active_depth != active_depth) {
        throw ScheduleError("tape recorded depth " + std::to_string(tape.active_depth) + " but backward requested " +
                            std::to_string(active_depth));
    }
    if (grad_depth_lo < 1 || grad_depth_lo > active_depth) {
        throw ScheduleError("grad_depth_lo " + std::to_string(grad_depth_lo) + " outside 1.." +
                            std::to_string(active_depth));
    }
    const std::size_t d = static_cast<std::size_t>(cfg.d_model);
    const std::size_t vocab = static_cast<std::size_t>(cfg.vocab_size);
    const std::size_t heads = static_cast<std::size_t>(cfg.n_heads);
    const std::size_t rows = tape.batch * tape.seq;
    if (dlogits.size() != rows * vocab) throw DimensionError("dlogits does not match the recorded batch");
    dlogits.require_finite("dlogits");

    auto& emb = store.embeddings();
    const auto& wte = emb.params[kTokenEmbedding].value();

    // Tied head: logits = final_out * wte^T.
    DenseArray<Real> dfinal_out(tape.final_out.shape());
    as_matrix(dfinal_out).noalias() = as_matrix(dlogits) * as_matrix(wte);
    DenseArray<Real> wte_grad;
    if (train_embeddings_head) {
        wte_grad = DenseArray<Real>(wte.shape());
        as_matrix(wte_grad).noalias() = as_matrix(dlogits).transpose() * as_matrix(tape.final_out);
    }

    auto& fp = store.final_norm().params;
    DenseArray<Real> dx;
    kernel::layernorm_backward(tape.final_input, fp[kFinalGain].value(), tape.final_ln, dfinal_out, &dx,
                               train_embeddings_head ? &fp[kFinalGain].grad() : nullptr,
                               train_embeddings_head ? &fp[kFinalBias].grad() : nullptr);

    const bool need_embedding_grad = train_embeddings_head && grad_depth_lo == 1;
    for (int layer = active_depth; layer >= grad_depth_lo; --layer) {
        auto& p = store.block(layer).params;
        const BlockTape<Real>& bt = tape.blocks[static_cast<std::size_t>(layer - 1)];
        const bool propagate = layer > grad_depth_lo || need_embedding_grad;

        // x_out = mid + mlp(ln2(mid)); dx holds d x_out.
        DenseArray<Real> dact;
        kernel::linear_backward(bt.act, p[kMlpProjWeight].value(), dx, &dact, &p[kMlpProjWeight].grad(),
                                &p[kMlpProjBias].grad());
        DenseArray<Real> dfc;
        kernel::gelu_backward(bt.fc_out, dact, &dfc);
        DenseArray<Real> dln2;
        kernel::linear_backward(bt.ln2_out, p[kMlpFcWeight].value(), dfc, &dln2, &p[kMlpFcWeight].grad(),
                                &p[kMlpFcBias].grad());
        DenseArray<Real> dmid_branch;
        kernel::layernorm_backward(bt.mid, p[kLn2Gain].value(), bt.ln2, dln2, &dmid_branch, &p[kLn2Gain].grad(),
                                   &p[kLn2Bias].grad());
        DenseArray<Real> dmid = std::move(dx);
        kernel::add_inplace(dmid, dmid_branch);

        // mid = input + attn(ln1(input))
        DenseArray<Real> dln1;
        kernel::causal_self_attention_backward(
            bt.ln1_out, attention_params(store.block(layer)), heads, bt.attn, dmid, &dln1,
            kernel::AttentionGrads<Real>{&p[kAttnQkvWeight].grad(), &p[kAttnQkvBias].grad(),
                                         &p[kAttnProjWeight].grad(), &p[kAttnProjBias].grad()});
        DenseArray<Real> dinput_branch;
        kernel::layernorm_backward(bt.input, p[kLn1Gain].value(), bt.ln1, dln1, propagate ? &dinput_branch : nullptr,
                                   &p[kLn1Gain].grad(), &p[kLn1Bias].grad());
        if (!propagate) break;
        dx = std::move(dmid);
        kernel::add_inplace(dx, dinput_branch);
    }

    if (!train_embeddings_head) return;

    if (need_embedding_grad) {
        auto& wpe_grad = emb.params[kPositionEmbedding].grad();
        DenseArray<Real> wpe_acc(wpe_grad.shape());
        for (std::size_t r = 0; r < rows; ++r) {
            const std::size_t t = r % tape.seq;
            const std::size_t tok = static_cast<std::size_t>(tape.tokens[r]);
            const Real* g = dx.data() + r * d;
            Real* te = wte_grad.data() + tok * d;
            Real* pe = wpe_acc.data() + t * d;
            for (std::size_t i = 0; i < d; ++i) {
                te[i] += g[i];
                pe[i] += g[i];
            }
        }
        kernel::add_inplace(wpe_grad, wpe_acc);
    }
    kernel::add_inplace(emb.params[kTokenEmbedding].grad(), wte_grad);
    emb.params[kTokenEmbedding].grad().require_finite("token embedding grad");
}

#define LAYERWISE_INSTANTIATE(Real)                                                                               \
    template struct ParameterGroup<Real>;                                                                         \
    template class ParameterStore<Real>;                                                                          \
    template void init_group(ParameterStore<Real>&, std::size_t);                                                 \
    template ParameterStore<Real> init_model(const ModelConfig&);                                                 \
    template ForwardResult<Real> forward(const ParameterStore<Real>&, std::span<const std::int32_t>, std::size_t, \
                                         std::size_t, int);                                                       \
    template void backward(ParameterStore<Real>&, const ActivationTape<Real>&, const DenseArray<Real>&, int, int, \
                           bool);

LAYERWISE_INSTANTIATE(float)
LAYERWISE_INSTANTIATE(double)

#undef LAYERWISE_INSTANTIATE

}  // namespace layerwise

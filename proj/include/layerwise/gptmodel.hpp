// SPDX-License-Identifier: Apache-2.0
//
// Decoder-only transformer (GPT-2 block layout: pre-layernorm, causal
// multi-head attention, 4x MLP with tanh-GELU, learned positions, tied
// embedding/LM head) that can run forward and backward through only its
// first `active_depth` blocks.
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "layerwise/dense_array.hpp"
#include "layerwise/numkernel.hpp"

namespace layerwise {

enum class Precision { verify64, fast32 };

std::string_view to_string(Precision p);
Precision parse_precision(std::string_view text);

struct ModelConfig {
    int n_layers = 8;
    int d_model = 128;
    int n_heads = 4;
    int context_len = 256;
    int vocab_size = 259;
    Precision precision = Precision::fast32;
    std::uint64_t init_seed = 1337;

    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

// Closed-form parameter count for the tied-embedding layout:
//   V*D + ctx*D + L*(12*D^2 + 13*D) + 2*D
std::uint64_t count_params(const ModelConfig& cfg);

// Parameter slots inside one transformer block, in storage order.
enum BlockParam : std::size_t {
    kLn1Gain,
    kLn1Bias,
    kAttnQkvWeight,
    kAttnQkvBias,
    kAttnProjWeight,
    kAttnProjBias,
    kLn2Gain,
    kLn2Bias,
    kMlpFcWeight,
    kMlpFcBias,
    kMlpProjWeight,
    kMlpProjBias,
    kBlockParamCount
};

enum EmbeddingParam : std::size_t { kTokenEmbedding, kPositionEmbedding };
enum FinalNormParam : std::size_t { kFinalGain, kFinalBias };

template <typename Real>
struct Parameter {
    std::string name;
    DualBuffer<Real> buffer;

    DenseArray<Real>& value() { return buffer.value; }
    const DenseArray<Real>& value() const { return buffer.value; }
    DenseArray<Real>& grad() { return buffer.grad; }
    const DenseArray<Real>& grad() const { return buffer.grad; }
};

template <typename Real>
struct ParameterGroup {
    std::string name;
    std::vector<Parameter<Real>> params;
    bool trainable = true;

    std::size_t parameter_count() const;
    void zero_grads();
    bool bit_identical(const ParameterGroup& other) const;
};

// All model parameters grouped as: group 0 = token/position embeddings
// (the token table doubles as the LM head), groups 1..L = transformer blocks,
// group L+1 = final layernorm.
template <typename Real>
class ParameterStore {
public:
    static constexpr std::size_t kEmbeddingGroup = 0;

    explicit ParameterStore(const ModelConfig& cfg);

    const ModelConfig& config() const noexcept { return config_; }
    std::size_t group_count() const noexcept { return groups_.size(); }
    std::size_t block_group(int layer) const;  // layer is 1-based
    std::size_t final_norm_group() const noexcept { return groups_.size() - 1; }

    ParameterGroup<Real>& group(std::size_t g) { return groups_.at(g); }
    const ParameterGroup<Real>& group(std::size_t g) const { return groups_.at(g); }
    ParameterGroup<Real>& block(int layer) { return groups_.at(block_group(layer)); }
    const ParameterGroup<Real>& block(int layer) const { return groups_.at(block_group(layer)); }
    ParameterGroup<Real>& embeddings() { return groups_.front(); }
    const ParameterGroup<Real>& embeddings() const { return groups_.front(); }
    ParameterGroup<Real>& final_norm() { return groups_.back(); }
    const ParameterGroup<Real>& final_norm() const { return groups_.back(); }

    std::vector<ParameterGroup<Real>>& groups() noexcept { return groups_; }
    const std::vector<ParameterGroup<Real>>& groups() const noexcept { return groups_; }

    void zero_grads();
    std::size_t parameter_count() const;
    bool bit_identical(const ParameterStore& other) const;

private:
    ModelConfig config_;
    std::vector<ParameterGroup<Real>> groups_;
};

// GPT-2 initialization: N(0, 0.02) weights and embeddings, zero biases, unit
// layernorm gains, residual output projections scaled by 1/sqrt(2L). Each
// group draws from its own stream seeded by (init_seed, group index), so a
// group can be re-drawn later without touching the others.
template <typename Real>
ParameterStore<Real> init_model(const ModelConfig& cfg);

template <typename Real>
void init_group(ParameterStore<Real>& store, std::size_t group);

template <typename Real>
struct BlockTape {
    DenseArray<Real> input;
    DenseArray<Real> ln1_out;
    kernel::LayerNormCache<Real> ln1;
    kernel::SelfAttentionCache<Real> attn;
    DenseArray<Real> mid;
    DenseArray<Real> ln2_out;
    kernel::LayerNormCache<Real> ln2;
    DenseArray<Real> fc_out;
    DenseArray<Real> act;
};

template <typename Real>
struct ActivationTape {
    int active_depth = 0;
    std::size_t batch = 0;
    std::size_t seq = 0;
    std::vector<std::int32_t> tokens;
    std::vector<BlockTape<Real>> blocks;
    DenseArray<Real> final_input;
    kernel::LayerNormCache<Real> final_ln;
    DenseArray<Real> final_out;
};

template <typename Real>
struct ForwardResult {
    DenseArray<Real> logits;  // [B, T, V]
    ActivationTape<Real> tape;
};

template <typename Real>
ForwardResult<Real> forward(const ParameterStore<Real>& store, std::span<const std::int32_t> tokens,
                            std::size_t batch, std::size_t seq, int active_depth);

// Accumulates gradients into blocks grad_depth_lo..active_depth (1-based,
// inclusive) and, when train_embeddings_head is set, into the embedding and
// final-norm groups. Nothing below grad_depth_lo is read or written.
template <typename Real>
void backward(ParameterStore<Real>& store, const ActivationTape<Real>& tape, const DenseArray<Real>& dlogits,
              int active_depth, int grad_depth_lo, bool train_embeddings_head);

}  // namespace layerwise

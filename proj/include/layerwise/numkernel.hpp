// SPDX-License-Identifier: Apache-2.0
//
// Forward/backward primitives for a GPT-2 style decoder block.
//
// Conventions shared by every backward function in this header:
//   * the gradient with respect to the op's input is WRITTEN (overwriting
//     whatever the output buffer held); pass nullptr to skip computing it;
//   * gradients with respect to parameters are ACCUMULATED into the caller's
//     grad buffers, so repeated backward passes sum.
// Every op rejects non-finite inputs and non-finite results with NumericError.
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "layerwise/dense_array.hpp"

namespace layerwise::kernel {

inline constexpr double kLayerNormEps = 1e-5;

// ---- linear: y = x * w + b, x:[..., Din], w:[Din, Dout], b:[Dout] ----------

template <typename Real>
DenseArray<Real> linear(const DenseArray<Real>& x, const DenseArray<Real>& w, const DenseArray<Real>& b);

template <typename Real>
void linear_backward(const DenseArray<Real>& x, const DenseArray<Real>& w, const DenseArray<Real>& dy,
                     DenseArray<Real>* dx, DenseArray<Real>* dw, DenseArray<Real>* db);

// ---- layernorm over the last axis -------------------------------------------

template <typename Real>
struct LayerNormCache {
    DenseArray<Real> mean;  // [rows]
    DenseArray<Real> rstd;  // [rows], 1/sqrt(var + eps)
};

template <typename Real>
DenseArray<Real> layernorm(const DenseArray<Real>& x, const DenseArray<Real>& gain, const DenseArray<Real>& bias,
                           double eps = kLayerNormEps, LayerNormCache<Real>* cache = nullptr);

template <typename Real>
void layernorm_backward(const DenseArray<Real>& x, const DenseArray<Real>& gain, const LayerNormCache<Real>& cache,
                        const DenseArray<Real>& dy, DenseArray<Real>* dx, DenseArray<Real>* dgain,
                        DenseArray<Real>* dbias);

// ---- GELU, tanh approximation -----------------------------------------------
//   gelu(x) = 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))

double gelu(double x);
double gelu_derivative(double x);

template <typename Real>
DenseArray<Real> gelu(const DenseArray<Real>& x);

template <typename Real>
void gelu_backward(const DenseArray<Real>& x, const DenseArray<Real>& dy, DenseArray<Real>* dx);

// ---- causal multi-head attention core -----------------------------------------
//
// Input is the fused projection qkv:[B, T, 3D] laid out as [q | k | v] with
// head h occupying columns [h*hd, (h+1)*hd) of each third. Output is the
// merged per-head context [B, T, D], before the output projection.

template <typename Real>
struct AttentionCache {
    DenseArray<Real> probs;  // [B, H, T, T], exact zeros above the diagonal
};

template <typename Real>
DenseArray<Real> causal_attention(const DenseArray<Real>& qkv, std::size_t heads,
                                  AttentionCache<Real>* cache = nullptr);

template <typename Real>
void causal_attention_backward(const DenseArray<Real>& qkv, std::size_t heads, const AttentionCache<Real>& cache,
                               const DenseArray<Real>& dy, DenseArray<Real>* dqkv);

// Full self-attention sublayer: fused qkv projection, causal attention, output
// projection.
template <typename Real>
struct AttentionParams {
    const DenseArray<Real>& qkv_w;   // [D, 3D]
    const DenseArray<Real>& qkv_b;   // [3D]
    const DenseArray<Real>& proj_w;  // [D, D]
    const DenseArray<Real>& proj_b;  // [D]
};

template <typename Real>
struct AttentionGrads {
    DenseArray<Real>* qkv_w;
    DenseArray<Real>* qkv_b;
    DenseArray<Real>* proj_w;
    DenseArray<Real>* proj_b;
};

template <typename Real>
struct SelfAttentionCache {
    DenseArray<Real> qkv;
    DenseArray<Real> context;
    AttentionCache<Real> attention;
};

template <typename Real>
DenseArray<Real> causal_self_attention(const DenseArray<Real>& x, const AttentionParams<Real>& params,
                                       std::size_t heads, SelfAttentionCache<Real>* cache);

template <typename Real>
void causal_self_attention_backward(const DenseArray<Real>& x, const AttentionParams<Real>& params,
                                    std::size_t heads, const SelfAttentionCache<Real>& cache,
                                    const DenseArray<Real>& dy, DenseArray<Real>* dx,
                                    const AttentionGrads<Real>& grads);

// ---- next-token cross-entropy ----------------------------------------------------
//
// logits:[B, T, V], targets: B*T ids. Returns the mean negative log-likelihood
// and, when dlogits is given, writes (softmax - onehot) / (B*T) into it.

template <typename Real>
double cross_entropy(const DenseArray<Real>& logits, std::span<const std::int32_t> targets,
                     DenseArray<Real>* dlogits = nullptr);

// Elementwise helpers used by the model's residual stream.
template <typename Real>
void add_inplace(DenseArray<Real>& acc, const DenseArray<Real>& other);

}  // namespace layerwise::kernel

// SPDX-License-Identifier: Apache-2.0
#include "layerwise/numkernel.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace layerwise::kernel {
namespace {

template <typename Real>
using RowMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Real>
using MatrixMap = Eigen::Map<RowMatrix<Real>>;
template <typename Real>
using ConstMatrixMap = Eigen::Map<const RowMatrix<Real>>;
template <typename Real>
using StridedMap = Eigen::Map<RowMatrix<Real>, 0, Eigen::OuterStride<>>;
template <typename Real>
using ConstStridedMap = Eigen::Map<const RowMatrix<Real>, 0, Eigen::OuterStride<>>;
template <typename Real>
using RowVectorMap = Eigen::Map<Eigen::Matrix<Real, 1, Eigen::Dynamic>>;
template <typename Real>
using ConstRowVectorMap = Eigen::Map<const Eigen::Matrix<Real, 1, Eigen::Dynamic>>;
template <typename Real>
using ArrayMap = Eigen::Map<Eigen::Array<Real, Eigen::Dynamic, 1>>;
template <typename Real>
using ConstArrayMap = Eigen::Map<const Eigen::Array<Real, Eigen::Dynamic, 1>>;

template <typename Real>
ConstMatrixMap<Real> as_matrix(const DenseArray<Real>& a) {
    return ConstMatrixMap<Real>(a.data(), static_cast<Eigen::Index>(a.rows()), static_cast<Eigen::Index>(a.cols()));
}

template <typename Real>
MatrixMap<Real> as_matrix(DenseArray<Real>& a) {
    return MatrixMap<Real>(a.data(), static_cast<Eigen::Index>(a.rows()), static_cast<Eigen::Index>(a.cols()));
}

void require(bool ok, const std::string& message) {
    if (!ok) throw DimensionError(message);
}

Shape with_last(const Shape& shape, std::size_t last) {
    Shape out = shape;
    out.back() = last;
    return out;
}

template <typename Real>
void require_same_shape(const DenseArray<Real>& a, const DenseArray<Real>& b, const char* what) {
    require(a.shape() == b.shape(), std::string(what) + ": shape " + shape_to_string(a.shape()) + " vs " +
                                        shape_to_string(b.shape()));
}

constexpr double kGeluScale = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluCubic = 0.044715;

}  // namespace

// ---------------------------------------------------------------- linear

template <typename Real>
DenseArray<Real> linear(const DenseArray<Real>& x, const DenseArray<Real>& w, const DenseArray<Real>& b) {
    require(w.rank() == 2, "linear: weight must be rank 2, got " + shape_to_string(w.shape()));
    require(x.cols() == w.extent(0), "linear: input " + shape_to_string(x.shape()) + " incompatible with weight " +
                                         shape_to_string(w.shape()));
    require(b.rank() == 1 && b.size() == w.extent(1), "linear: bias " + shape_to_string(b.shape()) +
                                                          " incompatible with weight " + shape_to_string(w.shape()));
    x.require_finite("linear input");
    w.require_finite("linear weight");
    b.require_finite("linear bias");

    DenseArray<Real> y(with_last(x.shape(), w.extent(1)));
    auto ym = as_matrix(y);
    ym.noalias() = as_matrix(x) * as_matrix(w);
    ym.rowwise() += ConstRowVectorMap<Real>(b.data(), static_cast<Eigen::Index>(b.size()));
    y.require_finite("linear output");
    return y;
}

template <typename Real>
void linear_backward(const DenseArray<Real>& x, const DenseArray<Real>& w, const DenseArray<Real>& dy,
                     DenseArray<Real>* dx, DenseArray<Real>* dw, DenseArray<Real>* db) {
    require(dy.rows() == x.rows() && dy.cols() == w.extent(1), "linear_backward: upstream grad " +
                                                                   shape_to_string(dy.shape()) + " mismatched");
    dy.require_finite("linear upstream grad");
    const auto dym = as_matrix(dy);
    if (dw) {
        require_same_shape(*dw, w, "linear_backward dw");
        // Product first, then add: keeps repeated accumulation exactly additive.
        RowMatrix<Real> product = as_matrix(x).transpose() * dym;
        as_matrix(*dw) += product;
        dw->require_finite("linear weight grad");
    }
    if (db) {
        require(db->size() == w.extent(1), "linear_backward: bias grad size");
        RowVectorMap<Real>(db->data(), static_cast<Eigen::Index>(db->size())) += dym.colwise().sum();
        db->require_finite("linear bias grad");
    }
    if (dx) {
        if (dx->shape() != x.shape()) *dx = DenseArray<Real>(x.shape());
        as_matrix(*dx).noalias() = dym * as_matrix(w).transpose();
        dx->require_finite("linear input grad");
    }
}

// ---------------------------------------------------------------- layernorm

template <typename Real>
DenseArray<Real> layernorm(const DenseArray<Real>& x, const DenseArray<Real>& gain, const DenseArray<Real>& bias,
                           double eps, LayerNormCache<Real>* cache) {
    const std::size_t d = x.cols();
    require(d >= 1, "layernorm: zero-length feature axis");
    require(gain.size() == d && bias.size() == d, "layernorm: gain/bias must have " + std::to_string(d) + " entries");
    if (!(eps > 0)) throw ConfigError("layernorm: eps must be positive");
    x.require_finite("layernorm input");

    const std::size_t rows = x.rows();
    DenseArray<Real> y(x.shape());
    if (cache) {
        cache->mean = DenseArray<Real>({rows});
        cache->rstd = DenseArray<Real>({rows});
    }
    const Real* g = gain.data();
    const Real* bb = bias.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const Real* in = x.data() + r * d;
        Real* out = y.data() + r * d;
        Real mean = 0;
        for (std::size_t i = 0; i < d; ++i) mean += in[i];
        mean /= static_cast<Real>(d);
        Real var = 0;
        for (std::size_t i = 0; i < d; ++i) {
            const Real c = in[i] - mean;
            var += c * c;
        }
        var /= static_cast<Real>(d);
        const Real rstd = Real{1} / std::sqrt(var + static_cast<Real>(eps));
        for (std::size_t i = 0; i < d; ++i) out[i] = (in[i] - mean) * rstd * g[i] + bb[i];
        if (cache) {
            cache->mean[r] = mean;
            cache->rstd[r] = rstd;
        }
    }
    y.require_finite("layernorm output");
    return y;
}

template <typename Real>
void layernorm_backward(const DenseArray<Real>& x, const DenseArray<Real>& gain, const LayerNormCache<Real>& cache,
                        const DenseArray<Real>& dy, DenseArray<Real>* dx, DenseArray<Real>* dgain,
                        DenseArray<Real>* dbias) {
    require_same_shape(x, dy, "layernorm_backward");
    require(cache.mean.size() == x.rows(), "layernorm_backward: cache does not match input");
    dy.require_finite("layernorm upstream grad");
    const std::size_t d = x.cols();
    const std::size_t rows = x.rows();
    if (dx && dx->shape() != x.shape()) *dx = DenseArray<Real>(x.shape());
    const Real inv_d = Real{1} / static_cast<Real>(d);
    AlignedVector<Real> gain_acc(dgain ? d : 0, Real{0});
    AlignedVector<Real> bias_acc(dbias ? d : 0, Real{0});
    for (std::size_t r = 0; r < rows; ++r) {
        const Real* in = x.data() + r * d;
        const Real* up = dy.data() + r * d;
        const Real mean = cache.mean[r];
        const Real rstd = cache.rstd[r];
        Real sum_dxhat = 0;
        Real sum_dxhat_xhat = 0;
        for (std::size_t i = 0; i < d; ++i) {
            const Real xhat = (in[i] - mean) * rstd;
            const Real dxhat = up[i] * gain[i];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat;
            if (dgain) gain_acc[i] += up[i] * xhat;
            if (dbias) bias_acc[i] += up[i];
        }
        if (dx) {
            Real* out = dx->data() + r * d;
            for (std::size_t i = 0; i < d; ++i) {
                const Real xhat = (in[i] - mean) * rstd;
                out[i] = rstd * (up[i] * gain[i] - inv_d * sum_dxhat - xhat * inv_d * sum_dxhat_xhat);
            }
        }
    }
    for (std::size_t i = 0; i < gain_acc.size(); ++i) (*dgain)[i] += gain_acc[i];
    for (std::size_t i = 0; i < bias_acc.size(); ++i) (*dbias)[i] += bias_acc[i];
    if (dx) dx->require_finite("layernorm input grad");
    if (dgain) dgain->require_finite("layernorm gain grad");
    if (dbias) dbias->require_finite("layernorm bias grad");
}

// ---------------------------------------------------------------- gelu

double gelu(double x) {
    return 0.5 * x * (1.0 + std::tanh(kGeluScale * (x + kGeluCubic * x * x * x)));
}

double gelu_derivative(double x) {
    const double inner = kGeluScale * (x + kGeluCubic * x * x * x);
    const double t = std::tanh(inner);
    const double dinner = kGeluScale * (1.0 + 3.0 * kGeluCubic * x * x);
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner;
}

template <typename Real>
DenseArray<Real> gelu(const DenseArray<Real>& x) {
    x.require_finite("gelu input");
    DenseArray<Real> y(x.shape());
    const auto n = static_cast<Eigen::Index>(x.size());
    const auto xa = ConstArrayMap<Real>(x.data(), n);
    const Real s = static_cast<Real>(kGeluScale);
    const Real k = static_cast<Real>(kGeluCubic);
    ArrayMap<Real>(y.data(), n) = Real(0.5) * xa * (Real(1) + (s * (xa + k * xa * xa * xa)).tanh());
    return y;
}

template <typename Real>
void gelu_backward(const DenseArray<Real>& x, const DenseArray<Real>& dy, DenseArray<Real>* dx) {
    require_same_shape(x, dy, "gelu_backward");
    dy.require_finite("gelu upstream grad");
    if (!dx) return;
    if (dx->shape() != x.shape()) *dx = DenseArray<Real>(x.shape());
    const auto n = static_cast<Eigen::Index>(x.size());
    const auto xa = ConstArrayMap<Real>(x.data(), n);
    const Real s = static_cast<Real>(kGeluScale);
    const Real k = static_cast<Real>(kGeluCubic);
    const Eigen::Array<Real, Eigen::Dynamic, 1> t = (s * (xa + k * xa * xa * xa)).tanh();
    ArrayMap<Real>(dx->data(), n) =
        ConstArrayMap<Real>(dy.data(), n) *
        (Real(0.5) * (Real(1) + t) + Real(0.5) * xa * (Real(1) - t * t) * s * (Real(1) + Real(3) * k * xa * xa));
    dx->require_finite("gelu input grad");
}

// ---------------------------------------------------------------- attention

template <typename Real>
DenseArray<Real> causal_attention(const DenseArray<Real>& qkv, std::size_t heads, AttentionCache<Real>* cache) {
    require(qkv.rank() == 3, "causal_attention: qkv must be [B,T,3D], got " + shape_to_string(qkv.shape()));
    require(qkv.extent(2) % 3 == 0, "causal_attention: last axis must be 3*D");
    const std::size_t batch = qkv.extent(0);
    const std::size_t seq = qkv.extent(1);
    const std::size_t d = qkv.extent(2) / 3;
    if (heads == 0 || d % heads != 0) {
        throw ConfigError("causal_attention: model width " + std::to_string(d) + " not divisible by " +
                          std::to_string(heads) + " heads");
    }
    qkv.require_finite("attention input");
    const std::size_t hd = d / heads;
    const Real scale = Real{1} / std::sqrt(static_cast<Real>(hd));
    const auto T = static_cast<Eigen::Index>(seq);
    const auto HD = static_cast<Eigen::Index>(hd);

    DenseArray<Real> out({batch, seq, d});
    DenseArray<Real> local_probs;
    DenseArray<Real>& probs = cache ? cache->probs : local_probs;
    probs = DenseArray<Real>({batch, heads, seq, seq});

    RowMatrix<Real> scores(T, T);
    for (std::size_t b = 0; b < batch; ++b) {
        const Real* base = qkv.data() + b * seq * 3 * d;
        for (std::size_t h = 0; h < heads; ++h) {
            ConstStridedMap<Real> q(base + h * hd, T, HD, Eigen::OuterStride<>(3 * d));
            ConstStridedMap<Real> k(base + d + h * hd, T, HD, Eigen::OuterStride<>(3 * d));
            ConstStridedMap<Real> v(base + 2 * d + h * hd, T, HD, Eigen::OuterStride<>(3 * d));
            scores.noalias() = q * k.transpose();
            MatrixMap<Real> p(probs.data() + (b * heads + h) * seq * seq, T, T);
            for (Eigen::Index t = 0; t < T; ++t) {
                const auto row = scores.row(t).head(t + 1).array() * scale;
                auto prow = p.row(t).head(t + 1).array();
                prow = (row - row.maxCoeff()).exp();
                prow /= prow.sum();
                p.row(t).tail(T - t - 1).setZero();
            }
            StridedMap<Real> o(out.data() + b * seq * d + h * hd, T, HD, Eigen::OuterStride<>(d));
            o.noalias() = p * v;
        }
    }
    out.require_finite("attention output");
    return out;
}

template <typename Real>
void causal_attention_backward(const DenseArray<Real>& qkv, std::size_t heads, const AttentionCache<Real>& cache,
                               const DenseArray<Real>& dy, DenseArray<Real>* dqkv) {
    const std::size_t batch = qkv.extent(0);
    const std::size_t seq = qkv.extent(1);
    const std::size_t d = qkv.extent(2) / 3;
    require(dy.rank() == 3 && dy.extent(0) == batch && dy.extent(1) == seq && dy.extent(2) == d,
            "causal_attention_backward: upstream grad " + shape_to_string(dy.shape()) + " mismatched");
    require(cache.probs.size() == batch * heads * seq * seq, "causal_attention_backward: cache does not match input");
    dy.require_finite("attention upstream grad");
    if (!dqkv) return;
    if (dqkv->shape() != qkv.shape()) *dqkv = DenseArray<Real>(qkv.shape());

    const std::size_t hd = d / heads;
    const Real scale = Real{1} / std::sqrt(static_cast<Real>(hd));
    const auto T = static_cast<Eigen::Index>(seq);
    const auto HD = static_cast<Eigen::Index>(hd);

    RowMatrix<Real> dp(T, T);
    for (std::size_t b = 0; b < batch; ++b) {
        const Real* base = qkv.data() + b * seq * 3 * d;
        Real* dbase = dqkv->data() + b * seq * 3 * d;
        for (std::size_t h = 0; h < heads; ++h) {
            ConstStridedMap<Real> q(base + h * hd, T, HD, Eigen::OuterStride<>(3 * d));
            ConstStridedMap<Real> k(base + d + h * hd, T, HD, Eigen::OuterStride<>(3 * d));
            ConstStridedMap<Real> v(base + 2 * d + h * hd, T, HD, Eigen::OuterStride<>(3 * d));
            StridedMap<Real> dq(dbase + h * hd, T, HD, Eigen::OuterStride<>(3 * d));
            StridedMap<Real> dk(dbase + d + h * hd, T, HD, Eigen::OuterStride<>(3 * d));
            StridedMap<Real> dv(dbase + 2 * d + h * hd, T, HD, Eigen::OuterStride<>(3 * d));
            ConstStridedMap<Real> dout(dy.data() + b * seq * d + h * hd, T, HD, Eigen::OuterStride<>(d));
            ConstMatrixMap<Real> p(cache.probs.data() + (b * heads + h) * seq * seq, T, T);

            dv.noalias() = p.transpose() * dout;
            dp.noalias() = dout * v.transpose();
            // softmax backward, rows restricted to the causal prefix
            for (Eigen::Index t = 0; t < T; ++t) {
                const auto prow = p.row(t).head(t + 1).array();
                auto drow = dp.row(t).head(t + 1).array();
                const Real dot = (prow * drow).sum();
                drow = prow * (drow - dot) * scale;
                dp.row(t).tail(T - t - 1).setZero();
            }
            dq.noalias() = dp * k;
            dk.noalias() = dp.transpose() * q;
        }
    }
    dqkv->require_finite("attention input grad");
}

template <typename Real>
DenseArray<Real> causal_self_attention(const DenseArray<Real>& x, const AttentionParams<Real>& params,
                                       std::size_t heads, SelfAttentionCache<Real>* cache) {
    require(x.rank() == 3, "causal_self_attention: input must be [B,T,D]");
    SelfAttentionCache<Real> local;
    SelfAttentionCache<Real>& c = cache ? *cache : local;
    c.qkv = linear(x, params.qkv_w, params.qkv_b);
    c.context = causal_attention(c.qkv, heads, &c.attention);
    return linear(c.context, params.proj_w, params.proj_b);
}

template <typename Real>
void causal_self_attention_backward(const DenseArray<Real>& x, const AttentionParams<Real>& params,
                                    std::size_t heads, const SelfAttentionCache<Real>& cache,
                                    const DenseArray<Real>& dy, DenseArray<Real>* dx,
                                    const AttentionGrads<Real>& grads) {
    DenseArray<Real> dcontext;
    linear_backward(cache.context, params.proj_w, dy, &dcontext, grads.proj_w, grads.proj_b);
    DenseArray<Real> dqkv;
    causal_attention_backward(cache.qkv, heads, cache.attention, dcontext, &dqkv);
    linear_backward(x, params.qkv_w, dqkv, dx, grads.qkv_w, grads.qkv_b);
}

// ---------------------------------------------------------------- cross entropy

template <typename Real>
double cross_entropy(const DenseArray<Real>& logits, std::span<const std::int32_t> targets,
                     DenseArray<Real>* dlogits) {
    const std::size_t rows = logits.rows();
    const std::size_t vocab = logits.cols();
    require(targets.size() == rows, "cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                                        std::to_string(rows) + " positions");
    logits.require_finite("cross_entropy logits");
    for (std::int32_t t : targets) {
        if (t < 0 || static_cast<std::size_t>(t) >= vocab) {
            throw DataError("cross_entropy: target " + std::to_string(t) + " outside [0," + std::to_string(vocab) +
                            ")");
        }
    }
    if (dlogits && dlogits->shape() != logits.shape()) *dlogits = DenseArray<Real>(logits.shape());

    const double inv_rows = 1.0 / static_cast<double>(rows);
    const auto V = static_cast<Eigen::Index>(vocab);
    Eigen::ArrayXd shifted(V);
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        const Real* row = logits.data() + r * vocab;
        shifted = ConstArrayMap<Real>(row, V).template cast<double>();
        const double row_max = shifted.maxCoeff();
        shifted = (shifted - row_max).exp();
        const double sum = shifted.sum();
        const double log_z = std::log(sum) + row_max;
        total += log_z - static_cast<double>(row[targets[r]]);
        if (dlogits) {
            Real* g = dlogits->data() + r * vocab;
            ArrayMap<Real>(g, V) = (shifted * (inv_rows / sum)).template cast<Real>();
            g[targets[r]] -= static_cast<Real>(inv_rows);
        }
    }
    const double loss = total * inv_rows;
    if (!std::isfinite(loss)) throw NumericError("cross_entropy: non-finite loss");
    return loss;
}

template <typename Real>
void add_inplace(DenseArray<Real>& acc, const DenseArray<Real>& other) {
    require_same_shape(acc, other, "add_inplace");
    const std::size_t n = acc.size();
    for (std::size_t i = 0; i < n; ++i) acc[i] += other[i];
}

#define LAYERWISE_INSTANTIATE(Real)                                                                               \
    template DenseArray<Real> linear(const DenseArray<Real>&, const DenseArray<Real>&, const DenseArray<Real>&);  \
    template void linear_backward(const DenseArray<Real>&, const DenseArray<Real>&, const DenseArray<Real>&,      \
                                  DenseArray<Real>*, DenseArray<Real>*, DenseArray<Real>*);                       \
    template DenseArray<Real> layernorm(const DenseArray<Real>&, const DenseArray<Real>&,                         \
                                        const DenseArray<Real>&, double, LayerNormCache<Real>*);                  \
    template void layernorm_backward(const DenseArray<Real>&, const DenseArray<Real>&,                            \
                                     const LayerNormCache<Real>&, const DenseArray<Real>&, DenseArray<Real>*,     \
                                     DenseArray<Real>*, DenseArray<Real>*);                                       \
    template DenseArray<Real> gelu(const DenseArray<Real>&);                                                      \
    template void gelu_backward(const DenseArray<Real>&, const DenseArray<Real>&, DenseArray<Real>*);             \
    template DenseArray<Real> causal_attention(const DenseArray<Real>&, std::size_t, AttentionCache<Real>*);      \
    template void causal_attention_backward(const DenseArray<Real>&, std::size_t, const AttentionCache<Real>&,    \
                                            const DenseArray<Real>&, DenseArray<Real>*);                          \
    template DenseArray<Real> causal_self_attention(const DenseArray<Real>&, const AttentionParams<Real>&,        \
                                                    std::size_t, SelfAttentionCache<Real>*);                      \
    template void causal_self_attention_backward(const DenseArray<Real>&, const AttentionParams<Real>&,           \
                                                 std::size_t, const SelfAttentionCache<Real>&,                    \
                                                 const DenseArray<Real>&, DenseArray<Real>*,                      \
                                                 const AttentionGrads<Real>&);                                    \
    template double cross_entropy(const DenseArray<Real>&, std::span<const std::int32_t>, DenseArray<Real>*);     \
    template void add_inplace(DenseArray<Real>&, const DenseArray<Real>&);

LAYERWISE_INSTANTIATE(float)
LAYERWISE_INSTANTIATE(double)

#undef LAYERWISE_INSTANTIATE

}  // namespace layerwise::kernel

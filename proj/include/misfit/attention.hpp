#pragma once

#include <cstddef>
#include <vector>

#include "misfit/tensor.hpp"

namespace misfit {

/// Token sequence laid out on a rows×cols grid; values is (rows·cols)×dim.
struct TokenGrid {
    std::size_t rows = 0;
    std::size_t cols = 0;
    Tensor values;

    std::size_t count() const noexcept { return rows * cols; }
    std::size_t dim() const { return values.dim(1); }
};

/// Read-only view of one multi-head attention block's projections.
/// Weights are in×out matrices applied as x·W + b.
struct AttentionWeights {
    const Tensor& wq;
    const Tensor& bq;
    const Tensor& wk;
    const Tensor& bk;
    const Tensor& wv;
    const Tensor& bv;
    const Tensor& wo;
    const Tensor& bo;
    std::size_t heads;
};

/// Gradient accumulators matching AttentionWeights.
struct AttentionGradRefs {
    Tensor& wq;
    Tensor& bq;
    Tensor& wk;
    Tensor& bk;
    Tensor& wv;
    Tensor& bv;
    Tensor& wo;
    Tensor& bo;
};

struct AttentionCache {
    Tensor q, k, v;             // projected, N×d
    Tensor concat;              // per-head outputs side by side, N×d
    std::vector<Tensor> probs;  // one N×N row-stochastic matrix per head
};

/// softmax(Q Kᵀ/√d_head)·V per head with Q from xq, K from xk, V from xv,
/// heads concatenated and output-projected.
Tensor attention_forward(const Tensor& xq, const Tensor& xk, const Tensor& xv, const AttentionWeights& w,
                         AttentionCache* cache = nullptr);

struct AttentionInputGrads {
    Tensor dxq, dxk, dxv;
};

/// Accumulates parameter gradients into `g` and returns gradients w.r.t. the three inputs.
AttentionInputGrads attention_backward(const Tensor& dy, const Tensor& xq, const Tensor& xk, const Tensor& xv,
                                       const AttentionCache& cache, const AttentionWeights& w,
                                       const AttentionGradRefs& g);

/// Cross-attention: queries from q_tokens, keys and values from kv_tokens.
TokenGrid mha_cross(const TokenGrid& q_tokens, const TokenGrid& kv_tokens, const AttentionWeights& w,
                    std::vector<Tensor>* probs = nullptr);

/// Key swap: queries and values from rgb_tokens, keys from d_tokens.
TokenGrid mha_keyswap(const TokenGrid& rgb_tokens, const TokenGrid& d_tokens, const AttentionWeights& w,
                      std::vector<Tensor>* probs = nullptr);

TokenGrid mha_self(const TokenGrid& tokens, const AttentionWeights& w, std::vector<Tensor>* probs = nullptr);

}  // namespace misfit

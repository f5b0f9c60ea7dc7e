#include "misfit/attention.hpp"

#include <cmath>

#include "misfit/errors.hpp"
#include "misfit/kernels.hpp"
#include "misfit/numerics.hpp"

namespace misfit {

namespace {

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
    Tensor y = kernels::matmul(x, w);
    const std::size_t n = y.dim(0), m = y.dim(1);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) y[i * m + j] += b[j];
    }
    return y;
}

Tensor head_slice(const Tensor& x, std::size_t head, std::size_t dh) {
    const std::size_t n = x.dim(0), d = x.dim(1);
    Tensor out({n, dh});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < dh; ++j) out[i * dh + j] = x[i * d + head * dh + j];
    }
    return out;
}

void head_store(Tensor& dst, const Tensor& src, std::size_t head, std::size_t dh) {
    const std::size_t n = dst.dim(0), d = dst.dim(1);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < dh; ++j) dst[i * d + head * dh + j] = src[i * dh + j];
    }
}

void add_column_sums(Tensor& bias_grad, const Tensor& g) {
    const std::size_t n = g.dim(0), m = g.dim(1);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) bias_grad[j] += g[i * m + j];
    }
}

void check_inputs(const Tensor& xq, const Tensor& xk, const Tensor& xv, const AttentionWeights& w) {
    if (xq.rank() != 2 || xk.rank() != 2 || xv.rank() != 2) throw InvalidInput("attention: token matrices must be rank 2");
    const std::size_t d = xq.dim(1);
    if (xk.dim(1) != d || xv.dim(1) != d) throw InvalidInput("attention: token dims differ between streams");
    if (xk.dim(0) != xv.dim(0)) throw InvalidInput("attention: key and value token counts differ");
    if (w.wq.rank() != 2 || w.wq.dim(0) != d) throw InvalidInput("attention: projection does not match token dim");
    if (w.heads == 0 || w.wq.dim(1) % w.heads != 0) throw InvalidInput("attention: width not divisible by heads");
}

}  // namespace

Tensor attention_forward(const Tensor& xq, const Tensor& xk, const Tensor& xv, const AttentionWeights& w,
                         AttentionCache* cache) {
    check_inputs(xq, xk, xv, w);
    Tensor q = affine(xq, w.wq, w.bq);
    Tensor k = affine(xk, w.wk, w.bk);
    Tensor v = affine(xv, w.wv, w.bv);
    const std::size_t nq = q.dim(0), nk = k.dim(0), d = q.dim(1);
    const std::size_t dh = d / w.heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Tensor concat({nq, d});
    std::vector<Tensor> probs;
    if (cache) probs.reserve(w.heads);
    for (std::size_t h = 0; h < w.heads; ++h) {
        const Tensor qh = head_slice(q, h, dh);
        const Tensor kh = head_slice(k, h, dh);
        const Tensor vh = head_slice(v, h, dh);
        Tensor scores = kernels::matmul_nt(qh, kh);
        for (auto& s : scores.data()) s *= scale;
        softmax_rows_inplace(scores.data(), nq, nk);
        head_store(concat, kernels::matmul(scores, vh), h, dh);
        if (cache) probs.push_back(std::move(scores));
    }
    Tensor y = affine(concat, w.wo, w.bo);
    if (cache) {
        cache->q = std::move(q);
        cache->k = std::move(k);
        cache->v = std::move(v);
        cache->concat = std::move(concat);
        cache->probs = std::move(probs);
    }
    return y;
}

AttentionInputGrads attention_backward(const Tensor& dy, const Tensor& xq, const Tensor& xk, const Tensor& xv,
                                       const AttentionCache& cache, const AttentionWeights& w,
                                       const AttentionGradRefs& g) {
    const std::size_t nq = cache.q.dim(0), nk = cache.k.dim(0), d = cache.q.dim(1);
    const std::size_t dh = d / w.heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    kernels::gemm_tn(cache.concat.data(), dy.data(), g.wo.data(), nq, d, w.wo.dim(1), true);
    add_column_sums(g.bo, dy);
    const Tensor dconcat = kernels::matmul_nt(dy, w.wo);

    Tensor dq({nq, d}), dk({nk, d}), dv({nk, d});
    for (std::size_t h = 0; h < w.heads; ++h) {
        const Tensor& p = cache.probs[h];
        const Tensor doh = head_slice(dconcat, h, dh);
        const Tensor qh = head_slice(cache.q, h, dh);
        const Tensor kh = head_slice(cache.k, h, dh);
        const Tensor vh = head_slice(cache.v, h, dh);

        head_store(dv, kernels::matmul_tn(p, doh), h, dh);
        Tensor ds = kernels::matmul_nt(doh, vh);  // dP, overwritten with dS
        for (std::size_t i = 0; i < nq; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < nk; ++j) dot += ds[i * nk + j] * p[i * nk + j];
            for (std::size_t j = 0; j < nk; ++j) ds[i * nk + j] = p[i * nk + j] * (ds[i * nk + j] - dot) * scale;
        }
        head_store(dq, kernels::matmul(ds, kh), h, dh);
        head_store(dk, kernels::matmul_tn(ds, qh), h, dh);
    }

    kernels::gemm_tn(xq.data(), dq.data(), g.wq.data(), nq, xq.dim(1), d, true);
    kernels::gemm_tn(xk.data(), dk.data(), g.wk.data(), nk, xk.dim(1), d, true);
    kernels::gemm_tn(xv.data(), dv.data(), g.wv.data(), nk, xv.dim(1), d, true);
    add_column_sums(g.bq, dq);
    add_column_sums(g.bk, dk);
    add_column_sums(g.bv, dv);
    return {kernels::matmul_nt(dq, w.wq), kernels::matmul_nt(dk, w.wk), kernels::matmul_nt(dv, w.wv)};
}

namespace {

void check_grids(const TokenGrid& a, const TokenGrid& b, const char* what) {
    if (a.count() != b.count() || a.values.shape() != b.values.shape()) {
        throw InvalidInput(std::string(what) + ": token grids differ in count or dim");
    }
}

TokenGrid run(const TokenGrid& like, const Tensor& xq, const Tensor& xk, const Tensor& xv, const AttentionWeights& w,
              std::vector<Tensor>* probs) {
    AttentionCache cache;
    Tensor y = attention_forward(xq, xk, xv, w, probs ? &cache : nullptr);
    if (probs) *probs = std::move(cache.probs);
    return {like.rows, like.cols, std::move(y)};
}

}  // namespace

TokenGrid mha_cross(const TokenGrid& q_tokens, const TokenGrid& kv_tokens, const AttentionWeights& w,
                    std::vector<Tensor>* probs) {
    check_grids(q_tokens, kv_tokens, "mha_cross");
    return run(q_tokens, q_tokens.values, kv_tokens.values, kv_tokens.values, w, probs);
}

TokenGrid mha_keyswap(const TokenGrid& rgb_tokens, const TokenGrid& d_tokens, const AttentionWeights& w,
                      std::vector<Tensor>* probs) {
    check_grids(rgb_tokens, d_tokens, "mha_keyswap");
    return run(rgb_tokens, rgb_tokens.values, d_tokens.values, rgb_tokens.values, w, probs);
}

TokenGrid mha_self(const TokenGrid& tokens, const AttentionWeights& w, std::vector<Tensor>* probs) {
    return run(tokens, tokens.values, tokens.values, tokens.values, w, probs);
}

}  // namespace misfit

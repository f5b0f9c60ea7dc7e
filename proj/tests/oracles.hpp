#pragma once

// Independent reference computations used as test oracles. Everything here is
// written from the defining formulas with plain loops and std::complex, sharing
// no code with the library paths under test.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

namespace oracle {

using cplx = std::complex<double>;

/// Direct O(H²W²) double sum: X(u,v) = Σ_h Σ_w x(h,w) exp(-j2π(hu/H + wv/W)).
inline std::vector<cplx> dft2(const std::vector<double>& x, std::size_t H, std::size_t W) {
    std::vector<cplx> out(H * W);
    for (std::size_t u = 0; u < H; ++u) {
        for (std::size_t v = 0; v < W; ++v) {
            cplx s = 0.0;
            for (std::size_t h = 0; h < H; ++h) {
                for (std::size_t w = 0; w < W; ++w) {
                    const double ang = -2.0 * std::numbers::pi *
                                       (static_cast<double>(h * u) / static_cast<double>(H) +
                                        static_cast<double>(w * v) / static_cast<double>(W));
                    s += x[h * W + w] * std::polar(1.0, ang);
                }
            }
            out[u * W + v] = s;
        }
    }
    return out;
}

inline std::vector<double> softmax(const std::vector<double>& row) {
    const double m = *std::max_element(row.begin(), row.end());
    std::vector<double> e(row.size());
    double s = 0.0;
    for (std::size_t i = 0; i < row.size(); ++i) s += (e[i] = std::exp(row[i] - m));
    for (auto& v : e) v /= s;
    return e;
}

/// Matrix as rows of columns.
using Mat = std::vector<std::vector<double>>;

inline Mat affine(const Mat& x, const std::vector<double>& w, const std::vector<double>& b, std::size_t out) {
    Mat y(x.size(), std::vector<double>(out, 0.0));
    for (std::size_t i = 0; i < x.size(); ++i) {
        for (std::size_t j = 0; j < out; ++j) {
            double s = b[j];
            for (std::size_t k = 0; k < x[i].size(); ++k) s += x[i][k] * w[k * out + j];
            y[i][j] = s;
        }
    }
    return y;
}

/// Multi-head attention straight from the formula, with projections x·W + b.
/// Returns the output and fills probs[head][i][j].
inline Mat attention(const Mat& xq, const Mat& xk, const Mat& xv, const std::vector<double>& wq,
                     const std::vector<double>& bq, const std::vector<double>& wk, const std::vector<double>& bk,
                     const std::vector<double>& wv, const std::vector<double>& bv, const std::vector<double>& wo,
                     const std::vector<double>& bo, std::size_t heads, std::vector<Mat>* probs = nullptr) {
    const std::size_t d = bq.size(), dh = d / heads;
    const Mat q = affine(xq, wq, bq, d), k = affine(xk, wk, bk, d), v = affine(xv, wv, bv, d);
    Mat concat(q.size(), std::vector<double>(d, 0.0));
    if (probs) probs->assign(heads, {});
    for (std::size_t h = 0; h < heads; ++h) {
        for (std::size_t i = 0; i < q.size(); ++i) {
            std::vector<double> s(k.size());
            for (std::size_t j = 0; j < k.size(); ++j) {
                double dot = 0.0;
                for (std::size_t t = 0; t < dh; ++t) dot += q[i][h * dh + t] * k[j][h * dh + t];
                s[j] = dot / std::sqrt(static_cast<double>(dh));
            }
            const auto p = softmax(s);
            if (probs) (*probs)[h].push_back(p);
            for (std::size_t j = 0; j < k.size(); ++j) {
                for (std::size_t t = 0; t < dh; ++t) concat[i][h * dh + t] += p[j] * v[j][h * dh + t];
            }
        }
    }
    return affine(concat, wo, bo, d);
}

/// −Σ p log p with 0·log 0 = 0.
inline double entropy(const std::vector<double>& p) {
    double h = 0.0;
    for (double v : p) {
        if (v > 0.0) h -= v * std::log(v);
    }
    return h;
}

}  // namespace oracle

#include "misfit/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "misfit/errors.hpp"

namespace misfit::kernels {

namespace {

// Below this many multiply-adds the fork/join cost dominates.
constexpr std::size_t kParallelWork = 1 << 15;

void check_sizes(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t a_len,
                 std::size_t b_len, std::size_t c_len, const char* what) {
    if (a.size() != a_len || b.size() != b_len || c.size() != c_len) {
        throw InvalidInput(std::string(what) + ": operand sizes do not match the stated dimensions");
    }
}

}  // namespace

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t n,
             std::size_t k, std::size_t m, bool accumulate) {
    check_sizes(a, b, c, n * k, k * m, n * m, "gemm_nn");
    const double* A = a.data();
    const double* B = b.data();
    double* C = c.data();
    const long rows = static_cast<long>(n);
#pragma omp parallel for schedule(static) if (n * k * m > kParallelWork)
    for (long i = 0; i < rows; ++i) {
        double* crow = C + i * m;
        if (!accumulate) std::fill(crow, crow + m, 0.0);
        const double* arow = A + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = B + p * m;
            for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
        }
    }
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t n,
             std::size_t k, std::size_t m, bool accumulate) {
    check_sizes(a, b, c, n * k, n * m, k * m, "gemm_tn");
    const double* A = a.data();
    const double* B = b.data();
    double* C = c.data();
    const long rows = static_cast<long>(k);
#pragma omp parallel for schedule(static) if (n * k * m > kParallelWork)
    for (long p = 0; p < rows; ++p) {
        double* crow = C + p * m;
        if (!accumulate) std::fill(crow, crow + m, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double av = A[i * k + p];
            const double* brow = B + i * m;
            for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
        }
    }
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t n,
             std::size_t k, std::size_t m, bool accumulate) {
    check_sizes(a, b, c, n * k, m * k, n * m, "gemm_nt");
    const double* A = a.data();
    const double* B = b.data();
    double* C = c.data();
    const long rows = static_cast<long>(n);
#pragma omp parallel for schedule(static) if (n * k * m > kParallelWork)
    for (long i = 0; i < rows; ++i) {
        const double* arow = A + i * k;
        double* crow = C + i * m;
        for (std::size_t j = 0; j < m; ++j) {
            const double* brow = B + j * k;
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
            crow[j] = accumulate ? crow[j] + s : s;
        }
    }
}

void dft_lines(const double* in_re, const double* in_im, double* out_re, double* out_im, std::size_t lines,
               std::size_t len, std::size_t line_stride, std::size_t elem_stride, bool inverse) {
    if (len == 0) return;
    // Twiddles indexed by (u*n mod len) so every angle is reduced exactly.
    std::vector<double> cw(len), sw(len);
    const double sign = inverse ? 1.0 : -1.0;
    for (std::size_t t = 0; t < len; ++t) {
        const double ang = 2.0 * std::numbers::pi * static_cast<double>(t) / static_cast<double>(len);
        cw[t] = std::cos(ang);
        sw[t] = sign * std::sin(ang);
    }
    const long count = static_cast<long>(lines);
#pragma omp parallel for schedule(static) if (lines * len * len > kParallelWork)
    for (long l = 0; l < count; ++l) {
        const std::size_t base = static_cast<std::size_t>(l) * line_stride;
        for (std::size_t u = 0; u < len; ++u) {
            double sr = 0.0, si = 0.0;
            std::size_t t = 0;
            for (std::size_t e = 0; e < len; ++e) {
                const double xr = in_re[base + e * elem_stride];
                const double xi = in_im ? in_im[base + e * elem_stride] : 0.0;
                sr += xr * cw[t] - xi * sw[t];
                si += xr * sw[t] + xi * cw[t];
                t += u;
                if (t >= len) t -= len;
            }
            out_re[base + u * elem_stride] = sr;
            out_im[base + u * elem_stride] = si;
        }
    }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw InvalidInput("matmul: incompatible shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
    }
    Tensor c({a.dim(0), b.dim(1)});
    gemm_nn(a.data(), b.data(), c.data(), a.dim(0), a.dim(1), b.dim(1), false);
    return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0)) {
        throw InvalidInput("matmul_tn: incompatible shapes " + shape_string(a.shape()) + " and " +
                           shape_string(b.shape()));
    }
    Tensor c({a.dim(1), b.dim(1)});
    gemm_tn(a.data(), b.data(), c.data(), a.dim(0), a.dim(1), b.dim(1), false);
    return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
        throw InvalidInput("matmul_nt: incompatible shapes " + shape_string(a.shape()) + " and " +
                           shape_string(b.shape()));
    }
    Tensor c({a.dim(0), b.dim(0)});
    gemm_nt(a.data(), b.data(), c.data(), a.dim(0), a.dim(1), b.dim(0), false);
    return c;
}

}  // namespace misfit::kernels

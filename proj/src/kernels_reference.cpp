#include <cmath>
#include <numbers>

#include "misfit/errors.hpp"
#include "misfit/kernels.hpp"

namespace misfit::kernels::reference {

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t n,
             std::size_t k, std::size_t m, bool accumulate) {
    if (a.size() != n * k || b.size() != k * m || c.size() != n * m) throw InvalidInput("reference::gemm_nn: sizes");
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * m + j];
            c[i * m + j] = accumulate ? c[i * m + j] + s : s;
        }
    }
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t n,
             std::size_t k, std::size_t m, bool accumulate) {
    if (a.size() != n * k || b.size() != n * m || c.size() != k * m) throw InvalidInput("reference::gemm_tn: sizes");
    for (std::size_t p = 0; p < k; ++p) {
        for (std::size_t j = 0; j < m; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += a[i * k + p] * b[i * m + j];
            c[p * m + j] = accumulate ? c[p * m + j] + s : s;
        }
    }
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t n,
             std::size_t k, std::size_t m, bool accumulate) {
    if (a.size() != n * k || b.size() != m * k || c.size() != n * m) throw InvalidInput("reference::gemm_nt: sizes");
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[j * k + p];
            c[i * m + j] = accumulate ? c[i * m + j] + s : s;
        }
    }
}

void dft_lines(const double* in_re, const double* in_im, double* out_re, double* out_im, std::size_t lines,
               std::size_t len, std::size_t line_stride, std::size_t elem_stride, bool inverse) {
    const double sign = inverse ? 1.0 : -1.0;
    for (std::size_t l = 0; l < lines; ++l) {
        const std::size_t base = l * line_stride;
        for (std::size_t u = 0; u < len; ++u) {
            double sr = 0.0, si = 0.0;
            for (std::size_t e = 0; e < len; ++e) {
                const double ang = sign * 2.0 * std::numbers::pi * static_cast<double>((u * e) % len) /
                                   static_cast<double>(len);
                const double xr = in_re[base + e * elem_stride];
                const double xi = in_im ? in_im[base + e * elem_stride] : 0.0;
                sr += xr * std::cos(ang) - xi * std::sin(ang);
                si += xr * std::sin(ang) + xi * std::cos(ang);
            }
            out_re[base + u * elem_stride] = sr;
            out_im[base + u * elem_stride] = si;
        }
    }
}

}  // namespace misfit::kernels::reference

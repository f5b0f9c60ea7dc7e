#pragma once

// Dense inner-loop kernels. The functions in misfit::kernels are OpenMP
// parallel over independent output rows/lines; every output element is
// produced by exactly one thread with a fixed summation order, so results do
// not depend on the thread count. misfit::kernels::reference holds plain
// serial versions kept for tests and the benchmark.

#include <cstddef>
#include <span>

#include "misfit/tensor.hpp"

namespace misfit::kernels {

/// c[n×m] (+)= a[n×k] · b[k×m]
void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t n,
             std::size_t k, std::size_t m, bool accumulate);
/// c[k×m] (+)= a[n×k]ᵀ · b[n×m]
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t n,
             std::size_t k, std::size_t m, bool accumulate);
/// c[n×m] (+)= a[n×k] · b[m×k]ᵀ
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t n,
             std::size_t k, std::size_t m, bool accumulate);

/// Strided batch of 1-D DFTs. Line l, element e lives at l*line_stride + e*elem_stride.
/// Forward uses exp(-j2πun/len); inverse uses the conjugate kernel, unnormalized.
void dft_lines(const double* in_re, const double* in_im, double* out_re, double* out_im, std::size_t lines,
               std::size_t len, std::size_t line_stride, std::size_t elem_stride, bool inverse);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_tn(const Tensor& a, const Tensor& b);
Tensor matmul_nt(const Tensor& a, const Tensor& b);

namespace reference {

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t n,
             std::size_t k, std::size_t m, bool accumulate);
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t n,
             std::size_t k, std::size_t m, bool accumulate);
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t n,
             std::size_t k, std::size_t m, bool accumulate);
void dft_lines(const double* in_re, const double* in_im, double* out_re, double* out_im, std::size_t lines,
               std::size_t len, std::size_t line_stride, std::size_t elem_stride, bool inverse);

}  // namespace reference

}  // namespace misfit::kernels

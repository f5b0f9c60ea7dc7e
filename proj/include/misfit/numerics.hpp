#pragma once

#include <functional>
#include <span>
#include <vector>

#include "misfit/tensor.hpp"

namespace misfit {

/// Row-wise softmax of a rank-2 tensor, shifted by the row max.
Tensor softmax_rows(const Tensor& m);

/// In-place row softmax over a contiguous rows×cols block.
void softmax_rows_inplace(std::span<double> block, std::size_t rows, std::size_t cols);

using ScalarFunction = std::function<double(std::span<const double>)>;

/// Central-difference gradient of f at p. Throws OracleFailure if f returns a non-finite value.
std::vector<double> finite_diff_grad(const ScalarFunction& f, std::span<const double> p, double eps);

}  // namespace misfit

#include "misfit/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "misfit/errors.hpp"

namespace misfit {

void softmax_rows_inplace(std::span<double> block, std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        double* row = block.data() + r * cols;
        const double mx = *std::max_element(row, row + cols);
        double sum = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            row[c] = std::exp(row[c] - mx);
            sum += row[c];
        }
        const double inv = 1.0 / sum;
        for (std::size_t c = 0; c < cols; ++c) row[c] *= inv;
    }
}

Tensor softmax_rows(const Tensor& m) {
    if (m.rank() != 2) throw InvalidInput("softmax_rows: expected a matrix, got " + shape_string(m.shape()));
    Tensor out = m;
    if (m.dim(1) == 0) return out;
    softmax_rows_inplace(out.data(), m.dim(0), m.dim(1));
    return out;
}

std::vector<double> finite_diff_grad(const ScalarFunction& f, std::span<const double> p, double eps) {
    if (!(eps > 0.0)) throw InvalidInput("finite_diff_grad: eps must be positive");
    std::vector<double> x(p.begin(), p.end());
    std::vector<double> grad(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + eps;
        const double fp = f(x);
        x[i] = orig - eps;
        const double fm = f(x);
        x[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw OracleFailure("finite_diff_grad: non-finite function value at coordinate " + std::to_string(i));
        }
        grad[i] = (fp - fm) / (2.0 * eps);
    }
    return grad;
}

}  // namespace misfit

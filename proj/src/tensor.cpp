#include "misfit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "misfit/errors.hpp"

namespace misfit {

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_size(shape_)) {
        throw InvalidInput("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                           shape_string(shape_));
    }
}

Tensor Tensor::checked(Shape shape, std::vector<double> data) {
    Tensor t(std::move(shape), std::move(data));
    if (!t.all_finite()) throw InvalidInput("tensor contains non-finite values");
    return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= shape_.size()) {
        throw InvalidInput("axis " + std::to_string(axis) + " out of range for shape " + shape_string(shape_));
    }
    return shape_[axis];
}

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_size(shape) != data_.size()) {
        throw InvalidInput("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    return Tensor(std::move(shape), data_);
}

void Tensor::fill(double value) noexcept { std::fill(data_.begin(), data_.end(), value); }

void Tensor::expect_shape(const Shape& expected, const char* what) const {
    if (shape_ != expected) {
        throw InvalidInput(std::string(what) + ": expected shape " + shape_string(expected) + ", got " +
                           shape_string(shape_));
    }
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw InvalidInput("max_abs_diff: shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace misfit

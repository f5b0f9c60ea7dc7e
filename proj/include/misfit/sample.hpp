#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "misfit/grid.hpp"
#include "misfit/tensor.hpp"

namespace misfit {

/// One RGB-D frame: rgb H×W×3 in [0,255], disparity H×W (0 = invalid).
struct ImageSample {
    Tensor rgb;
    Tensor disparity;
    BinaryGrid valid;
    std::optional<LabelGrid> label;

    std::size_t height() const { return rgb.dim(0); }
    std::size_t width() const { return rgb.dim(1); }
    /// Throws InvalidInput on shape disagreement, negative disparity or out-of-range labels.
    void validate(std::size_t num_classes) const;

    friend bool operator==(const ImageSample&, const ImageSample&) = default;
};

/// Read-only sample collection. poison() makes every later access throw,
/// which lets tests prove a code path never touches a store.
class SampleStore {
public:
    SampleStore() = default;
    explicit SampleStore(std::vector<ImageSample> samples) : samples_(std::move(samples)) {}

    std::size_t size() const noexcept { return samples_.size(); }
    bool empty() const noexcept { return samples_.empty(); }
    const ImageSample& at(std::size_t i) const;

    void poison() noexcept { poisoned_ = true; }
    bool poisoned() const noexcept { return poisoned_; }

    /// Copy of the store with every label dropped.
    SampleStore without_labels() const;
    /// First `n` samples (all if n >= size()).
    SampleStore head(std::size_t n) const;

private:
    void check() const;
    std::vector<ImageSample> samples_;
    bool poisoned_ = false;
};

Tensor flip_horizontal(const Tensor& image);

template <typename T>
Grid<T> flip_horizontal(const Grid<T>& g) {
    Grid<T> out(g.height, g.width);
    for (std::size_t y = 0; y < g.height; ++y) {
        for (std::size_t x = 0; x < g.width; ++x) out.at(y, x) = g.at(y, g.width - 1 - x);
    }
    return out;
}

ImageSample flip_horizontal(const ImageSample& s);

}  // namespace misfit

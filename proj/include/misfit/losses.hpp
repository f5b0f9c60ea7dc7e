#pragma once

#include <cstddef>

#include "misfit/grid.hpp"
#include "misfit/tensor.hpp"

namespace misfit {

/// Per-pixel class distribution, H×W×C.
class ProbabilityMap {
public:
    ProbabilityMap() = default;

    /// Pixel-wise softmax over the class axis.
    static ProbabilityMap from_logits(const Tensor& logits);
    /// Throws InvalidInput unless every pixel is a distribution (sum 1 within 1e-9).
    static ProbabilityMap checked(Tensor probs);

    const Tensor& values() const noexcept { return probs_; }
    std::size_t height() const { return probs_.dim(0); }
    std::size_t width() const { return probs_.dim(1); }
    std::size_t classes() const { return probs_.dim(2); }
    double at(std::size_t y, std::size_t x, std::size_t c) const { return probs_.at(y, x, c); }

private:
    explicit ProbabilityMap(Tensor p) : probs_(std::move(p)) {}
    Tensor probs_;
};

struct PseudoLabel {
    LabelGrid labels;
    Tensor confidence;  // H×W, max class probability
};

enum class FilterScope { per_class, global };

struct FilterConfig {
    double tau = 0.9;
    double top_fraction = 0.66;
    FilterScope scope = FilterScope::per_class;

    void validate() const;
};

struct SelectionMask {
    BinaryGrid keep;
    std::size_t kept = 0;
    std::size_t rejected_depth = 0;
    std::size_t rejected_confidence = 0;
};

struct LossValue {
    double value = 0.0;
    bool warning = false;  // degenerate input: nothing to average over
};

struct LossWithGrad {
    double value = 0.0;
    Tensor grad;  // w.r.t. logits, H×W×C
    bool warning = false;
};

/// Argmax per pixel, lowest class index on ties.
PseudoLabel pseudo_labels(const ProbabilityMap& teacher_probs);

/// Depth validity of a stored disparity map: disparity > 0.
BinaryGrid depth_validity(const Tensor& disparity);

/// Keep a pixel iff its depth is valid and its confidence exceeds tau or lies
/// in the top `top_fraction` of confidences within its scope. Scopes with
/// fewer than kMinScopePixels pixels only use the tau test.
SelectionMask selection_mask(const PseudoLabel& pl, const BinaryGrid& depth_valid, const FilterConfig& cfg);

inline constexpr std::size_t kMinScopePixels = 3;

/// Mean −log p(pseudo-label) over kept pixels; zero with a warning for an empty mask.
LossWithGrad masked_ce(const Tensor& logits, const PseudoLabel& pl, const SelectionMask& mask);
LossValue masked_ce(const ProbabilityMap& probs, const PseudoLabel& pl, const SelectionMask& mask);

/// Shannon entropy per pixel, natural log, 0·log 0 = 0.
Tensor entropy_map(const ProbabilityMap& probs);

/// Mean over valid pixels of (disparity / max valid disparity) · entropy.
LossValue depth_entropy_loss(const ProbabilityMap& probs, const Tensor& disparity, const BinaryGrid& valid);
LossWithGrad depth_entropy_loss(const Tensor& logits, const Tensor& disparity, const BinaryGrid& valid);

/// Mean −log p(label) over pixels whose label is not ignore_index.
LossValue supervised_ce(const ProbabilityMap& probs, const LabelGrid& labels, int ignore_index = kIgnoreLabel);
LossWithGrad supervised_ce(const Tensor& logits, const LabelGrid& labels, int ignore_index = kIgnoreLabel);

}  // namespace misfit

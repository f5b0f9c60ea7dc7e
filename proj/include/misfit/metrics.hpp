#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "misfit/grid.hpp"

namespace misfit {

/// C×C pixel counts, rows = ground truth, columns = prediction.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::size_t classes) : classes_(classes), counts_(classes * classes, 0) {}

    /// Adds every pixel whose ground truth is not ignore_index.
    void add(const LabelGrid& predicted, const LabelGrid& truth, int ignore_index = kIgnoreLabel);
    void merge(const ConfusionMatrix& other);

    std::size_t classes() const noexcept { return classes_; }
    std::uint64_t count(std::size_t truth, std::size_t pred) const { return counts_[truth * classes_ + pred]; }
    std::uint64_t total() const;
    /// TP/(TP+FP+FN); empty when the class appears in neither truth nor prediction.
    std::optional<double> iou(std::size_t c) const;
    /// Mean IoU over classes that are present; empty if none are.
    std::optional<double> mean_iou() const;

private:
    std::size_t classes_;
    std::vector<std::uint64_t> counts_;
};

/// One line of the metrics stream.
struct MetricsRecord {
    std::string phase;  // "pretrain", "adapt" or "eval"
    std::size_t step = 0;
    std::optional<double> supervised_loss;
    std::optional<double> pseudo_loss;
    std::optional<double> entropy_loss;
    std::optional<double> kept_fraction;
    std::vector<std::optional<double>> class_iou;
    std::optional<double> miou;

    friend bool operator==(const MetricsRecord&, const MetricsRecord&) = default;
};

/// Compact single-line JSON, no trailing newline. Absent values are null.
std::string to_json_line(const MetricsRecord& record);

}  // namespace misfit

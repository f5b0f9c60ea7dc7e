#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "misfit/encoder.hpp"
#include "misfit/metrics.hpp"
#include "misfit/pipeline.hpp"

namespace misfit {

/// One row of the ablation table: which fusion and which modules are on.
struct AblationCell {
    FusionMode fusion = FusionMode::key_swap;
    bool self_training = true;
    bool style = true;
    bool entropy = true;

    bool adapts() const { return self_training || entropy; }
    std::string label() const;

    friend bool operator==(const AblationCell&, const AblationCell&) = default;
};

/// Cartesian product of the axes, or an explicit cell list when `cells` is non-empty.
struct AblationGrid {
    std::vector<FusionMode> fusion_modes{FusionMode::key_swap};
    std::vector<bool> self_training{false, true};
    std::vector<bool> style{false, true};
    std::vector<bool> entropy{false, true};
    std::vector<AblationCell> cells;
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};

    void validate() const;
    std::vector<AblationCell> expand() const;
};

struct AblationRecord {
    AblationCell cell;
    std::uint64_t seed = 0;
    MetricsRecord eval;
};

std::string to_json_line(const AblationRecord& record);

using AblationSink = std::function<void(const AblationRecord&)>;

/// Runs every (cell, seed) pair: pretraining on `source` (shared between cells
/// with equal fusion, style and seed), adaptation on the label-stripped
/// `target` when the cell enables it, evaluation on the labeled `target`.
/// Records come back in cell-major, seed-minor order.
std::vector<AblationRecord> run_ablation_matrix(const AblationGrid& grid, const SampleStore& source,
                                                const SampleStore& target, const AdaptConfig& base,
                                                const AblationSink& sink = {});

struct AblationSummaryRow {
    AblationCell cell;
    double median_miou = 0.0;
    std::size_t runs = 0;
};

/// Median mIoU per cell, in first-appearance order. Runs without an mIoU count as 0.
std::vector<AblationSummaryRow> summarize(const std::vector<AblationRecord>& records);
double median(std::vector<double> values);

}  // namespace misfit

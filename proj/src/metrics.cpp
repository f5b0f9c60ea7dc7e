#include "misfit/metrics.hpp"

#include <nlohmann/json.hpp>

#include "misfit/errors.hpp"
#include "misfit/json_util.hpp"

namespace misfit {

void ConfusionMatrix::add(const LabelGrid& predicted, const LabelGrid& truth, int ignore_index) {
    if (predicted.height != truth.height || predicted.width != truth.width) {
        throw InvalidInput("confusion matrix: prediction and truth differ in size");
    }
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const int t = truth.values[i];
        if (t == ignore_index) continue;
        const int p = predicted.values[i];
        if (t < 0 || static_cast<std::size_t>(t) >= classes_ || p < 0 || static_cast<std::size_t>(p) >= classes_) {
            throw InvalidInput("confusion matrix: class id out of range");
        }
        ++counts_[static_cast<std::size_t>(t) * classes_ + static_cast<std::size_t>(p)];
    }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
    if (other.classes_ != classes_) throw InvalidInput("confusion matrix: class count mismatch");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::uint64_t ConfusionMatrix::total() const {
    std::uint64_t s = 0;
    for (auto v : counts_) s += v;
    return s;
}

std::optional<double> ConfusionMatrix::iou(std::size_t c) const {
    std::uint64_t tp = count(c, c), fp = 0, fn = 0;
    for (std::size_t k = 0; k < classes_; ++k) {
        if (k == c) continue;
        fp += count(k, c);
        fn += count(c, k);
    }
    const std::uint64_t denom = tp + fp + fn;
    if (denom == 0) return std::nullopt;
    return static_cast<double>(tp) / static_cast<double>(denom);
}

std::optional<double> ConfusionMatrix::mean_iou() const {
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t c = 0; c < classes_; ++c) {
        if (const auto v = iou(c)) {
            s += *v;
            ++n;
        }
    }
    if (n == 0) return std::nullopt;
    return s / static_cast<double>(n);
}

std::string to_json_line(const MetricsRecord& r) {
    nlohmann::ordered_json j;
    j["phase"] = r.phase;
    j["step"] = r.step;
    j["supervised_loss"] = json_optional(r.supervised_loss);
    j["pseudo_loss"] = json_optional(r.pseudo_loss);
    j["entropy_loss"] = json_optional(r.entropy_loss);
    j["kept_fraction"] = json_optional(r.kept_fraction);
    auto ious = nlohmann::ordered_json::array();
    for (const auto& v : r.class_iou) ious.push_back(json_optional(v));
    j["class_iou"] = std::move(ious);
    j["miou"] = json_optional(r.miou);
    return j.dump();
}

}  // namespace misfit

#include "misfit/losses.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>

#include <spdlog/spdlog.h>

#include "misfit/errors.hpp"

namespace misfit {

namespace {

void require_logits(const Tensor& logits, const char* what) {
    if (logits.rank() != 3 || logits.dim(2) == 0) {
        throw InvalidInput(std::string(what) + ": logits must be H×W×C, got " + shape_string(logits.shape()));
    }
}

void require_grid(std::size_t gh, std::size_t gw, std::size_t h, std::size_t w, const char* what) {
    if (gh != h || gw != w) throw InvalidInput(std::string(what) + ": spatial shapes differ");
}

/// log-softmax of one pixel written into out; returns nothing.
void log_softmax(const double* z, std::size_t c, double* out) {
    const double mx = *std::max_element(z, z + c);
    double s = 0.0;
    for (std::size_t k = 0; k < c; ++k) s += std::exp(z[k] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t k = 0; k < c; ++k) out[k] = z[k] - lse;
}

double xlogx_sum(const double* p, std::size_t c) {
    double h = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
        if (p[k] > 0.0) h -= p[k] * std::log(p[k]);
    }
    return h;
}

/// Cross-entropy against per-pixel targets; target < 0 means "skip".
LossWithGrad ce_logits(const Tensor& logits, const std::function<int(std::size_t)>& target_of, const char* what) {
    const std::size_t h = logits.dim(0), w = logits.dim(1), c = logits.dim(2);
    LossWithGrad out{0.0, Tensor(logits.shape()), false};
    std::vector<double> lp(c);
    std::size_t count = 0;
    for (std::size_t i = 0; i < h * w; ++i) {
        const int t = target_of(i);
        if (t < 0) continue;
        const double* z = logits.raw() + i * c;
        log_softmax(z, c, lp.data());
        out.value -= lp[static_cast<std::size_t>(t)];
        double* g = out.grad.raw() + i * c;
        for (std::size_t k = 0; k < c; ++k) g[k] = std::exp(lp[k]);
        g[t] -= 1.0;
        ++count;
    }
    if (count == 0) {
        out.value = 0.0;
        out.warning = true;
        spdlog::debug("{}: no pixels to average over", what);
        return out;
    }
    const double inv = 1.0 / static_cast<double>(count);
    out.value *= inv;
    for (auto& v : out.grad.data()) v *= inv;
    return out;
}

double max_valid_disparity(const Tensor& disparity, const BinaryGrid& valid, std::size_t& n_valid) {
    double mx = 0.0;
    n_valid = 0;
    for (std::size_t i = 0; i < disparity.size(); ++i) {
        if (disparity[i] < 0.0) throw InvalidInput("depth_entropy_loss: negative disparity");
        if (!valid.values[i]) continue;
        ++n_valid;
        mx = std::max(mx, disparity[i]);
    }
    return mx;
}

void check_depth_inputs(const Tensor& disparity, const BinaryGrid& valid, std::size_t h, std::size_t w) {
    if (disparity.rank() != 2) throw InvalidInput("depth_entropy_loss: disparity must be H×W");
    require_grid(disparity.dim(0), disparity.dim(1), h, w, "depth_entropy_loss");
    require_grid(valid.height, valid.width, h, w, "depth_entropy_loss");
}

}  // namespace

ProbabilityMap ProbabilityMap::from_logits(const Tensor& logits) {
    require_logits(logits, "ProbabilityMap");
    const std::size_t c = logits.dim(2), n = logits.dim(0) * logits.dim(1);
    Tensor p(logits.shape());
    std::vector<double> lp(c);
    for (std::size_t i = 0; i < n; ++i) {
        log_softmax(logits.raw() + i * c, c, lp.data());
        for (std::size_t k = 0; k < c; ++k) p[i * c + k] = std::exp(lp[k]);
    }
    return ProbabilityMap(std::move(p));
}

ProbabilityMap ProbabilityMap::checked(Tensor probs) {
    require_logits(probs, "ProbabilityMap");
    const std::size_t c = probs.dim(2), n = probs.dim(0) * probs.dim(1);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < c; ++k) {
            const double v = probs[i * c + k];
            if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidInput("ProbabilityMap: negative or non-finite entry");
            s += v;
        }
        if (std::abs(s - 1.0) > 1e-9) throw InvalidInput("ProbabilityMap: pixel does not sum to 1");
    }
    return ProbabilityMap(std::move(probs));
}

void FilterConfig::validate() const {
    if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("filter tau must lie in [0, 1]");
    if (!(top_fraction > 0.0 && top_fraction <= 1.0)) throw ConfigError("filter top_fraction must lie in (0, 1]");
}

PseudoLabel pseudo_labels(const ProbabilityMap& teacher_probs) {
    const std::size_t h = teacher_probs.height(), w = teacher_probs.width(), c = teacher_probs.classes();
    PseudoLabel pl{LabelGrid(h, w, 0), Tensor({h, w})};
    const Tensor& p = teacher_probs.values();
    for (std::size_t i = 0; i < h * w; ++i) {
        const double* row = p.raw() + i * c;
        std::size_t best = 0;
        for (std::size_t k = 1; k < c; ++k) {
            if (row[k] > row[best]) best = k;
        }
        pl.labels.values[i] = static_cast<int>(best);
        pl.confidence[i] = row[best];
    }
    return pl;
}

BinaryGrid depth_validity(const Tensor& disparity) {
    if (disparity.rank() != 2) throw InvalidInput("depth_validity: disparity must be H×W");
    BinaryGrid valid(disparity.dim(0), disparity.dim(1), 0);
    for (std::size_t i = 0; i < disparity.size(); ++i) valid.values[i] = disparity[i] > 0.0 ? 1 : 0;
    return valid;
}

SelectionMask selection_mask(const PseudoLabel& pl, const BinaryGrid& depth_valid, const FilterConfig& cfg) {
    cfg.validate();
    const std::size_t h = pl.labels.height, w = pl.labels.width;
    require_grid(pl.confidence.dim(0), pl.confidence.dim(1), h, w, "selection_mask");
    require_grid(depth_valid.height, depth_valid.width, h, w, "selection_mask");

    // Confidence threshold for the top-fraction branch, per scope key.
    std::map<int, std::vector<double>> scopes;
    for (std::size_t i = 0; i < h * w; ++i) {
        const int key = cfg.scope == FilterScope::per_class ? pl.labels.values[i] : 0;
        scopes[key].push_back(pl.confidence[i]);
    }
    std::map<int, double> cut;
    for (auto& [key, conf] : scopes) {
        if (conf.size() < kMinScopePixels) continue;
        const auto k = static_cast<std::size_t>(std::ceil(cfg.top_fraction * static_cast<double>(conf.size()) - 1e-9));
        if (k == 0) continue;
        std::nth_element(conf.begin(), conf.begin() + static_cast<std::ptrdiff_t>(k - 1), conf.end(), std::greater<>());
        cut[key] = conf[k - 1];
    }

    SelectionMask m{BinaryGrid(h, w, 0), 0, 0, 0};
    for (std::size_t i = 0; i < h * w; ++i) {
        if (!depth_valid.values[i]) {
            ++m.rejected_depth;
            continue;
        }
        const double conf = pl.confidence[i];
        const int key = cfg.scope == FilterScope::per_class ? pl.labels.values[i] : 0;
        const auto it = cut.find(key);
        if (conf > cfg.tau || (it != cut.end() && conf >= it->second)) {
            m.keep.values[i] = 1;
            ++m.kept;
        } else {
            ++m.rejected_confidence;
        }
    }
    return m;
}

LossWithGrad masked_ce(const Tensor& logits, const PseudoLabel& pl, const SelectionMask& mask) {
    require_logits(logits, "masked_ce");
    const std::size_t h = logits.dim(0), w = logits.dim(1);
    require_grid(pl.labels.height, pl.labels.width, h, w, "masked_ce");
    require_grid(mask.keep.height, mask.keep.width, h, w, "masked_ce");
    return ce_logits(
        logits, [&](std::size_t i) { return mask.keep.values[i] ? pl.labels.values[i] : -1; }, "masked_ce");
}

LossValue masked_ce(const ProbabilityMap& probs, const PseudoLabel& pl, const SelectionMask& mask) {
    const std::size_t h = probs.height(), w = probs.width(), c = probs.classes();
    require_grid(pl.labels.height, pl.labels.width, h, w, "masked_ce");
    require_grid(mask.keep.height, mask.keep.width, h, w, "masked_ce");
    LossValue out;
    std::size_t count = 0;
    for (std::size_t i = 0; i < h * w; ++i) {
        if (!mask.keep.values[i]) continue;
        out.value -= std::log(probs.values()[i * c + static_cast<std::size_t>(pl.labels.values[i])]);
        ++count;
    }
    if (count == 0) return {0.0, true};
    out.value /= static_cast<double>(count);
    return out;
}

Tensor entropy_map(const ProbabilityMap& probs) {
    const std::size_t h = probs.height(), w = probs.width(), c = probs.classes();
    Tensor out({h, w});
    for (std::size_t i = 0; i < h * w; ++i) out[i] = xlogx_sum(probs.values().raw() + i * c, c);
    return out;
}

LossValue depth_entropy_loss(const ProbabilityMap& probs, const Tensor& disparity, const BinaryGrid& valid) {
    check_depth_inputs(disparity, valid, probs.height(), probs.width());
    std::size_t n_valid = 0;
    const double mx = max_valid_disparity(disparity, valid, n_valid);
    if (n_valid == 0 || mx <= 0.0) {
        spdlog::debug("depth_entropy_loss: no valid disparity to weight by");
        return {0.0, true};
    }
    const Tensor ent = entropy_map(probs);
    double s = 0.0;
    for (std::size_t i = 0; i < ent.size(); ++i) {
        if (valid.values[i]) s += (disparity[i] / mx) * ent[i];
    }
    return {s / static_cast<double>(n_valid), false};
}

LossWithGrad depth_entropy_loss(const Tensor& logits, const Tensor& disparity, const BinaryGrid& valid) {
    require_logits(logits, "depth_entropy_loss");
    const std::size_t h = logits.dim(0), w = logits.dim(1), c = logits.dim(2);
    check_depth_inputs(disparity, valid, h, w);
    LossWithGrad out{0.0, Tensor(logits.shape()), false};
    std::size_t n_valid = 0;
    const double mx = max_valid_disparity(disparity, valid, n_valid);
    if (n_valid == 0 || mx <= 0.0) {
        out.warning = true;
        spdlog::debug("depth_entropy_loss: no valid disparity to weight by");
        return out;
    }
    const double inv_n = 1.0 / static_cast<double>(n_valid);
    std::vector<double> lp(c);
    for (std::size_t i = 0; i < h * w; ++i) {
        if (!valid.values[i]) continue;
        const double weight = disparity[i] / mx;
        log_softmax(logits.raw() + i * c, c, lp.data());
        double ent = 0.0;
        for (std::size_t k = 0; k < c; ++k) ent -= std::exp(lp[k]) * lp[k];
        out.value += weight * ent;
        // dH/dz_k = -p_k (log p_k + H)
        double* g = out.grad.raw() + i * c;
        for (std::size_t k = 0; k < c; ++k) g[k] = -weight * inv_n * std::exp(lp[k]) * (lp[k] + ent);
    }
    out.value *= inv_n;
    return out;
}

LossValue supervised_ce(const ProbabilityMap& probs, const LabelGrid& labels, int ignore_index) {
    const std::size_t h = probs.height(), w = probs.width(), c = probs.classes();
    require_grid(labels.height, labels.width, h, w, "supervised_ce");
    LossValue out;
    std::size_t count = 0;
    for (std::size_t i = 0; i < h * w; ++i) {
        const int t = labels.values[i];
        if (t == ignore_index) continue;
        if (t < 0 || static_cast<std::size_t>(t) >= c) throw InvalidInput("supervised_ce: label out of range");
        out.value -= std::log(probs.values()[i * c + static_cast<std::size_t>(t)]);
        ++count;
    }
    if (count == 0) return {0.0, true};
    out.value /= static_cast<double>(count);
    return out;
}

LossWithGrad supervised_ce(const Tensor& logits, const LabelGrid& labels, int ignore_index) {
    require_logits(logits, "supervised_ce");
    const std::size_t h = logits.dim(0), w = logits.dim(1), c = logits.dim(2);
    require_grid(labels.height, labels.width, h, w, "supervised_ce");
    return ce_logits(
        logits,
        [&](std::size_t i) {
            const int t = labels.values[i];
            if (t == ignore_index) return -1;
            if (t < 0 || static_cast<std::size_t>(t) >= c) throw InvalidInput("supervised_ce: label out of range");
            return t;
        },
        "supervised_ce");
}

}  // namespace misfit

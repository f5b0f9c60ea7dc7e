#pragma once

// Finite-difference audit of encoder_backward on the tiny reference model.
// Shared by the unit tests and the acceptance binary.

#include <functional>
#include <string>
#include <vector>

#include "misfit/encoder.hpp"
#include "misfit/losses.hpp"
#include "misfit/numerics.hpp"
#include "support.hpp"

namespace testing {

inline misfit::EncoderConfig tiny_encoder(misfit::FusionMode mode = misfit::FusionMode::key_swap) {
    misfit::EncoderConfig cfg;
    cfg.patch_size = 2;
    cfg.in_channels = 3;
    cfg.stage_dims = {8, 8};
    cfg.heads_per_stage = {2, 2};
    cfg.num_stages = 2;
    cfg.num_classes = 3;
    cfg.mlp_ratio = 2;
    cfg.decoder_dim = 8;
    cfg.fusion_mode = mode;
    return cfg;
}

enum class LossKind { supervised, masked, depth_entropy };

inline const char* loss_name(LossKind k) {
    switch (k) {
        case LossKind::supervised: return "supervised_ce";
        case LossKind::masked: return "masked_ce";
        default: return "depth_entropy_loss";
    }
}

/// A loss of the logits with fixed targets, drawn once from `seed`.
struct LossFixture {
    LossKind kind;
    misfit::LabelGrid labels;
    misfit::PseudoLabel pseudo;
    misfit::SelectionMask mask;
    misfit::Tensor disparity;
    misfit::BinaryGrid valid;

    LossFixture(LossKind k, std::size_t h, std::size_t w, std::size_t classes, std::uint64_t seed) : kind(k) {
        misfit::Rng rng(seed);
        labels = misfit::LabelGrid(h, w);
        for (auto& v : labels.values) v = rng.bernoulli(0.2) ? misfit::kIgnoreLabel : static_cast<int>(rng.below(classes));
        const auto teacher = misfit::ProbabilityMap::from_logits(random_tensor({h, w, classes}, rng, -3, 3));
        pseudo = misfit::pseudo_labels(teacher);
        disparity = misfit::Tensor({h, w});
        valid = misfit::BinaryGrid(h, w);
        for (std::size_t i = 0; i < h * w; ++i) {
            disparity[i] = rng.bernoulli(0.25) ? 0.0 : rng.uniform(1.0, 80.0);
            valid.values[i] = disparity[i] > 0.0;
        }
        mask = misfit::selection_mask(pseudo, valid, {0.6, 0.66, misfit::FilterScope::per_class});
    }

    misfit::LossWithGrad operator()(const misfit::Tensor& logits) const {
        switch (kind) {
            case LossKind::supervised: return misfit::supervised_ce(logits, labels);
            case LossKind::masked: return misfit::masked_ce(logits, pseudo, mask);
            default: return misfit::depth_entropy_loss(logits, disparity, valid);
        }
    }
};

struct GradAudit {
    double param_rel_error = 0.0;
    double rgb_rel_error = 0.0;
    double depth_rel_error = 0.0;
    std::size_t params_checked = 0;
};

/// Analytic vs central-difference gradients (eps 1e-5) over every parameter and both inputs.
inline GradAudit audit_gradients(const misfit::ModelParams& params, const misfit::Tensor& rgb,
                                 const misfit::Tensor& depth, const LossFixture& loss) {
    using namespace misfit;
    const auto fwd = encoder_forward_cached(rgb, depth, params);
    const auto lg = loss(fwd.logits);
    const auto grads = encoder_backward(lg.grad, fwd.cache, params);

    GradAudit audit;
    const auto flat = params.flatten();
    ModelParams probe = params;
    const auto numeric = finite_diff_grad(
        [&](std::span<const double> p) {
            probe.assign_flat(p);
            return loss(encoder_forward(rgb, depth, probe)).value;
        },
        flat, 1e-5);
    audit.param_rel_error = max_rel_error(grads.params.flatten(), numeric);
    audit.params_checked = flat.size();

    const auto input_numeric = [&](const Tensor& base, bool is_rgb) {
        return finite_diff_grad(
            [&](std::span<const double> p) {
                const Tensor x(base.shape(), std::vector<double>(p.begin(), p.end()));
                return loss(is_rgb ? encoder_forward(x, depth, params) : encoder_forward(rgb, x, params)).value;
            },
            base.values(), 1e-5);
    };
    audit.rgb_rel_error = max_rel_error(grads.rgb.values(), input_numeric(rgb, true));
    audit.depth_rel_error = max_rel_error(grads.depth.values(), input_numeric(depth, false));
    return audit;
}

}  // namespace testing

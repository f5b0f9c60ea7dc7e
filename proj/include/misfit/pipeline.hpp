#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "misfit/encoder.hpp"
#include "misfit/losses.hpp"
#include "misfit/metrics.hpp"
#include "misfit/sample.hpp"
#include "misfit/style.hpp"

namespace misfit {

/// Every knob of pretraining and adaptation.
struct AdaptConfig {
    // Amplitude-swap window per modality.
    double beta_rgb = 0.01;
    double beta_d = 0.09;
    // Pseudo-label filter.
    double tau = 0.9;
    double top_fraction = 0.66;
    FilterScope filter_scope = FilterScope::per_class;
    // Teacher.
    double ema_momentum = 0.99;
    std::size_t ema_period = 100;
    double lambda_ent = 0.1;
    // Optimizer; epochs/batch_size drive source pretraining.
    double lr = 6e-5;
    double weight_decay = 0.01;
    std::size_t epochs = 40;
    std::size_t batch_size = 4;
    std::size_t adapt_epochs = 20;
    std::size_t adapt_batch_size = 2;
    std::uint64_t seed = 0;
    // Module toggles (ablation axes).
    bool style = true;
    bool self_training = true;
    bool entropy = true;
    bool flip = true;
    std::size_t profile_samples = 8;
    double disparity_max = 256.0;
    std::size_t log_every = 50;
    EncoderConfig encoder;

    void validate() const;
    FilterConfig filter() const { return {tau, top_fraction, filter_scope}; }
    StyleConfig rgb_style() const { return {beta_rgb, {0.0, 255.0}}; }
    StyleConfig depth_style() const { return {beta_d, {0.0, disparity_max}}; }
};

/// Encoder-ready tensors: rgb/255 and disparity/disparity_max.
struct ModelInput {
    Tensor rgb;
    Tensor depth;
};

ModelInput model_input(const ImageSample& sample, double disparity_max);

struct StyleProfiles {
    AmplitudeProfile rgb;
    AmplitudeProfile depth;
};

/// Averaged amplitude spectra of the first `count` target frames.
StyleProfiles build_style_profiles(const SampleStore& target, std::size_t count);

/// The frame pretraining actually sees: rgb and disparity amplitude-swapped
/// when cfg.style is on, untouched otherwise. Validity and label pass through.
ImageSample pretraining_view(const ImageSample& source, const StyleProfiles& profiles, const AdaptConfig& cfg);

using MetricsSink = std::function<void(const MetricsRecord&)>;

struct TrainResult {
    ModelParams params;
    std::vector<double> loss_curve;     // one entry per optimizer step
    std::vector<double> kept_fraction;  // adaptation only, one entry per step
    std::size_t steps = 0;
};

/// Supervised source training with stylized inputs.
TrainResult pretrain_source(const SampleStore& source, const StyleProfiles& profiles, const AdaptConfig& cfg,
                            const MetricsSink& sink = {});

/// Source-free target adaptation from `pretrained`: EMA teacher, depth-masked
/// self-training and disparity-weighted entropy minimization. Never reads labels.
TrainResult adapt_target(const SampleStore& target, const ModelParams& pretrained, const AdaptConfig& cfg,
                         const MetricsSink& sink = {});

LabelGrid predict_labels(const ModelParams& model, const ImageSample& sample, double disparity_max);

/// Confusion-matrix mIoU over every labeled pixel of `data`.
MetricsRecord evaluate(const ModelParams& model, const SampleStore& data, const AdaptConfig& cfg);
ConfusionMatrix confusion(const ModelParams& model, const SampleStore& data, const AdaptConfig& cfg);

}  // namespace misfit

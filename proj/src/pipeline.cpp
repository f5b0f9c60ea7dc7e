#include "misfit/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <spdlog/spdlog.h>

#include "misfit/errors.hpp"
#include "misfit/optimizer.hpp"
#include "misfit/rng.hpp"
#include "parallel.hpp"

namespace misfit {

namespace {

// Sub-stream tags for derive_seed.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kPretrainStream = 2;
constexpr std::uint64_t kAdaptStream = 3;

void accumulate(ModelParams& into, const ModelParams& g) {
    auto& t = into.tensors();
    for (std::size_t i = 0; i < t.size(); ++i) {
        auto d = t[i].value.data();
        const auto s = g[i].data();
        for (std::size_t k = 0; k < d.size(); ++k) d[k] += s[k];
    }
}

void scale(ModelParams& p, double f) {
    for (auto& nt : p.tensors()) {
        for (auto& v : nt.value.data()) v *= f;
    }
}

void add_scaled(Tensor& into, const Tensor& g, double f) {
    for (std::size_t i = 0; i < into.size(); ++i) into[i] += f * g[i];
}

struct Batching {
    std::size_t steps_per_epoch;
    std::size_t total;
};

Batching batching(std::size_t n, std::size_t batch, std::size_t epochs) {
    const std::size_t per = (n + batch - 1) / batch;
    return {per, per * epochs};
}

bool should_log(std::size_t step, std::size_t total, std::size_t every) {
    return every > 0 && (step % every == 0 || step == total);
}

}  // namespace

void AdaptConfig::validate() const {
    rgb_style().validate();
    depth_style().validate();
    filter().validate();
    if (!(ema_momentum >= 0.0 && ema_momentum <= 1.0)) throw ConfigError("ema_momentum must lie in [0, 1]");
    if (ema_period < 1) throw ConfigError("ema_period must be at least 1");
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
    if (!(lambda_ent >= 0.0)) throw ConfigError("lambda_ent must be non-negative");
    if (batch_size == 0 || adapt_batch_size == 0) throw ConfigError("batch sizes must be positive");
    if (profile_samples == 0) throw ConfigError("profile_samples must be positive");
    if (!(disparity_max > 0.0)) throw ConfigError("disparity_max must be positive");
    encoder.validate();
}

ModelInput model_input(const ImageSample& sample, double disparity_max) {
    ModelInput in{sample.rgb, sample.disparity};
    for (auto& v : in.rgb.data()) v /= 255.0;
    for (auto& v : in.depth.data()) v /= disparity_max;
    return in;
}

StyleProfiles build_style_profiles(const SampleStore& target, std::size_t count) {
    if (target.empty()) throw InvalidInput("build_style_profiles: empty target set");
    const std::size_t n = std::min(count, target.size());
    std::vector<Tensor> rgb, depth;
    rgb.reserve(n);
    depth.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        rgb.push_back(target.at(i).rgb);
        depth.push_back(target.at(i).disparity);
    }
    return {target_amplitude_profile(rgb), target_amplitude_profile(depth)};
}

ImageSample pretraining_view(const ImageSample& source, const StyleProfiles& profiles, const AdaptConfig& cfg) {
    if (!cfg.style) return source;
    ImageSample out = source;
    out.rgb = stylize(source.rgb, profiles.rgb, cfg.rgb_style());
    out.disparity = stylize(source.disparity, profiles.depth, cfg.depth_style());
    return out;
}

TrainResult pretrain_source(const SampleStore& source, const StyleProfiles& profiles, const AdaptConfig& cfg,
                            const MetricsSink& sink) {
    cfg.validate();
    if (source.empty()) throw InvalidInput("pretrain_source: empty source set");

    // Profiles are fixed for the whole run, so each frame's stylized view is too.
    std::vector<ImageSample> views(source.size());
    detail::parallel_for(source.size(), [&](std::size_t i) {
        const ImageSample& s = source.at(i);
        s.validate(cfg.encoder.num_classes);
        if (!s.label) throw InvalidInput("pretrain_source: source frame " + std::to_string(i) + " has no label");
        views[i] = pretraining_view(s, profiles, cfg);
    });
    cfg.encoder.validate_input(views.front().height(), views.front().width());

    TrainResult result{ModelParams::initialize(cfg.encoder, derive_seed(cfg.seed, kInitStream)), {}, {}, 0};
    ModelParams& params = result.params;
    AdamW opt(params, {cfg.weight_decay});
    Rng rng(derive_seed(cfg.seed, kPretrainStream));
    const Batching plan = batching(views.size(), cfg.batch_size, cfg.epochs);

    std::vector<std::size_t> order(views.size());
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        rng.shuffle(order);
        for (std::size_t b = 0; b < plan.steps_per_epoch; ++b) {
            const std::size_t begin = b * cfg.batch_size;
            const std::size_t count = std::min(cfg.batch_size, views.size() - begin);
            std::vector<bool> flips(count, false);
            for (std::size_t k = 0; k < count; ++k) flips[k] = cfg.flip && rng.bernoulli(0.5);

            std::vector<ModelParams> grads(count);
            std::vector<double> losses(count);
            detail::parallel_for(count, [&](std::size_t k) {
                const ImageSample& v = views[order[begin + k]];
                const ImageSample s = flips[k] ? flip_horizontal(v) : v;
                const ModelInput in = model_input(s, cfg.disparity_max);
                const EncoderOutput fwd = encoder_forward_cached(in.rgb, in.depth, params);
                const LossWithGrad ce = supervised_ce(fwd.logits, *s.label);
                losses[k] = ce.value;
                grads[k] = encoder_backward(ce.grad, fwd.cache, params).params;
            });
            ModelParams total = std::move(grads[0]);
            double loss = losses[0];
            for (std::size_t k = 1; k < count; ++k) {
                accumulate(total, grads[k]);
                loss += losses[k];
            }
            scale(total, 1.0 / static_cast<double>(count));
            loss /= static_cast<double>(count);
            if (!std::isfinite(loss) || !total.all_finite()) throw TrainingError("pretraining diverged", step);

            opt.step(params, total, poly_lr(cfg.lr, step, plan.total));
            ++step;
            result.loss_curve.push_back(loss);
            if (sink && should_log(step, plan.total, cfg.log_every)) {
                MetricsRecord rec;
                rec.phase = "pretrain";
                rec.step = step;
                rec.supervised_loss = loss;
                sink(rec);
            }
        }
        spdlog::info("pretrain epoch {}/{}: loss {:.4f}", epoch + 1, cfg.epochs, result.loss_curve.back());
    }
    result.steps = step;
    return result;
}

TrainResult adapt_target(const SampleStore& target, const ModelParams& pretrained, const AdaptConfig& cfg,
                         const MetricsSink& sink) {
    cfg.validate();
    if (target.empty()) throw InvalidInput("adapt_target: empty target set");
    if (!pretrained.all_finite()) throw InvalidInput("adapt_target: pretrained parameters are not finite");

    TrainResult result{pretrained, {}, {}, 0};
    if (!cfg.self_training && !cfg.entropy) return result;

    ModelParams& student = result.params;
    ModelParams teacher = pretrained;
    AdamW opt(student, {cfg.weight_decay});
    Rng rng(derive_seed(cfg.seed, kAdaptStream));
    const Batching plan = batching(target.size(), cfg.adapt_batch_size, cfg.adapt_epochs);
    const FilterConfig filter = cfg.filter();

    std::vector<std::size_t> order(target.size());
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.adapt_epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        rng.shuffle(order);
        for (std::size_t b = 0; b < plan.steps_per_epoch; ++b) {
            const std::size_t begin = b * cfg.adapt_batch_size;
            const std::size_t count = std::min(cfg.adapt_batch_size, target.size() - begin);
            std::vector<bool> flips(count, false);
            for (std::size_t k = 0; k < count; ++k) flips[k] = cfg.flip && rng.bernoulli(0.5);

            std::vector<ModelParams> grads(count);
            std::vector<double> pseudo(count, 0.0), ent(count, 0.0);
            std::vector<std::size_t> kept(count, 0), pixels(count, 0);
            detail::parallel_for(count, [&](std::size_t k) {
                const ImageSample& raw = target.at(order[begin + k]);
                const ImageSample s = flips[k] ? flip_horizontal(raw) : raw;
                const ModelInput in = model_input(s, cfg.disparity_max);
                const EncoderOutput fwd = encoder_forward_cached(in.rgb, in.depth, student);
                Tensor dlogits(fwd.logits.shape());
                pixels[k] = s.valid.size();
                if (cfg.self_training) {
                    const auto probs = ProbabilityMap::from_logits(encoder_forward(in.rgb, in.depth, teacher));
                    const PseudoLabel pl = pseudo_labels(probs);
                    const SelectionMask mask = selection_mask(pl, s.valid, filter);
                    const LossWithGrad l = masked_ce(fwd.logits, pl, mask);
                    pseudo[k] = l.value;
                    kept[k] = mask.kept;
                    add_scaled(dlogits, l.grad, 1.0);
                }
                if (cfg.entropy) {
                    const LossWithGrad l = depth_entropy_loss(fwd.logits, s.disparity, s.valid);
                    ent[k] = l.value;
                    add_scaled(dlogits, l.grad, cfg.lambda_ent);
                }
                grads[k] = encoder_backward(dlogits, fwd.cache, student).params;
            });
            ModelParams total = std::move(grads[0]);
            double pseudo_mean = pseudo[0], ent_mean = ent[0];
            std::size_t kept_sum = kept[0], pixel_sum = pixels[0];
            for (std::size_t k = 1; k < count; ++k) {
                accumulate(total, grads[k]);
                pseudo_mean += pseudo[k];
                ent_mean += ent[k];
                kept_sum += kept[k];
                pixel_sum += pixels[k];
            }
            const double inv = 1.0 / static_cast<double>(count);
            scale(total, inv);
            pseudo_mean *= inv;
            ent_mean *= inv;
            const double loss = pseudo_mean + cfg.lambda_ent * ent_mean;
            if (!std::isfinite(loss) || !total.all_finite()) throw TrainingError("adaptation diverged", step);

            opt.step(student, total, poly_lr(cfg.lr, step, plan.total));
            ++step;
            if (step % cfg.ema_period == 0) teacher = ema_update(teacher, student, cfg.ema_momentum);

            const double kept_fraction = static_cast<double>(kept_sum) / static_cast<double>(pixel_sum);
            result.loss_curve.push_back(loss);
            result.kept_fraction.push_back(kept_fraction);
            if (sink && should_log(step, plan.total, cfg.log_every)) {
                MetricsRecord rec;
                rec.phase = "adapt";
                rec.step = step;
                if (cfg.self_training) {
                    rec.pseudo_loss = pseudo_mean;
                    rec.kept_fraction = kept_fraction;
                }
                if (cfg.entropy) rec.entropy_loss = ent_mean;
                sink(rec);
            }
        }
        spdlog::info("adapt epoch {}/{}: loss {:.4f}", epoch + 1, cfg.adapt_epochs, result.loss_curve.back());
    }
    result.steps = step;
    return result;
}

LabelGrid predict_labels(const ModelParams& model, const ImageSample& sample, double disparity_max) {
    const ModelInput in = model_input(sample, disparity_max);
    const Tensor logits = encoder_forward(in.rgb, in.depth, model);
    const std::size_t h = logits.dim(0), w = logits.dim(1), c = logits.dim(2);
    LabelGrid out(h, w, 0);
    for (std::size_t i = 0; i < h * w; ++i) {
        const double* z = logits.raw() + i * c;
        out.values[i] = static_cast<int>(std::max_element(z, z + c) - z);
    }
    return out;
}

ConfusionMatrix confusion(const ModelParams& model, const SampleStore& data, const AdaptConfig& cfg) {
    const std::size_t classes = model.config().num_classes;
    std::vector<ConfusionMatrix> per(data.size(), ConfusionMatrix(classes));
    detail::parallel_for(data.size(), [&](std::size_t i) {
        const ImageSample& s = data.at(i);
        if (!s.label) throw InvalidInput("evaluate: frame " + std::to_string(i) + " has no label");
        per[i].add(predict_labels(model, s, cfg.disparity_max), *s.label);
    });
    ConfusionMatrix cm(classes);
    for (const auto& m : per) cm.merge(m);
    return cm;
}

MetricsRecord evaluate(const ModelParams& model, const SampleStore& data, const AdaptConfig& cfg) {
    if (data.empty()) throw InvalidInput("evaluate: empty dataset");
    const ConfusionMatrix cm = confusion(model, data, cfg);
    if (cm.total() == 0) throw InvalidInput("evaluate: no labeled pixels");
    MetricsRecord rec;
    rec.phase = "eval";
    for (std::size_t c = 0; c < cm.classes(); ++c) rec.class_iou.push_back(cm.iou(c));
    rec.miou = cm.mean_iou();
    return rec;
}

}  // namespace misfit

#pragma once

#include <cstddef>

#include "misfit/encoder.hpp"

namespace misfit {

struct AdamWConfig {
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with decoupled weight decay.
class AdamW {
public:
    AdamW(const ModelParams& like, AdamWConfig cfg);

    void step(ModelParams& params, const ModelParams& grads, double lr);
    std::size_t steps() const noexcept { return t_; }

private:
    AdamWConfig cfg_;
    ModelParams m_, v_;
    std::size_t t_ = 0;
};

/// base·(1 − step/total)^power, reaching 0 at step == total.
double poly_lr(double base, std::size_t step, std::size_t total, double power = 1.0);

/// teacher' = momentum·teacher + (1 − momentum)·student, per scalar.
ModelParams ema_update(const ModelParams& teacher, const ModelParams& student, double momentum);

}  // namespace misfit

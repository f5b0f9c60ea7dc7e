#include "misfit/optimizer.hpp"

#include <algorithm>
#include <cmath>

#include "misfit/errors.hpp"

namespace misfit {

AdamW::AdamW(const ModelParams& like, AdamWConfig cfg) : cfg_(cfg), m_(like.zeros_like()), v_(like.zeros_like()) {}

void AdamW::step(ModelParams& params, const ModelParams& grads, double lr) {
    if (!params.same_layout(m_) || !grads.same_layout(m_)) throw InvalidInput("AdamW: parameter layout changed");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    auto& pt = params.tensors();
    for (std::size_t i = 0; i < pt.size(); ++i) {
        auto p = pt[i].value.data();
        const auto g = grads[i].data();
        auto m = m_[i].data();
        auto v = v_[i].data();
        for (std::size_t k = 0; k < p.size(); ++k) {
            m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g[k];
            v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g[k] * g[k];
            const double mhat = m[k] / bc1;
            const double vhat = v[k] / bc2;
            p[k] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * p[k]);
        }
    }
}

double poly_lr(double base, std::size_t step, std::size_t total, double power) {
    if (total == 0) return base;
    const double frac = 1.0 - static_cast<double>(std::min(step, total)) / static_cast<double>(total);
    return base * std::pow(frac, power);
}

ModelParams ema_update(const ModelParams& teacher, const ModelParams& student, double momentum) {
    if (!teacher.same_layout(student)) throw InvalidInput("ema_update: teacher and student layouts differ");
    if (!(momentum >= 0.0 && momentum <= 1.0)) throw InvalidInput("ema_update: momentum must lie in [0, 1]");
    ModelParams out = teacher;
    if (momentum == 1.0) return out;
    if (momentum == 0.0) return student;
    auto& ot = out.tensors();
    for (std::size_t i = 0; i < ot.size(); ++i) {
        auto o = ot[i].value.data();
        const auto s = student[i].data();
        for (std::size_t k = 0; k < o.size(); ++k) {
            const double mixed = momentum * o[k] + (1.0 - momentum) * s[k];
            // Keep the result inside [min, max] of the two endpoints despite rounding.
            o[k] = std::clamp(mixed, std::min(o[k], s[k]), std::max(o[k], s[k]));
        }
    }
    return out;
}

}  // namespace misfit

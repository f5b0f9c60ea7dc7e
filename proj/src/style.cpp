#include "misfit/style.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <spdlog/spdlog.h>

#include "misfit/errors.hpp"
#include "misfit/fourier.hpp"

namespace misfit {

namespace {

struct Layout {
    std::size_t h, w, c;
};

Layout image_layout(const Tensor& image, const char* what) {
    if (image.rank() == 2) return {image.dim(0), image.dim(1), 1};
    if (image.rank() == 3) return {image.dim(0), image.dim(1), image.dim(2)};
    throw InvalidInput(std::string(what) + ": expected H×W or H×W×C, got " + shape_string(image.shape()));
}

Tensor extract_channel(const Tensor& image, const Layout& l, std::size_t c) {
    Tensor ch({l.h, l.w});
    for (std::size_t i = 0; i < l.h * l.w; ++i) ch[i] = image[i * l.c + c];
    return ch;
}

double wrap_phase(double p) {
    // atan2 already lands in [-π, π]; fold the closed end.
    return p <= -std::numbers::pi ? p + 2.0 * std::numbers::pi : p;
}

// Inclusive-exclusive centered range of `count` bins around DC, as offsets.
std::pair<long, long> centered_span(std::size_t count) {
    const long half = static_cast<long>(count / 2);
    return {-half, static_cast<long>(count) - half};
}

}  // namespace

void StyleConfig::validate() const {
    if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("style beta must lie in [0, 1]");
    if (!(value_range.min < value_range.max)) throw ConfigError("style value range requires min < max");
}

SpectralImage decompose(const Tensor& image) {
    const Layout l = image_layout(image, "decompose");
    SpectralImage spec;
    spec.height = l.h;
    spec.width = l.w;
    spec.source_rank = image.rank();
    spec.channels.reserve(l.c);
    for (std::size_t c = 0; c < l.c; ++c) {
        const ComplexGrid f = dft2(extract_channel(image, l, c));
        SpectralChannel ch{Tensor({l.h, l.w}), Tensor({l.h, l.w})};
        for (std::size_t i = 0; i < f.size(); ++i) {
            ch.amplitude[i] = std::hypot(f.re[i], f.im[i]);
            ch.phase[i] = wrap_phase(std::atan2(f.im[i], f.re[i]));
        }
        spec.channels.push_back(std::move(ch));
    }
    return spec;
}

Recomposed recompose(const SpectralImage& spec) {
    const std::size_t c = spec.channels.size();
    if (c == 0) throw InvalidInput("recompose: no channels");
    if (spec.source_rank == 2 && c != 1) throw InvalidInput("recompose: rank-2 image with several channels");
    const Shape shape = spec.source_rank == 2 ? Shape{spec.height, spec.width} : Shape{spec.height, spec.width, c};
    Recomposed out{Tensor(shape), 0.0, false};
    for (std::size_t ci = 0; ci < c; ++ci) {
        const auto& ch = spec.channels[ci];
        ch.amplitude.expect_shape({spec.height, spec.width}, "recompose amplitude");
        ch.phase.expect_shape({spec.height, spec.width}, "recompose phase");
        ComplexGrid f(spec.height, spec.width);
        for (std::size_t i = 0; i < f.size(); ++i) {
            f.re[i] = ch.amplitude[i] * std::cos(ch.phase[i]);
            f.im[i] = ch.amplitude[i] * std::sin(ch.phase[i]);
        }
        const ComplexGrid x = idft2_complex(f);
        out.max_imag_residue = std::max(out.max_imag_residue, max_abs_imag(x));
        for (std::size_t i = 0; i < x.size(); ++i) out.image[i * c + ci] = x.re[i];
    }
    if (out.max_imag_residue > kRecomposeWarnResidue) {
        out.warning = true;
        spdlog::debug("recompose: imaginary residue {:.3e} discarded", out.max_imag_residue);
    }
    return out;
}

BinaryGrid low_freq_window(std::size_t height, std::size_t width, double beta) {
    if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("low_freq_window: beta must lie in [0, 1]");
    BinaryGrid mask(height, width, 0);
    const auto rows = static_cast<std::size_t>(std::lround(beta * static_cast<double>(height)));
    const auto cols = static_cast<std::size_t>(std::lround(beta * static_cast<double>(width)));
    if (rows == 0 || cols == 0) return mask;
    const auto [r0, r1] = centered_span(rows);
    const auto [c0, c1] = centered_span(cols);
    const long h = static_cast<long>(height), w = static_cast<long>(width);
    for (long dr = r0; dr < r1; ++dr) {
        const auto u = static_cast<std::size_t>(((dr % h) + h) % h);
        for (long dc = c0; dc < c1; ++dc) {
            const auto v = static_cast<std::size_t>(((dc % w) + w) % w);
            mask.at(u, v) = 1;
        }
    }
    return mask;
}

AmplitudeProfile target_amplitude_profile(std::span<const Tensor> targets) {
    if (targets.empty()) throw InvalidInput("target_amplitude_profile: empty target list");
    const Shape& shape = targets.front().shape();
    AmplitudeProfile prof;
    for (const auto& t : targets) {
        if (t.shape() != shape) throw InvalidInput("target_amplitude_profile: target images differ in shape");
        const SpectralImage s = decompose(t);
        if (prof.channels.empty()) {
            prof.height = s.height;
            prof.width = s.width;
            for (const auto& ch : s.channels) prof.channels.emplace_back(ch.amplitude.shape(), 0.0);
        }
        for (std::size_t c = 0; c < s.channels.size(); ++c) {
            auto dst = prof.channels[c].data();
            const auto src = s.channels[c].amplitude.data();
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
        }
    }
    prof.sample_count = targets.size();
    const double inv = 1.0 / static_cast<double>(targets.size());
    for (auto& ch : prof.channels) {
        for (auto& v : ch.data()) v *= inv;
    }
    return prof;
}

StylizeResult stylize_unclamped(const Tensor& source, const AmplitudeProfile& profile, double beta) {
    const Layout l = image_layout(source, "stylize");
    if (profile.height != l.h || profile.width != l.w || profile.channels.size() != l.c) {
        throw InvalidInput("stylize: source " + shape_string(source.shape()) +
                           " does not match the amplitude profile");
    }
    const BinaryGrid window = low_freq_window(l.h, l.w, beta);
    if (std::none_of(window.values.begin(), window.values.end(), [](auto b) { return b != 0; })) {
        return {source, false};
    }
    SpectralImage spec = decompose(source);
    for (std::size_t c = 0; c < l.c; ++c) {
        auto& amp = spec.channels[c].amplitude;
        const auto& target = profile.channels[c];
        for (std::size_t i = 0; i < window.size(); ++i) {
            if (window.values[i]) amp[i] = target[i];
        }
    }
    Recomposed r = recompose(spec);
    return {std::move(r.image), r.warning};
}

Tensor stylize(const Tensor& source, const AmplitudeProfile& profile, const StyleConfig& cfg) {
    cfg.validate();
    Tensor out = stylize_unclamped(source, profile, cfg.beta).image;
    for (auto& v : out.data()) v = std::clamp(v, cfg.value_range.min, cfg.value_range.max);
    return out;
}

}  // namespace misfit

#include "misfit/toy.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "misfit/errors.hpp"
#include "misfit/image_io.hpp"
#include "misfit/rng.hpp"
#include "parallel.hpp"

namespace misfit {

namespace {

struct Shape {
    ToyClass cls;
    double disparity;
    double shade;
    // Bounding box, inclusive-exclusive.
    double x0, x1, y0, y1;
};

bool inside(const Shape& s, double x, double y) {
    if (s.cls != ToyClass::ball) return x >= s.x0 && x < s.x1 && y >= s.y0 && y < s.y1;
    const double cx = 0.5 * (s.x0 + s.x1), cy = 0.5 * (s.y0 + s.y1), r = 0.5 * (s.x1 - s.x0);
    return (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r;
}

Rgb rotate_hue(const Rgb& c, double degrees) {
    // Rotation about the gray axis (1,1,1)/sqrt(3).
    const double a = degrees * std::numbers::pi / 180.0;
    const double cosa = std::cos(a), sina = std::sin(a);
    const double k = (1.0 - cosa) / 3.0, s = sina / std::sqrt(3.0);
    const double m0 = cosa + k, m1 = k - s, m2 = k + s;
    return {m0 * c[0] + m1 * c[1] + m2 * c[2], m2 * c[0] + m0 * c[1] + m1 * c[2],
            m1 * c[0] + m2 * c[1] + m0 * c[2]};
}

double quantize_disparity(double d) {
    return std::clamp(std::round(d * kDisparityScale) / kDisparityScale, 0.0, kMaxDisparity);
}

bool distinct(const std::array<Rgb, kToyClasses>& p) {
    for (std::size_t i = 0; i < p.size(); ++i) {
        for (std::size_t j = i + 1; j < p.size(); ++j) {
            if (p[i] == p[j]) return false;
        }
    }
    return true;
}

std::uint64_t domain_tag(ToyDomain d) { return d == ToyDomain::source ? 0x5eedULL : 0x7a59ULL; }

std::vector<Shape> place_objects(const ToySceneSpec& spec, Rng& rng, double horizon) {
    const double n = static_cast<double>(spec.image_size);
    const auto count = spec.min_objects + rng.below(spec.max_objects - spec.min_objects + 1);
    std::vector<Shape> shapes;
    for (std::size_t i = 0; i < count; ++i) {
        Shape s{};
        s.cls = static_cast<ToyClass>(2 + rng.below(3));
        const auto [dlo, dhi] = spec.disparity[static_cast<std::size_t>(s.cls)];
        s.disparity = rng.uniform(dlo, dhi);
        s.shade = 1.0 + rng.uniform(-spec.shade_jitter, spec.shade_jitter);
        double w = 0.0, h = 0.0;
        switch (s.cls) {
            case ToyClass::box:
                w = rng.uniform(0.14, 0.3) * n;
                h = rng.uniform(0.1, 0.25) * n;
                break;
            case ToyClass::ball:
                w = h = rng.uniform(0.12, 0.25) * n;
                break;
            default:
                w = rng.uniform(0.07, 0.11) * n;
                h = rng.uniform(0.3, 0.5) * n;
                break;
        }
        const double base = rng.uniform(horizon + 2.0, n);
        s.x0 = rng.uniform(-0.25 * w, n - 0.75 * w);
        s.x1 = s.x0 + w;
        s.y1 = base;
        s.y0 = base - h;
        shapes.push_back(s);
    }
    // Nearer objects (larger disparity) are painted last.
    std::stable_sort(shapes.begin(), shapes.end(),
                     [](const Shape& a, const Shape& b) { return a.disparity < b.disparity; });
    return shapes;
}

}  // namespace

void ToySceneSpec::validate() const {
    if (image_size == 0) throw ConfigError("toy: image_size must be positive");
    if (min_objects > max_objects) throw ConfigError("toy: min_objects exceeds max_objects");
    if (!(hole_probability >= 0.0 && hole_probability <= 1.0)) {
        throw ConfigError("toy: hole_probability must lie in [0, 1]");
    }
    if (!(shade_jitter >= 0.0 && shade_jitter < 1.0)) throw ConfigError("toy: shade_jitter must lie in [0, 1)");
    if (!(texture_amplitude >= 0.0) || !(color_noise_sigma >= 0.0) || !(disparity_noise_sigma >= 0.0)) {
        throw ConfigError("toy: noise amplitudes must be non-negative");
    }
    for (const auto& [lo, hi] : disparity) {
        if (!(lo > 0.0 && lo <= hi && hi <= kMaxDisparity)) {
            throw ConfigError("toy: disparity ranges must satisfy 0 < lo <= hi <= max");
        }
    }
    if (!distinct(palette) || !distinct(target_palette())) throw ConfigError("toy: palette colors must be distinct");
}

std::array<Rgb, kToyClasses> ToySceneSpec::target_palette() const {
    std::array<Rgb, kToyClasses> out{};
    for (std::size_t c = 0; c < kToyClasses; ++c) out[c] = rotate_hue(palette[c], hue_shift_deg);
    return out;
}

ImageSample generate_scene(const ToySceneSpec& spec, ToyDomain domain, std::size_t index) {
    Rng rng(derive_seed(derive_seed(spec.seed, domain_tag(domain)), index));
    const std::size_t n = spec.image_size;
    const bool target = domain == ToyDomain::target;
    const auto palette = target ? spec.target_palette() : spec.palette;

    const double horizon = rng.uniform(0.35, 0.55) * static_cast<double>(n);
    const double sky_disparity = rng.uniform(spec.disparity[0].first, spec.disparity[0].second);
    const auto shapes = place_objects(spec, rng, horizon);
    // Per-image texture: an oriented grating.
    const double fx = rng.uniform(0.2, 0.45), fy = rng.uniform(0.2, 0.45);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);

    ImageSample s{Tensor({n, n, 3}), Tensor({n, n}), BinaryGrid(n, n, 1), LabelGrid(n, n, 0)};
    const auto [glo, ghi] = spec.disparity[static_cast<std::size_t>(ToyClass::ground)];
    for (std::size_t y = 0; y < n; ++y) {
        for (std::size_t x = 0; x < n; ++x) {
            const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
            ToyClass cls = ToyClass::background;
            double disparity = sky_disparity, shade = 1.0;
            if (py >= horizon) {
                cls = ToyClass::ground;
                disparity = glo + (ghi - glo) * (py - horizon) / (static_cast<double>(n) - horizon);
            }
            for (const auto& sh : shapes) {
                if (inside(sh, px, py)) {
                    cls = sh.cls;
                    disparity = sh.disparity;
                    shade = sh.shade;
                }
            }
            const auto c = static_cast<std::size_t>(cls);
            s.label->at(y, x) = static_cast<int>(c);
            double texture = 0.0;
            if (target) {
                texture = spec.texture_amplitude *
                          std::sin(2.0 * std::numbers::pi * (fx * px + fy * py) + phase + static_cast<double>(c));
            }
            for (std::size_t k = 0; k < 3; ++k) {
                double v = palette[c][k] * shade + texture;
                if (target) v += spec.color_noise_sigma * rng.normal();
                s.rgb.at(y, x, k) = std::clamp(std::round(v), 0.0, 255.0);
            }
            if (target) {
                disparity = std::max(disparity + spec.disparity_noise_sigma * rng.normal(), 1.0 / kDisparityScale);
                if (rng.bernoulli(spec.hole_probability)) disparity = 0.0;
            }
            disparity = quantize_disparity(disparity);
            s.disparity.at(y, x) = disparity;
            s.valid.at(y, x) = disparity > 0.0 ? 1 : 0;
        }
    }
    return s;
}

SampleStore generate_split(const ToySceneSpec& spec, ToyDomain domain, std::size_t count) {
    spec.validate();
    std::vector<ImageSample> samples(count);
    detail::parallel_for(count, [&](std::size_t i) { samples[i] = generate_scene(spec, domain, i); });
    return SampleStore(std::move(samples));
}

ToyManifests gen_toy(const ToySceneSpec& spec, std::size_t n_source, std::size_t n_target,
                     const std::filesystem::path& out) {
    const auto source = generate_split(spec, ToyDomain::source, n_source);
    const auto target = generate_split(spec, ToyDomain::target, n_target);
    return {save_dataset(out / "source", "source", source), save_dataset(out / "target", "target", target)};
}

}  // namespace misfit

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <utility>

#include "misfit/dataset.hpp"
#include "misfit/sample.hpp"

namespace misfit {

enum class ToyClass : int { background = 0, ground = 1, box = 2, ball = 3, pole = 4 };
inline constexpr std::size_t kToyClasses = 5;

using Rgb = std::array<double, 3>;

/// Synthetic two-domain RGB-D scene generator. The source domain renders
/// flat-colored shapes with exact disparity; the target domain rotates the
/// palette hue, adds texture and color noise, perturbs disparity and punches
/// holes into it.
struct ToySceneSpec {
    std::size_t image_size = 64;
    std::array<Rgb, kToyClasses> palette{{
        {110.0, 160.0, 225.0},  // background
        {125.0, 105.0, 75.0},   // ground
        {205.0, 60.0, 50.0},    // box
        {60.0, 185.0, 70.0},    // ball
        {225.0, 215.0, 60.0},   // pole
    }};
    /// Disparity range per class; ground is a ramp from .first at the horizon to .second at the bottom row.
    std::array<std::pair<double, double>, kToyClasses> disparity{{
        {1.0, 3.0},
        {6.0, 48.0},
        {14.0, 30.0},
        {24.0, 44.0},
        {36.0, 64.0},
    }};
    std::size_t min_objects = 2;
    std::size_t max_objects = 4;
    /// Per-object brightness jitter applied in both domains.
    double shade_jitter = 0.12;
    double hue_shift_deg = 100.0;
    double texture_amplitude = 35.0;
    double color_noise_sigma = 10.0;
    double hole_probability = 0.3;
    double disparity_noise_sigma = 1.5;
    std::uint64_t seed = 0;

    void validate() const;
    /// Palette used by the target domain.
    std::array<Rgb, kToyClasses> target_palette() const;
};

enum class ToyDomain { source, target };

/// Frame `index` of a domain; depends only on (spec, domain, index).
ImageSample generate_scene(const ToySceneSpec& spec, ToyDomain domain, std::size_t index);
SampleStore generate_split(const ToySceneSpec& spec, ToyDomain domain, std::size_t count);

struct ToyManifests {
    DatasetManifest source;
    DatasetManifest target;
};

/// Writes out/source and out/target splits, each with rasters and manifest.json.
ToyManifests gen_toy(const ToySceneSpec& spec, std::size_t n_source, std::size_t n_target,
                     const std::filesystem::path& out);

}  // namespace misfit

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "misfit/grid.hpp"
#include "misfit/tensor.hpp"

namespace misfit {

struct SpectralChannel {
    Tensor amplitude;  // H×W, non-negative
    Tensor phase;      // H×W, in (-π, π]
};

/// Amplitude/phase decomposition of an H×W (rank 2) or H×W×C (rank 3) image.
struct SpectralImage {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t source_rank = 3;
    std::vector<SpectralChannel> channels;
};

struct ValueRange {
    double min = 0.0;
    double max = 255.0;
};

struct StyleConfig {
    double beta = 0.0;
    ValueRange value_range;

    void validate() const;
};

/// Per-channel mean amplitude over a set of target images.
struct AmplitudeProfile {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<Tensor> channels;
    std::size_t sample_count = 0;
};

SpectralImage decompose(const Tensor& image);

struct Recomposed {
    Tensor image;
    double max_imag_residue = 0.0;
    bool warning = false;  // residue above kRecomposeWarnResidue
};

inline constexpr double kRecomposeWarnResidue = 1e-4;

/// Inverse of decompose. A non-Hermitian amplitude edit leaves an imaginary
/// residue; the real part is returned and the residue is reported.
Recomposed recompose(const SpectralImage& spec);

/// Low-frequency window in unshifted DFT indices: a rectangle of
/// round(beta·H) × round(beta·W) bins placed around DC in centered coordinates.
BinaryGrid low_freq_window(std::size_t height, std::size_t width, double beta);

AmplitudeProfile target_amplitude_profile(std::span<const Tensor> targets);

struct StylizeResult {
    Tensor image;
    bool warning = false;
};

/// Amplitude swap without the final clamp.
StylizeResult stylize_unclamped(const Tensor& source, const AmplitudeProfile& profile, double beta);

/// Amplitude swap followed by clamping to cfg.value_range.
Tensor stylize(const Tensor& source, const AmplitudeProfile& profile, const StyleConfig& cfg);

}  // namespace misfit

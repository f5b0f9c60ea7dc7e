#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "misfit/grid.hpp"
#include "misfit/tensor.hpp"

namespace misfit {

// Rasters are binary PNM: P6 for 8-bit colour, P5 with maxval 255 for 8-bit
// labels and P5 with maxval 65535 (big-endian samples) for disparity.

struct Raster8 {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t channels = 1;  // 1 or 3
    std::vector<std::uint8_t> data;

    friend bool operator==(const Raster8&, const Raster8&) = default;
};

struct Raster16 {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint16_t> data;

    friend bool operator==(const Raster16&, const Raster16&) = default;
};

/// Stored disparity = round(disparity · 256); 0 marks a missing measurement.
inline constexpr double kDisparityScale = 256.0;
inline constexpr double kMaxDisparity = 65535.0 / kDisparityScale;

std::vector<std::uint8_t> encode_raster(const Raster8& r);
Raster8 decode_raster(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_raster16(const Raster16& r);
Raster16 decode_raster16(std::span<const std::uint8_t> bytes);

void write_raster(const std::filesystem::path& path, const Raster8& r);
Raster8 read_raster(const std::filesystem::path& path);
void write_raster16(const std::filesystem::path& path, const Raster16& r);
Raster16 read_raster16(const std::filesystem::path& path);

Raster8 rgb_to_raster(const Tensor& rgb);
Tensor raster_to_rgb(const Raster8& r);
Raster16 disparity_to_raster(const Tensor& disparity);
Tensor raster_to_disparity(const Raster16& r);
BinaryGrid raster_validity(const Raster16& r);
Raster8 labels_to_raster(const LabelGrid& labels);
LabelGrid raster_to_labels(const Raster8& r);

}  // namespace misfit

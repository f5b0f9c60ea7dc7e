#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "misfit/encoder.hpp"

namespace misfit {

/// Checkpoint container, all integers and doubles little-endian:
///   "MSFT" | u32 version | encoder config | u32 tensor count |
///   per tensor: u32 name length, name bytes, u32 rank, u64 extents, f64 values
/// Tensors appear in ModelParams declaration order.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const ModelParams& params);
ModelParams decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace misfit

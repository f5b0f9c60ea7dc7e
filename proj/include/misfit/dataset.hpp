#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "misfit/sample.hpp"

namespace misfit {

struct ManifestEntry {
    std::string rgb;
    std::string disparity;
    std::string label;  // empty when the split ships without labels
    std::uint32_t rgb_crc = 0;
    std::uint32_t disparity_crc = 0;
    std::uint32_t label_crc = 0;
};

/// `manifest.json` next to the rasters of one split. Checksums are CRC-32 of the file bytes.
struct DatasetManifest {
    std::filesystem::path root;
    std::string split;
    std::vector<ManifestEntry> entries;
};

std::uint32_t checksum_file(const std::filesystem::path& path);

DatasetManifest save_dataset(const std::filesystem::path& dir, const std::string& split, const SampleStore& store);
void write_manifest(const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& dir);
/// Loads every frame listed in dir/manifest.json, verifying checksums.
SampleStore load_dataset(const std::filesystem::path& dir);

}  // namespace misfit

#pragma once

#include <cstdint>
#include <filesystem>

#include "dcn/network.hpp"

namespace dcn {

inline constexpr std::uint32_t kModelFormatVersion = 1;

struct ModelMetadata {
  std::uint64_t seed = 0;
  std::uint64_t iterations = 0;

  friend bool operator==(const ModelMetadata&, const ModelMetadata&) = default;
};

struct LoadedModel {
  Network network;
  ModelMetadata meta;
};

/// Little-endian versioned binary layout, documented in docs/model_format.md.
void save_model(const Network& network, const ModelMetadata& meta, const std::filesystem::path& path);

/// Throws UnsupportedVersion for unknown versions and IoError for damaged files.
LoadedModel load_model(const std::filesystem::path& path);

}  // namespace dcn

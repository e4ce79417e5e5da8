#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "dcn/gaussian.hpp"
#include "dcn/grid.hpp"
#include "dcn/network.hpp"

namespace dcn {

/// A leaf Gaussian of a mean reconstruction, in input-pixel units.
struct ReconGaussian {
  Vec2 pos;          // relative to the receptive-field center
  double var = 0.0;  // sum of sigma^2 along the path
  double weight = 0.0;  // product of |w| along the path
  int sign = 1;         // sign of the first-layer component weight
  std::size_t depth = 0;  // number of compositional layers traversed
};

/// Recursively projects feature `feature` of compositional layer `layer`
/// (1-based among compositional layers) down to pixel space. Above the
/// first layer only positive-weight components are followed; the first
/// layer keeps both signs. Pooling maps a position x to stride * x +
/// (window - 1) / 2 in its input.
std::vector<ReconGaussian> mean_reconstruct(const Network& network, std::size_t layer, std::size_t feature);

struct DistributionMap {
  Grid2 pos;
  Grid2 neg;
};

/// Sums weight * exp(-|p - (origin + pos)|^2 / (2 var)) per sign.
DistributionMap render_distribution_maps(std::span<const ReconGaussian> recons, std::size_t width,
                                         std::size_t height, Vec2 origin = {});

struct GraphCutResult {
  double flow = 0.0;
  /// 1 where the pixel ends on the sink (positive) side.
  std::vector<std::uint8_t> sink_side;
  /// Sink-side pixels with a 4-neighbor across the cut, valued by the
  /// largest |D(p) - D(q)| over those neighbors; 0 elsewhere.
  Grid2 boundary;
};

/// Min-cut on the 4-connected pixel grid: source capacity neg(p), sink
/// capacity pos(p), neighbor capacity (D(p) - D(q))^2 with D = pos - neg.
GraphCutResult graphcut_boundary(const DistributionMap& maps);

Grid2 upscale_nearest(const Grid2& grid, std::size_t factor);

/// Binary PGM (P5), min-max scaled to 0..255; a constant grid is written as 128.
void write_pgm(const Grid2& grid, const std::filesystem::path& path);

struct PgmImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;
};

PgmImage read_pgm(const std::filesystem::path& path);

inline constexpr std::size_t kVizUpscale = 4;

struct FeatureVisualization {
  std::vector<ReconGaussian> recons;
  DistributionMap maps;
  GraphCutResult cut;
  std::filesystem::path blobs_file;
  std::filesystem::path boundary_file;
};

/// Full pipeline for one feature: reconstruct, render at the network input
/// resolution (receptive-field center at the image center), normalize by
/// the larger map peak, cut, upscale and write
/// layer{L}_feature{F}_{blobs|boundary}.pgm into `dir`.
FeatureVisualization visualize_feature(const Network& network, std::size_t layer, std::size_t feature,
                                       const std::filesystem::path& dir);

}  // namespace dcn

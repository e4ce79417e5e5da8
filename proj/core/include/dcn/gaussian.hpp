#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dcn/grid.hpp"
#include "dcn/tensor.hpp"

namespace dcn {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Vec2&, const Vec2&) = default;
};

/// Weighted, isotropic, discretely normalized 2D Gaussian living inside a
/// kernel window. `mean` is in tap coordinates: (0, 0) is the top-left tap,
/// x runs along columns, y along rows.
struct GaussianComponent {
  double weight = 0.0;
  Vec2 mean;
  double sigma = 1.0;

  friend bool operator==(const GaussianComponent&, const GaussianComponent&) = default;
};

/// Lower bound on sigma and distance of the mean from the tap bounding box.
inline constexpr double kSigmaFloor = 0.5;
inline constexpr double kMeanMargin = 1.5;

struct KernelGeometry {
  std::size_t width = 0;
  std::size_t height = 0;

  /// Throws InvalidInput unless both dims leave a non-empty mean box (>= 4).
  static KernelGeometry checked(std::size_t width, std::size_t height);

  double mean_lo() const { return kMeanMargin; }
  double mean_hi_x() const { return static_cast<double>(width) - 1.0 - kMeanMargin; }
  double mean_hi_y() const { return static_cast<double>(height) - 1.0 - kMeanMargin; }
  Vec2 center() const { return {(static_cast<double>(width) - 1.0) / 2.0, (static_cast<double>(height) - 1.0) / 2.0}; }

  friend bool operator==(const KernelGeometry&, const KernelGeometry&) = default;
};

/// True when sigma and mean satisfy the window constraints for `geom`.
bool satisfies_constraints(const GaussianComponent& comp, KernelGeometry geom);

/// exp(-|x - mu|^2 / (2 sigma^2))
double g_unnorm(Vec2 x, Vec2 mu, double sigma);

/// Sum of g_unnorm over all integer taps of the kernel window.
double normalizer(KernelGeometry geom, Vec2 mu, double sigma);

/// w * g(x) / N over the window; rows = height, cols = width.
Grid2 materialize(const GaussianComponent& comp, KernelGeometry geom);

struct MeanDerivative {
  Grid2 d_x;
  Grid2 d_y;
};

/// Derivatives of the materialized kernel with respect to the mean
/// coordinates (quotient rule through the discrete normalizer).
MeanDerivative dG_dmu(const GaussianComponent& comp, KernelGeometry geom);
Grid2 dG_dsigma(const GaussianComponent& comp, KernelGeometry geom);

struct SeparableFactors {
  std::vector<double> row;     // length width, unnormalized g along x
  std::vector<double> column;  // length height, unnormalized g along y
  double scale = 0.0;          // w / N
};

SeparableFactors separable_factors(const GaussianComponent& comp, KernelGeometry geom);

/// Each (feature, channel) kernel reversed along both spatial axes.
DenseFilterBank rotate180(const DenseFilterBank& bank);

}  // namespace dcn

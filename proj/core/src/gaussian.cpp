#include "dcn/gaussian.hpp"

#include <cmath>
#include <string>

#include "dcn/error.hpp"

namespace dcn {
namespace {

struct AxisSums {
  std::vector<double> g;  // per tap
  double sum = 0.0;       // sum of g
  double d_mean = 0.0;    // d sum / d mean
  double d_sigma = 0.0;   // d sum / d sigma
};

// One-dimensional factor of the Gaussian along an axis of `taps` taps.
AxisSums axis_sums(std::size_t taps, double mean, double sigma) {
  AxisSums a;
  a.g.resize(taps);
  const double inv_var = 1.0 / (sigma * sigma);
  for (std::size_t t = 0; t < taps; ++t) {
    const double d = static_cast<double>(t) - mean;
    const double g = std::exp(-0.5 * d * d * inv_var);
    a.g[t] = g;
    a.sum += g;
    a.d_mean += g * d * inv_var;
    a.d_sigma += g * d * d * inv_var / sigma;
  }
  return a;
}

}  // namespace

KernelGeometry KernelGeometry::checked(std::size_t width, std::size_t height) {
  if (width < 4 || height < 4) {
    throw InvalidInput("kernel geometry " + std::to_string(width) + "x" + std::to_string(height) +
                       " leaves no room for component means (need >= 4x4)");
  }
  return {width, height};
}

bool satisfies_constraints(const GaussianComponent& comp, KernelGeometry geom) {
  return comp.sigma > kSigmaFloor && comp.mean.x >= geom.mean_lo() && comp.mean.x <= geom.mean_hi_x() &&
         comp.mean.y >= geom.mean_lo() && comp.mean.y <= geom.mean_hi_y() && std::isfinite(comp.weight);
}

double g_unnorm(Vec2 x, Vec2 mu, double sigma) {
  const double dx = x.x - mu.x;
  const double dy = x.y - mu.y;
  return std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
}

double normalizer(KernelGeometry geom, Vec2 mu, double sigma) {
  // The tap grid is a product grid, so the 2D sum factorizes.
  return axis_sums(geom.width, mu.x, sigma).sum * axis_sums(geom.height, mu.y, sigma).sum;
}

Grid2 materialize(const GaussianComponent& comp, KernelGeometry geom) {
  const AxisSums ax = axis_sums(geom.width, comp.mean.x, comp.sigma);
  const AxisSums ay = axis_sums(geom.height, comp.mean.y, comp.sigma);
  const double scale = comp.weight / (ax.sum * ay.sum);
  Grid2 k(geom.height, geom.width);
  for (std::size_t y = 0; y < geom.height; ++y) {
    for (std::size_t x = 0; x < geom.width; ++x) k(y, x) = scale * ax.g[x] * ay.g[y];
  }
  return k;
}

MeanDerivative dG_dmu(const GaussianComponent& comp, KernelGeometry geom) {
  const AxisSums ax = axis_sums(geom.width, comp.mean.x, comp.sigma);
  const AxisSums ay = axis_sums(geom.height, comp.mean.y, comp.sigma);
  const double n = ax.sum * ay.sum;
  const double dn_dx = ax.d_mean * ay.sum;
  const double dn_dy = ax.sum * ay.d_mean;
  const double inv_var = 1.0 / (comp.sigma * comp.sigma);
  MeanDerivative d{Grid2(geom.height, geom.width), Grid2(geom.height, geom.width)};
  for (std::size_t y = 0; y < geom.height; ++y) {
    for (std::size_t x = 0; x < geom.width; ++x) {
      const double g = ax.g[x] * ay.g[y];
      const double dg_dx = g * (static_cast<double>(x) - comp.mean.x) * inv_var;
      const double dg_dy = g * (static_cast<double>(y) - comp.mean.y) * inv_var;
      d.d_x(y, x) = comp.weight * (n * dg_dx - g * dn_dx) / (n * n);
      d.d_y(y, x) = comp.weight * (n * dg_dy - g * dn_dy) / (n * n);
    }
  }
  return d;
}

Grid2 dG_dsigma(const GaussianComponent& comp, KernelGeometry geom) {
  const AxisSums ax = axis_sums(geom.width, comp.mean.x, comp.sigma);
  const AxisSums ay = axis_sums(geom.height, comp.mean.y, comp.sigma);
  const double n = ax.sum * ay.sum;
  const double dn = ax.d_sigma * ay.sum + ax.sum * ay.d_sigma;
  const double inv_s3 = 1.0 / (comp.sigma * comp.sigma * comp.sigma);
  Grid2 d(geom.height, geom.width);
  for (std::size_t y = 0; y < geom.height; ++y) {
    for (std::size_t x = 0; x < geom.width; ++x) {
      const double g = ax.g[x] * ay.g[y];
      const double rx = static_cast<double>(x) - comp.mean.x;
      const double ry = static_cast<double>(y) - comp.mean.y;
      const double dg = g * (rx * rx + ry * ry) * inv_s3;
      d(y, x) = comp.weight * (n * dg - g * dn) / (n * n);
    }
  }
  return d;
}

SeparableFactors separable_factors(const GaussianComponent& comp, KernelGeometry geom) {
  AxisSums ax = axis_sums(geom.width, comp.mean.x, comp.sigma);
  AxisSums ay = axis_sums(geom.height, comp.mean.y, comp.sigma);
  return {std::move(ax.g), std::move(ay.g), comp.weight / (ax.sum * ay.sum)};
}

DenseFilterBank rotate180(const DenseFilterBank& bank) {
  bank.validate();
  DenseFilterBank out = bank;
  for (std::size_t f = 0; f < bank.features; ++f) {
    for (std::size_t s = 0; s < bank.channels; ++s) {
      for (std::size_t y = 0; y < bank.kh; ++y) {
        for (std::size_t x = 0; x < bank.kw; ++x) {
          out.at(f, s, y, x) = bank.at(f, s, bank.kh - 1 - y, bank.kw - 1 - x);
        }
      }
    }
  }
  return out;
}

}  // namespace dcn

#include "dcn/comp_layer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dcn/error.hpp"

namespace dcn {

CompFilterBank::CompFilterBank(std::size_t features, std::size_t channels, KernelGeometry geom,
                               std::size_t components_per_group)
    : features_(features), channels_(channels), geom_(KernelGeometry::checked(geom.width, geom.height)),
      bias_(features, 0.0) {
  if (components_per_group < 1) throw InvalidInput("comp bank: need at least one component per group");
  components_.assign(features * channels * components_per_group, GaussianComponent{0.0, geom_.center(), 1.0});
  offsets_.resize(features * channels + 1);
  for (std::size_t g = 0; g <= features * channels; ++g) offsets_[g] = g * components_per_group;
}

CompFilterBank::CompFilterBank(std::size_t features, std::size_t channels, KernelGeometry geom,
                               std::vector<std::vector<GaussianComponent>> groups, std::vector<double> bias)
    : features_(features), channels_(channels), geom_(KernelGeometry::checked(geom.width, geom.height)),
      bias_(std::move(bias)) {
  if (groups.size() != features * channels) throw InvalidInput("comp bank: group count != features * channels");
  if (bias_.size() != features) throw InvalidInput("comp bank: bias count != features");
  for (auto& g : groups) {
    components_.insert(components_.end(), g.begin(), g.end());
    offsets_.push_back(components_.size());
  }
}

std::vector<std::vector<GaussianComponent>> CompFilterBank::groups() const {
  std::vector<std::vector<GaussianComponent>> out;
  out.reserve(group_count());
  for (std::size_t g = 0; g < group_count(); ++g) {
    out.emplace_back(components_.begin() + static_cast<std::ptrdiff_t>(offsets_[g]),
                     components_.begin() + static_cast<std::ptrdiff_t>(offsets_[g + 1]));
  }
  return out;
}

void CompFilterBank::validate() const {
  if (bias_.size() != features_) throw InvalidInput("comp bank: bias count != features");
  if (offsets_.size() != group_count() + 1 || offsets_.back() != components_.size()) {
    throw InvalidInput("comp bank: group offsets inconsistent");
  }
  for (std::size_t g = 0; g < group_count(); ++g) {
    if (offsets_[g + 1] <= offsets_[g]) throw InvalidInput("comp bank: group " + std::to_string(g) + " is empty");
  }
  for (std::size_t i = 0; i < components_.size(); ++i) {
    if (!satisfies_constraints(components_[i], geom_)) {
      const auto& c = components_[i];
      throw InvalidInput("comp bank: component " + std::to_string(i) + " violates constraints (mean " +
                         std::to_string(c.mean.x) + "," + std::to_string(c.mean.y) + ", sigma " +
                         std::to_string(c.sigma) + ")");
    }
  }
}

CompFilterBank init_comp_bank(std::size_t features, std::size_t channels, KernelGeometry geom, std::size_t grid_x,
                              std::size_t grid_y, std::mt19937_64& rng, double weight_std) {
  if (grid_x < 1 || grid_y < 1) throw InvalidInput("component grid must be at least 1x1");
  CompFilterBank bank(features, channels, geom, grid_x * grid_y);
  const double step_x = (bank.geometry().mean_hi_x() - bank.geometry().mean_lo()) / static_cast<double>(grid_x);
  const double step_y = (bank.geometry().mean_hi_y() - bank.geometry().mean_lo()) / static_cast<double>(grid_y);
  const double sigma = std::max(0.5 * std::min(step_x, step_y), kSigmaFloor + kSigmaMargin);
  std::normal_distribution<double> weight(0.0, weight_std);
  for (std::size_t f = 0; f < features; ++f) {
    for (std::size_t s = 0; s < channels; ++s) {
      auto group = bank.group(f, s);
      for (std::size_t j = 0; j < grid_y; ++j) {
        for (std::size_t i = 0; i < grid_x; ++i) {
          auto& c = group[j * grid_x + i];
          c.mean = {kMeanMargin + (static_cast<double>(i) + 0.5) * step_x,
                    kMeanMargin + (static_cast<double>(j) + 0.5) * step_y};
          c.sigma = sigma;
          c.weight = weight(rng);
        }
      }
    }
  }
  return bank;
}

DenseFilterBank materialize_bank(const CompFilterBank& bank) {
  const KernelGeometry geom = bank.geometry();
  DenseFilterBank dense(bank.features(), bank.channels(), geom.height, geom.width);
  for (std::size_t f = 0; f < bank.features(); ++f) {
    for (std::size_t s = 0; s < bank.channels(); ++s) {
      auto slice = dense.slice(f, s);
      for (const auto& comp : bank.group(f, s)) {
        const Grid2 k = materialize(comp, geom);
        auto v = k.values();
        for (std::size_t i = 0; i < slice.size(); ++i) slice[i] += v[i];
      }
    }
  }
  dense.bias = bank.bias();
  return dense;
}

Tensor4 comp_forward(const Tensor4& input, const CompFilterBank& bank) {
  return conv2d_valid(input, materialize_bank(bank));
}

Tensor4 comp_forward_separable(const Tensor4& input, const CompFilterBank& bank) {
  const KernelGeometry geom = bank.geometry();
  if (input.c() != bank.channels()) throw InvalidInput("comp_forward_separable: channel mismatch");
  if (input.h() < geom.height || input.w() < geom.width) {
    throw InvalidInput("comp_forward_separable: input smaller than kernel");
  }
  const std::size_t h = input.h();
  const std::size_t w = input.w();
  const std::size_t oh = h - geom.height + 1;
  const std::size_t ow = w - geom.width + 1;
  const std::size_t kw = geom.width;
  const std::size_t kh = geom.height;

  std::vector<SeparableFactors> factors;
  factors.reserve(bank.component_count());
  for (const auto& comp : bank.components()) {
    factors.push_back(separable_factors(comp, geom));
    // Fold the scale into the column kernel.
    for (double& v : factors.back().column) v *= factors.back().scale;
  }

  Tensor4 out(input.n(), bank.features(), oh, ow);
  std::vector<double> rows(h * ow);
  const auto offsets = bank.offsets();
  for (std::size_t n = 0; n < input.n(); ++n) {
    for (std::size_t f = 0; f < bank.features(); ++f) {
      double* o = out.plane(n, f).data();
      std::fill(o, o + oh * ow, bank.bias()[f]);
      for (std::size_t s = 0; s < bank.channels(); ++s) {
        const double* src = input.plane(n, s).data();
        const std::size_t g = f * bank.channels() + s;
        for (std::size_t k = offsets[g]; k < offsets[g + 1]; ++k) {
          const double* rk = factors[k].row.data();
          const double* ck = factors[k].column.data();
          std::fill(rows.begin(), rows.end(), 0.0);
          for (std::size_t y = 0; y < h; ++y) {
            double* t = rows.data() + y * ow;
            const double* xr = src + y * w;
            for (std::size_t dx = 0; dx < kw; ++dx) {
              const double a = rk[dx];
              const double* xs = xr + dx;
              for (std::size_t x = 0; x < ow; ++x) t[x] += a * xs[x];
            }
          }
          for (std::size_t y = 0; y < oh; ++y) {
            double* orow = o + y * ow;
            for (std::size_t dy = 0; dy < kh; ++dy) {
              const double a = ck[dy];
              const double* t = rows.data() + (y + dy) * ow;
              for (std::size_t x = 0; x < ow; ++x) orow[x] += a * t[x];
            }
          }
        }
      }
    }
  }
  return out;
}

CompLayerGrads comp_param_grads_from_dense(const DenseFilterBank& dense_grad, const CompFilterBank& bank) {
  const KernelGeometry geom = bank.geometry();
  if (dense_grad.features != bank.features() || dense_grad.channels != bank.channels() ||
      dense_grad.kh != geom.height || dense_grad.kw != geom.width) {
    throw InvalidInput("comp grads: dense gradient does not match bank");
  }
  const std::size_t count = bank.component_count();
  CompLayerGrads grads{std::vector<double>(count), std::vector<double>(count), std::vector<double>(count),
                       std::vector<double>(count), dense_grad.bias};
  const auto offsets = bank.offsets();
  const auto comps = bank.components();
  auto dot = [](std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
  };
  for (std::size_t f = 0; f < bank.features(); ++f) {
    for (std::size_t s = 0; s < bank.channels(); ++s) {
      const auto tap_grad = dense_grad.slice(f, s);
      const std::size_t g = f * bank.channels() + s;
      for (std::size_t k = offsets[g]; k < offsets[g + 1]; ++k) {
        GaussianComponent unit = comps[k];
        unit.weight = 1.0;
        grads.d_weight[k] = dot(tap_grad, materialize(unit, geom).values());
        const MeanDerivative dm = dG_dmu(comps[k], geom);
        grads.d_mean_x[k] = dot(tap_grad, dm.d_x.values());
        grads.d_mean_y[k] = dot(tap_grad, dm.d_y.values());
        grads.d_sigma[k] = dot(tap_grad, dG_dsigma(comps[k], geom).values());
      }
    }
  }
  return grads;
}

CompLayerGrads comp_backward_params(const Tensor4& input, const Tensor4& grad_out, const CompFilterBank& bank) {
  const ConvGrads dense = conv2d_backward(input, grad_out, materialize_bank(bank), false);
  return comp_param_grads_from_dense(dense.bank, bank);
}

Tensor4 comp_backward_input(const Tensor4& grad_out, const CompFilterBank& bank) {
  return conv2d_backward_input(grad_out, materialize_bank(bank));
}

void project_constraints_in_place(CompFilterBank& bank) {
  const KernelGeometry geom = bank.geometry();
  for (auto& c : bank.components()) {
    c.mean.x = std::clamp(c.mean.x, geom.mean_lo(), geom.mean_hi_x());
    c.mean.y = std::clamp(c.mean.y, geom.mean_lo(), geom.mean_hi_y());
    c.sigma = std::max(c.sigma, kSigmaFloor + kSigmaMargin);
  }
}

CompFilterBank project_constraints(CompFilterBank bank) {
  project_constraints_in_place(bank);
  return bank;
}

DenseFilterBank init_dense_bank(std::size_t features, std::size_t channels, std::size_t kh, std::size_t kw,
                                std::mt19937_64& rng) {
  DenseFilterBank bank(features, channels, kh, kw);
  std::normal_distribution<double> weight(0.0, 1.0 / std::sqrt(static_cast<double>(channels * kh * kw)));
  for (double& v : bank.weights) v = weight(rng);
  return bank;
}

}  // namespace dcn

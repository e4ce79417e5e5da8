#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "dcn/gaussian.hpp"
#include "dcn/tensor.hpp"

namespace dcn {

/// Compositional filters for one layer: for every (feature, channel) pair a
/// group of Gaussian components, plus one bias per feature. Groups may have
/// different sizes (pruning shrinks them).
class CompFilterBank {
 public:
  CompFilterBank() = default;
  /// `components_per_group` components in every group, all zero-initialized
  /// at the window center with sigma 1.
  CompFilterBank(std::size_t features, std::size_t channels, KernelGeometry geom, std::size_t components_per_group);
  /// Explicit groups in (feature-major, channel-minor) order.
  CompFilterBank(std::size_t features, std::size_t channels, KernelGeometry geom,
                 std::vector<std::vector<GaussianComponent>> groups, std::vector<double> bias);

  std::size_t features() const { return features_; }
  std::size_t channels() const { return channels_; }
  KernelGeometry geometry() const { return geom_; }
  std::size_t group_count() const { return features_ * channels_; }
  std::size_t component_count() const { return components_.size(); }

  std::span<GaussianComponent> group(std::size_t f, std::size_t s) {
    const std::size_t g = f * channels_ + s;
    return {components_.data() + offsets_[g], offsets_[g + 1] - offsets_[g]};
  }
  std::span<const GaussianComponent> group(std::size_t f, std::size_t s) const {
    const std::size_t g = f * channels_ + s;
    return {components_.data() + offsets_[g], offsets_[g + 1] - offsets_[g]};
  }

  /// All components, grouped in (feature, channel) order.
  std::span<GaussianComponent> components() { return components_; }
  std::span<const GaussianComponent> components() const { return components_; }
  std::span<const std::size_t> offsets() const { return offsets_; }

  std::vector<double>& bias() { return bias_; }
  const std::vector<double>& bias() const { return bias_; }

  std::vector<std::vector<GaussianComponent>> groups() const;

  /// Throws InvalidInput if a component breaks the window constraints or a
  /// group is empty.
  void validate() const;

  friend bool operator==(const CompFilterBank&, const CompFilterBank&) = default;

 private:
  std::size_t features_ = 0;
  std::size_t channels_ = 0;
  KernelGeometry geom_;
  std::vector<GaussianComponent> components_;
  std::vector<std::size_t> offsets_{0};
  std::vector<double> bias_;
};

/// Means on a grid_x by grid_y lattice of cell centers inside the mean box,
/// sigma half the lattice spacing (kept above the floor), weights drawn from
/// N(0, weight_std), zero bias.
CompFilterBank init_comp_bank(std::size_t features, std::size_t channels, KernelGeometry geom, std::size_t grid_x,
                              std::size_t grid_y, std::mt19937_64& rng, double weight_std = 0.1);

/// Sum over each group of w * G(theta).
DenseFilterBank materialize_bank(const CompFilterBank& bank);

Tensor4 comp_forward(const Tensor4& input, const CompFilterBank& bank);

/// Forward pass computed per component with one row and one column 1D
/// convolution instead of a dense 2D kernel.
Tensor4 comp_forward_separable(const Tensor4& input, const CompFilterBank& bank);

/// Gradients indexed like CompFilterBank::components().
struct CompLayerGrads {
  std::vector<double> d_weight;
  std::vector<double> d_mean_x;
  std::vector<double> d_mean_y;
  std::vector<double> d_sigma;
  std::vector<double> d_bias;
};

/// Projects a dense per-tap weight gradient onto the component parameters.
CompLayerGrads comp_param_grads_from_dense(const DenseFilterBank& dense_grad, const CompFilterBank& bank);

CompLayerGrads comp_backward_params(const Tensor4& input, const Tensor4& grad_out, const CompFilterBank& bank);
Tensor4 comp_backward_input(const Tensor4& grad_out, const CompFilterBank& bank);

/// Clamps every mean into the window box and sigma to at least
/// kSigmaFloor + kSigmaMargin. Weights and bias are untouched.
inline constexpr double kSigmaMargin = 1e-3;
CompFilterBank project_constraints(CompFilterBank bank);
void project_constraints_in_place(CompFilterBank& bank);

// Baseline layer with free per-tap weights.

/// Weights drawn from N(0, 1/sqrt(fan_in)), zero bias.
DenseFilterBank init_dense_bank(std::size_t features, std::size_t channels, std::size_t kh, std::size_t kw,
                                std::mt19937_64& rng);

inline Tensor4 dense_layer_forward(const Tensor4& input, const DenseFilterBank& bank) {
  return conv2d_valid(input, bank);
}

inline ConvGrads dense_layer_backward(const Tensor4& input, const Tensor4& grad_out, const DenseFilterBank& bank,
                                      bool want_input_grad = true) {
  return conv2d_backward(input, grad_out, bank, want_input_grad);
}

}  // namespace dcn

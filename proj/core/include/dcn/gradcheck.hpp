#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "dcn/network.hpp"

namespace dcn {

struct GradCheckOptions {
  std::uint64_t seed = 1;
  std::size_t configurations = 50;
  double step = 1e-4;
  double tolerance = 1e-4;
  /// Relative errors use max(|analytic|, |numeric|, denominator_floor).
  double denominator_floor = 1e-6;
  /// Test hook: analytic gradients are replaced by g * (1 + perturb) + perturb.
  double perturb = 0.0;
  /// Layer check: compare against the (f(-2h) - 8f(-h) + 8f(h) - f(2h)) / 12h
  /// stencil. Its O(h^4) truncation keeps gradients near the floor from
  /// failing on oracle error alone. The two-point error is reported as well.
  bool fourth_order = true;
};

struct GradClassStats {
  std::string name;
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  /// Against the plain two-point difference, for reference only.
  double max_rel_err_two_point = 0.0;
};

struct GradCheckReport {
  std::vector<GradClassStats> classes;
  std::size_t configurations = 0;
  double tolerance = 0.0;

  bool passed() const;
  std::string to_text() const;
};

double relative_error(double analytic, double numeric, double floor);

/// Random compositional layers (input 2x2x10x10, kernels 5..9, G in
/// {1, 4, 9}) checked against central differences of sum(R * forward) for
/// every component weight, mean, sigma, bias and input entry.
GradCheckReport check_comp_layer_gradients(const GradCheckOptions& options);

/// Whole-network check on a random batch of two samples: up to
/// `samples_per_layer` randomly chosen parameters per parametric layer.
GradCheckReport check_network_gradients(const NetworkConfig& config, const GradCheckOptions& options,
                                        std::size_t samples_per_layer = 24);

}  // namespace dcn

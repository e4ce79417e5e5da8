#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "dcn/comp_layer.hpp"

namespace dcn {

struct BenchConfig {
  std::vector<std::size_t> kernels{5, 7, 9, 11, 13, 15, 17, 19, 21};
  std::size_t components = 4;  // per (feature, channel)
  std::size_t features = 16;
  std::size_t channels = 16;
  std::size_t map_width = 64;
  std::size_t map_height = 64;
  std::size_t repeats = 5;
  std::uint64_t seed = 1;
};

struct BenchRow {
  std::size_t kernel = 0;
  std::size_t components = 0;
  double t_direct = 0.0;     // seconds, median
  double t_separable = 0.0;  // seconds, median
  double speedup = 0.0;      // t_direct / t_separable
  double max_rel_diff = 0.0;
};

/// Largest |a - b| relative to the largest |a|.
double max_relative_deviation(const Tensor4& a, const Tensor4& b);

/// Random layer with `components` components per group and a random input.
CompFilterBank random_comp_bank(std::size_t features, std::size_t channels, KernelGeometry geom,
                                std::size_t components, std::uint64_t seed);

/// Times comp_forward (materialize + im2col + GEMM) against
/// comp_forward_separable on identical inputs after checking that both
/// agree within 1e-10. Throws std::runtime_error when they disagree.
BenchRow bench_kernel(std::size_t kernel, const BenchConfig& config);

std::vector<BenchRow> run_bench(const BenchConfig& config);

void write_bench_csv(const std::vector<BenchRow>& rows, std::ostream& out);

}  // namespace dcn

#include "dcn/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>

#include "dcn/error.hpp"

namespace dcn {
namespace {

template <typename F>
double median_seconds(std::size_t repeats, F&& run) {
  std::vector<double> times;
  times.reserve(repeats);
  for (std::size_t i = 0; i < repeats; ++i) {
    const auto start = std::chrono::steady_clock::now();
    run();
    times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  }
  std::sort(times.begin(), times.end());
  const std::size_t mid = times.size() / 2;
  return times.size() % 2 == 1 ? times[mid] : 0.5 * (times[mid - 1] + times[mid]);
}

}  // namespace

double max_relative_deviation(const Tensor4& a, const Tensor4& b) {
  if (a.shape() != b.shape()) throw InvalidInput("max_relative_deviation: shape mismatch");
  double scale = 0.0;
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    scale = std::max(scale, std::abs(a.data()[i]));
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  }
  return scale > 0.0 ? worst / scale : worst;
}

CompFilterBank random_comp_bank(std::size_t features, std::size_t channels, KernelGeometry geom,
                                std::size_t components, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  CompFilterBank bank(features, channels, geom, components);
  std::uniform_real_distribution<double> mx(geom.mean_lo(), geom.mean_hi_x());
  std::uniform_real_distribution<double> my(geom.mean_lo(), geom.mean_hi_y());
  std::uniform_real_distribution<double> sigma(0.6, std::max(0.7, 0.25 * static_cast<double>(geom.width)));
  std::normal_distribution<double> weight(0.0, 1.0);
  for (auto& c : bank.components()) c = {weight(rng), {mx(rng), my(rng)}, sigma(rng)};
  for (double& b : bank.bias()) b = weight(rng);
  return bank;
}

BenchRow bench_kernel(std::size_t kernel, const BenchConfig& config) {
  if (kernel < 4) throw InvalidInput("bench: kernel sizes must be >= 4");
  if (config.map_width < kernel || config.map_height < kernel) throw InvalidInput("bench: map smaller than kernel");
  const KernelGeometry geom = KernelGeometry::checked(kernel, kernel);
  const CompFilterBank bank =
      random_comp_bank(config.features, config.channels, geom, config.components, config.seed + kernel);
  Tensor4 input(1, config.channels, config.map_height, config.map_width);
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (double& v : input.data()) v = u(rng);

  BenchRow row;
  row.kernel = kernel;
  row.components = config.components;
  const Tensor4 direct = comp_forward(input, bank);
  const Tensor4 separable = comp_forward_separable(input, bank);
  row.max_rel_diff = max_relative_deviation(direct, separable);
  if (!(row.max_rel_diff <= 1e-10)) {
    throw std::runtime_error("bench: separable and direct outputs disagree at kernel " + std::to_string(kernel) +
                             " (rel " + std::to_string(row.max_rel_diff) + ")");
  }
  const std::size_t repeats = std::max<std::size_t>(config.repeats, 1);
  volatile double sink = 0.0;
  row.t_direct = median_seconds(repeats, [&] { sink = sink + comp_forward(input, bank).data()[0]; });
  row.t_separable = median_seconds(repeats, [&] { sink = sink + comp_forward_separable(input, bank).data()[0]; });
  row.speedup = row.t_direct / row.t_separable;
  return row;
}

std::vector<BenchRow> run_bench(const BenchConfig& config) {
  std::vector<BenchRow> rows;
  for (std::size_t k : config.kernels) rows.push_back(bench_kernel(k, config));
  return rows;
}

void write_bench_csv(const std::vector<BenchRow>& rows, std::ostream& out) {
  const auto old_precision = out.precision(9);
  out << "k,components,t_direct,t_separable,speedup\n";
  for (const auto& r : rows) {
    out << r.kernel << ',' << r.components << ',' << r.t_direct << ',' << r.t_separable << ',' << r.speedup << '\n';
  }
  out.precision(old_precision);
}

}  // namespace dcn

#include <benchmark/benchmark.h>

#include <random>

#include "dcn/bench.hpp"
#include "dcn/comp_layer.hpp"
#include "dcn/optim.hpp"

namespace {

dcn::Tensor4 random_input(std::size_t channels, std::size_t size) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  dcn::Tensor4 x(1, channels, size, size);
  for (double& v : x.data()) v = u(rng);
  return x;
}

// args: kernel size, components per (feature, channel)
template <bool Separable>
void BM_CompForward(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0));
  const auto g = static_cast<std::size_t>(state.range(1));
  const dcn::CompFilterBank bank = dcn::random_comp_bank(16, 16, dcn::KernelGeometry::checked(k, k), g, 1);
  const dcn::Tensor4 x = random_input(16, 64);
  for (auto _ : state) {
    dcn::Tensor4 y = Separable ? dcn::comp_forward_separable(x, bank) : dcn::comp_forward(x, bank);
    benchmark::DoNotOptimize(y.data().data());
  }
}

void kernel_args(benchmark::internal::Benchmark* b) {
  for (int k : {5, 9, 15, 21}) b->Args({k, 4});
  b->Args({15, 9});
  b->Unit(benchmark::kMillisecond);
}

BENCHMARK(BM_CompForward<false>)->Name("comp_forward/direct")->Apply(kernel_args);
BENCHMARK(BM_CompForward<true>)->Name("comp_forward/separable")->Apply(kernel_args);

void BM_TrainStep(benchmark::State& state) {
  const dcn::NetworkConfig config = dcn::NetworkConfig::parse(R"(
[input]
channels = 3
height = 32
width = 32
[comp_conv]
features = 32
kernel = 7x7
components = 2x2
[relu]
[maxpool]
window = 3
stride = 1
[comp_conv]
features = 32
kernel = 9x9
components = 3x3
[relu]
[maxpool]
window = 3
stride = 2
[fully_connected]
outputs = 10
[softmax_loss]
)");
  dcn::Network net(config, 1);
  const auto batch = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  dcn::Tensor4 x(batch, 3, 32, 32);
  for (double& v : x.data()) v = u(rng);
  std::vector<int> labels(batch);
  for (std::size_t i = 0; i < batch; ++i) labels[i] = static_cast<int>(i % 10);
  dcn::AdaDeltaState opt(net.parameter_count());
  for (auto _ : state) {
    net.forward_backward(x, labels);
    std::vector<double> p = net.parameters();
    dcn::adadelta_step(p, net.gradients(), opt);
    net.set_parameters(p);
    net.project_constraints();
  }
}
BENCHMARK(BM_TrainStep)->Arg(10)->Arg(100)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "dcn/comp_layer.hpp"
#include "dcn/tensor.hpp"

namespace dcn {

enum class LayerKind { kCompConv, kDenseConv, kRelu, kMaxPool, kFullyConnected, kSoftmaxLoss };

std::string_view layer_kind_name(LayerKind kind);

struct LayerSpec {
  LayerKind kind = LayerKind::kRelu;
  std::size_t features = 0;  // conv features or fully-connected outputs
  std::size_t kernel_w = 0;
  std::size_t kernel_h = 0;
  std::size_t grid_x = 0;  // component lattice, compositional only
  std::size_t grid_y = 0;
  std::size_t window = 0;  // pooling
  std::size_t stride = 1;
  int line = 0;  // source line of the stanza header, 0 if built in code

  friend bool operator==(const LayerSpec& a, const LayerSpec& b) {
    return a.kind == b.kind && a.features == b.features && a.kernel_w == b.kernel_w && a.kernel_h == b.kernel_h &&
           a.grid_x == b.grid_x && a.grid_y == b.grid_y && a.window == b.window && a.stride == b.stride;
  }
};

/// Layer stack description. Text form: one `[layer]` stanza per layer with
/// `key = value` lines; see docs/config_format.md.
struct NetworkConfig {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<LayerSpec> layers;

  static NetworkConfig parse(std::string_view text);
  static NetworkConfig load(const std::filesystem::path& path);
  std::string to_text() const;

  /// Checks layer compatibility and the single trailing loss layer.
  /// Throws ConfigError naming the offending stanza line.
  void validate() const;

  std::size_t classes() const;

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

struct CompConvLayer {
  CompFilterBank bank;
  Tensor4 input;
  CompLayerGrads grads;
};

struct DenseConvLayer {
  DenseFilterBank bank;
  Tensor4 input;
  DenseFilterBank grads;
};

struct ReluLayer {
  Tensor4 input;
};

struct MaxPoolLayer {
  std::size_t window = 0;
  std::size_t stride = 1;
  Shape4 input_shape;
  std::vector<std::size_t> argmax;
};

struct FullyConnectedLayer {
  std::size_t outputs = 0;
  std::size_t inputs = 0;
  std::vector<double> weights;
  std::vector<double> bias;
  Tensor4 input;
  FcGrads grads;
};

using Layer = std::variant<CompConvLayer, DenseConvLayer, ReluLayer, MaxPoolLayer, FullyConnectedLayer>;

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};

class Network {
 public:
  Network() = default;
  /// Builds and initializes all layers from `config` with a seeded RNG.
  Network(NetworkConfig config, std::uint64_t seed);

  const NetworkConfig& config() const { return config_; }
  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }

  /// Class scores (n, classes, 1, 1). With `cache`, layer inputs are kept
  /// for a following backward().
  Tensor4 forward(const Tensor4& input, bool cache = false);

  /// Forward + loss + backward; parameter gradients are stored in the layers.
  double forward_backward(const Tensor4& input, std::span<const int> labels);

  /// Mean loss and accuracy over a dataset, processed in chunks.
  Evaluation evaluate(const Tensor4& images, std::span<const int> labels, std::size_t chunk = 100);

  std::size_t parameter_count() const;
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> values);
  std::vector<double> gradients() const;

  /// Clamps every compositional bank back inside its constraints.
  void project_constraints();
  /// Throws InvalidInput when a compositional bank breaks its invariants.
  void validate_constraints() const;

  /// Positions (into layers()) of compositional conv layers, in order.
  std::vector<std::size_t> comp_layer_indices() const;
  CompFilterBank& comp_bank(std::size_t ordinal);
  const CompFilterBank& comp_bank(std::size_t ordinal) const;

 private:
  void backward(const Tensor4& grad_scores);

  NetworkConfig config_;
  std::vector<Layer> layers_;
};

}  // namespace dcn

#include "dcn/network.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "dcn/error.hpp"

namespace dcn {
namespace {

struct Dims {
  std::size_t c = 0, h = 0, w = 0;
};

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::size_t parse_count(std::string_view value, int line, std::string_view key) {
  std::size_t out = 0;
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError(line, "'" + std::string(key) + "' expects a non-negative integer, got '" + std::string(value) + "'");
  }
  return out;
}

// "7x7" -> (7, 7); a single number means a square.
std::pair<std::size_t, std::size_t> parse_pair(std::string_view value, int line, std::string_view key) {
  const auto x = value.find_first_of("xX");
  if (x == std::string_view::npos) {
    const std::size_t v = parse_count(value, line, key);
    return {v, v};
  }
  return {parse_count(trim(value.substr(0, x)), line, key), parse_count(trim(value.substr(x + 1)), line, key)};
}

LayerKind kind_from_name(std::string_view name, int line) {
  static const std::map<std::string_view, LayerKind> kinds = {
      {"comp_conv", LayerKind::kCompConv},
      {"dense_conv", LayerKind::kDenseConv},
      {"relu", LayerKind::kRelu},
      {"maxpool", LayerKind::kMaxPool},
      {"fully_connected", LayerKind::kFullyConnected},
      {"softmax_loss", LayerKind::kSoftmaxLoss},
  };
  const auto it = kinds.find(name);
  if (it == kinds.end()) throw ConfigError(line, "unknown layer type [" + std::string(name) + "]");
  return it->second;
}

Dims apply_layer(const LayerSpec& spec, Dims in) {
  switch (spec.kind) {
    case LayerKind::kCompConv:
    case LayerKind::kDenseConv:
      if (in.h < spec.kernel_h || in.w < spec.kernel_w) {
        throw ConfigError(spec.line, "kernel " + std::to_string(spec.kernel_w) + "x" + std::to_string(spec.kernel_h) +
                                         " larger than its " + std::to_string(in.w) + "x" + std::to_string(in.h) +
                                         " input");
      }
      return {spec.features, in.h - spec.kernel_h + 1, in.w - spec.kernel_w + 1};
    case LayerKind::kMaxPool:
      if (spec.window > in.h || spec.window > in.w) throw ConfigError(spec.line, "pool window larger than input");
      return {in.c, pooled_size(in.h, spec.window, spec.stride), pooled_size(in.w, spec.window, spec.stride)};
    case LayerKind::kFullyConnected:
      return {spec.features, 1, 1};
    case LayerKind::kRelu:
    case LayerKind::kSoftmaxLoss:
      return in;
  }
  return in;
}

}  // namespace

std::string_view layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::kCompConv: return "comp_conv";
    case LayerKind::kDenseConv: return "dense_conv";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kMaxPool: return "maxpool";
    case LayerKind::kFullyConnected: return "fully_connected";
    case LayerKind::kSoftmaxLoss: return "softmax_loss";
  }
  return "?";
}

NetworkConfig NetworkConfig::parse(std::string_view text) {
  NetworkConfig config;
  bool saw_input = false;
  enum class Section { kNone, kInput, kLayer } section = Section::kNone;
  std::vector<std::pair<std::string, int>> seen_keys;

  auto finish_stanza = [&]() {
    if (section != Section::kLayer) return;
    const LayerSpec& spec = config.layers.back();
    auto require = [&](bool ok, const char* key) {
      if (!ok) throw ConfigError(spec.line, "[" + std::string(layer_kind_name(spec.kind)) + "] is missing '" + key + "'");
    };
    switch (spec.kind) {
      case LayerKind::kCompConv:
        require(spec.grid_x > 0, "components");
        [[fallthrough]];
      case LayerKind::kDenseConv:
        require(spec.features > 0, "features");
        require(spec.kernel_w > 0, "kernel");
        break;
      case LayerKind::kMaxPool:
        require(spec.window > 0, "window");
        break;
      case LayerKind::kFullyConnected:
        require(spec.features > 0, "outputs");
        break;
      default:
        break;
    }
  };

  std::istringstream stream{std::string(text)};
  std::string raw;
  int line = 0;
  while (std::getline(stream, raw)) {
    ++line;
    std::string_view s = raw;
    if (const auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = trim(s);
    if (s.empty()) continue;

    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError(line, "unterminated stanza header");
      finish_stanza();
      const std::string_view name = trim(s.substr(1, s.size() - 2));
      if (name == "input") {
        if (saw_input) throw ConfigError(line, "duplicate [input] stanza");
        saw_input = true;
        section = Section::kInput;
      } else {
        LayerSpec spec;
        spec.kind = kind_from_name(name, line);
        spec.line = line;
        config.layers.push_back(spec);
        section = Section::kLayer;
      }
      continue;
    }

    const auto eq = s.find('=');
    if (eq == std::string_view::npos) throw ConfigError(line, "expected 'key = value'");
    const std::string_view key = trim(s.substr(0, eq));
    const std::string_view value = trim(s.substr(eq + 1));
    if (section == Section::kNone) throw ConfigError(line, "'" + std::string(key) + "' outside of a stanza");

    if (section == Section::kInput) {
      if (key == "channels") config.channels = parse_count(value, line, key);
      else if (key == "height") config.height = parse_count(value, line, key);
      else if (key == "width") config.width = parse_count(value, line, key);
      else throw ConfigError(line, "unknown [input] field '" + std::string(key) + "'");
      continue;
    }

    LayerSpec& spec = config.layers.back();
    auto reject = [&]() {
      throw ConfigError(line, "field '" + std::string(key) + "' not valid in [" +
                                  std::string(layer_kind_name(spec.kind)) + "]");
    };
    const bool conv = spec.kind == LayerKind::kCompConv || spec.kind == LayerKind::kDenseConv;
    if (key == "features") {
      if (!conv) reject();
      spec.features = parse_count(value, line, key);
    } else if (key == "outputs") {
      if (spec.kind != LayerKind::kFullyConnected) reject();
      spec.features = parse_count(value, line, key);
    } else if (key == "kernel") {
      if (!conv) reject();
      std::tie(spec.kernel_w, spec.kernel_h) = parse_pair(value, line, key);
    } else if (key == "components") {
      if (spec.kind != LayerKind::kCompConv) reject();
      std::tie(spec.grid_x, spec.grid_y) = parse_pair(value, line, key);
    } else if (key == "window") {
      if (spec.kind != LayerKind::kMaxPool) reject();
      spec.window = parse_count(value, line, key);
    } else if (key == "stride") {
      if (spec.kind != LayerKind::kMaxPool) reject();
      spec.stride = parse_count(value, line, key);
    } else {
      reject();
    }
  }
  finish_stanza();
  if (!saw_input) throw ConfigError(0, "missing [input] stanza");
  config.validate();
  return config;
}

NetworkConfig NetworkConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  try {
    return parse(text.str());
  } catch (const ConfigError& e) {
    throw ConfigError(e.line(), path.string() + ": " + e.what());
  }
}

std::string NetworkConfig::to_text() const {
  std::ostringstream out;
  out << "[input]\nchannels = " << channels << "\nheight = " << height << "\nwidth = " << width << "\n";
  for (const auto& l : layers) {
    out << "\n[" << layer_kind_name(l.kind) << "]\n";
    switch (l.kind) {
      case LayerKind::kCompConv:
        out << "features = " << l.features << "\nkernel = " << l.kernel_w << "x" << l.kernel_h
            << "\ncomponents = " << l.grid_x << "x" << l.grid_y << "\n";
        break;
      case LayerKind::kDenseConv:
        out << "features = " << l.features << "\nkernel = " << l.kernel_w << "x" << l.kernel_h << "\n";
        break;
      case LayerKind::kMaxPool:
        out << "window = " << l.window << "\nstride = " << l.stride << "\n";
        break;
      case LayerKind::kFullyConnected:
        out << "outputs = " << l.features << "\n";
        break;
      default:
        break;
    }
  }
  return out.str();
}

void NetworkConfig::validate() const {
  if (channels == 0 || height == 0 || width == 0) throw ConfigError(0, "[input] needs positive channels/height/width");
  if (layers.empty() || layers.back().kind != LayerKind::kSoftmaxLoss) {
    throw ConfigError(layers.empty() ? 0 : layers.back().line, "the last layer must be [softmax_loss]");
  }
  Dims dims{channels, height, width};
  bool flattened = false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& spec = layers[i];
    if (spec.kind == LayerKind::kSoftmaxLoss && i + 1 != layers.size()) {
      throw ConfigError(spec.line, "[softmax_loss] must appear exactly once, at the end");
    }
    if (spec.kind == LayerKind::kCompConv) {
      if (spec.kernel_w < 4 || spec.kernel_h < 4) {
        throw ConfigError(spec.line, "compositional kernels must be at least 4x4");
      }
      if (spec.grid_x == 0 || spec.grid_y == 0) throw ConfigError(spec.line, "components grid must be positive");
    }
    if ((spec.kind == LayerKind::kCompConv || spec.kind == LayerKind::kDenseConv) &&
        (spec.kernel_w == 0 || spec.kernel_h == 0 || spec.features == 0)) {
      throw ConfigError(spec.line, "convolution needs positive features and kernel");
    }
    if (spec.kind == LayerKind::kMaxPool && (spec.window == 0 || spec.stride == 0)) {
      throw ConfigError(spec.line, "pool window and stride must be positive");
    }
    if (flattened && spec.kind != LayerKind::kRelu && spec.kind != LayerKind::kSoftmaxLoss &&
        spec.kind != LayerKind::kFullyConnected) {
      throw ConfigError(spec.line, "spatial layer after fully_connected");
    }
    if (spec.kind == LayerKind::kFullyConnected) flattened = true;
    try {
      dims = apply_layer(spec, dims);
    } catch (const InvalidInput& e) {
      throw ConfigError(spec.line, e.what());
    }
  }
  if (dims.h != 1 || dims.w != 1 || dims.c < 2) {
    throw ConfigError(layers.back().line, "the loss layer needs a (classes >= 2) x 1 x 1 input; add [fully_connected]");
  }
}

std::size_t NetworkConfig::classes() const {
  Dims dims{channels, height, width};
  for (const auto& l : layers) dims = apply_layer(l, dims);
  return dims.c;
}

Network::Network(NetworkConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(seed);
  Dims dims{config_.channels, config_.height, config_.width};
  for (const auto& spec : config_.layers) {
    switch (spec.kind) {
      case LayerKind::kCompConv:
        layers_.emplace_back(CompConvLayer{
            init_comp_bank(spec.features, dims.c, KernelGeometry::checked(spec.kernel_w, spec.kernel_h), spec.grid_x,
                           spec.grid_y, rng),
            {}, {}});
        break;
      case LayerKind::kDenseConv:
        layers_.emplace_back(DenseConvLayer{init_dense_bank(spec.features, dims.c, spec.kernel_h, spec.kernel_w, rng), {}, {}});
        break;
      case LayerKind::kRelu:
        layers_.emplace_back(ReluLayer{});
        break;
      case LayerKind::kMaxPool:
        layers_.emplace_back(MaxPoolLayer{spec.window, spec.stride, {}, {}});
        break;
      case LayerKind::kFullyConnected: {
        FullyConnectedLayer fc;
        fc.outputs = spec.features;
        fc.inputs = dims.c * dims.h * dims.w;
        fc.weights.resize(fc.outputs * fc.inputs);
        fc.bias.assign(fc.outputs, 0.0);
        std::normal_distribution<double> weight(0.0, 1.0 / std::sqrt(static_cast<double>(fc.inputs)));
        for (double& v : fc.weights) v = weight(rng);
        layers_.emplace_back(std::move(fc));
        break;
      }
      case LayerKind::kSoftmaxLoss:
        break;
    }
    dims = apply_layer(spec, dims);
  }
}

Tensor4 Network::forward(const Tensor4& input, bool cache) {
  if (input.c() != config_.channels || input.h() != config_.height || input.w() != config_.width) {
    throw InvalidInput("network: input does not match the configured channels/height/width");
  }
  Tensor4 x = input;
  for (auto& layer : layers_) {
    x = std::visit(
        [&](auto& l) -> Tensor4 {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, CompConvLayer>) {
            if (cache) l.input = x;
            return comp_forward(x, l.bank);
          } else if constexpr (std::is_same_v<T, DenseConvLayer>) {
            if (cache) l.input = x;
            return conv2d_valid(x, l.bank);
          } else if constexpr (std::is_same_v<T, ReluLayer>) {
            Tensor4 y = relu(x);
            if (cache) l.input = std::move(x);
            return y;
          } else if constexpr (std::is_same_v<T, MaxPoolLayer>) {
            PoolResult pooled = maxpool(x, l.window, l.stride);
            if (cache) {
              l.input_shape = x.shape();
              l.argmax = std::move(pooled.argmax);
            }
            return std::move(pooled.output);
          } else {
            Tensor4 y = fully_connected(x, l.weights, l.bias);
            if (cache) l.input = std::move(x);
            return y;
          }
        },
        layer);
  }
  return x;
}

void Network::backward(const Tensor4& grad_scores) {
  Tensor4 grad = grad_scores;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const bool need_input = i > 0;
    grad = std::visit(
        [&](auto& l) -> Tensor4 {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, CompConvLayer>) {
            const DenseFilterBank dense = materialize_bank(l.bank);
            ConvGrads g = conv2d_backward(l.input, grad, dense, need_input);
            l.grads = comp_param_grads_from_dense(g.bank, l.bank);
            return std::move(g.input);
          } else if constexpr (std::is_same_v<T, DenseConvLayer>) {
            ConvGrads g = conv2d_backward(l.input, grad, l.bank, need_input);
            l.grads = std::move(g.bank);
            return std::move(g.input);
          } else if constexpr (std::is_same_v<T, ReluLayer>) {
            return relu_backward(grad, l.input);
          } else if constexpr (std::is_same_v<T, MaxPoolLayer>) {
            return maxpool_backward(grad, l.argmax, l.input_shape);
          } else {
            l.grads = fully_connected_backward(l.input, grad, l.weights, l.outputs, need_input);
            return std::move(l.grads.input);
          }
        },
        layers_[i]);
  }
}

double Network::forward_backward(const Tensor4& input, std::span<const int> labels) {
  const Tensor4 scores = forward(input, true);
  SoftmaxLoss loss = softmax_xent(scores, labels);
  backward(loss.grad);
  return loss.loss;
}

Evaluation Network::evaluate(const Tensor4& images, std::span<const int> labels, std::size_t chunk) {
  if (labels.size() != images.n()) throw InvalidInput("evaluate: label count != image count");
  if (images.n() == 0) throw InvalidInput("evaluate: empty dataset");
  chunk = std::max<std::size_t>(chunk, 1);
  double loss_sum = 0.0;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < images.n(); start += chunk) {
    const std::size_t count = std::min(chunk, images.n() - start);
    idx.resize(count);
    for (std::size_t i = 0; i < count; ++i) idx[i] = start + i;
    const Tensor4 scores = forward(gather_samples(images, idx), false);
    const auto batch_labels = labels.subspan(start, count);
    loss_sum += softmax_xent(scores, batch_labels).loss * static_cast<double>(count);
    const auto predicted = argmax_classes(scores);
    for (std::size_t i = 0; i < count; ++i) correct += predicted[i] == batch_labels[i] ? 1 : 0;
  }
  const double total = static_cast<double>(images.n());
  return {loss_sum / total, static_cast<double>(correct) / total};
}

namespace {

// Visits every parameter/gradient block in a fixed order: compositional
// components as (w, mean x, mean y, sigma) quadruples, then bias; dense and
// fully-connected weights then bias.
template <typename Layers, typename OnValue>
void walk_parameters(Layers& layers, OnValue&& on_value) {
  for (auto& layer : layers) {
    std::visit(
        [&](auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, CompConvLayer>) {
            for (auto& c : l.bank.components()) {
              on_value(c.weight);
              on_value(c.mean.x);
              on_value(c.mean.y);
              on_value(c.sigma);
            }
            for (auto& b : l.bank.bias()) on_value(b);
          } else if constexpr (std::is_same_v<T, DenseConvLayer>) {
            for (auto& v : l.bank.weights) on_value(v);
            for (auto& v : l.bank.bias) on_value(v);
          } else if constexpr (std::is_same_v<T, FullyConnectedLayer>) {
            for (auto& v : l.weights) on_value(v);
            for (auto& v : l.bias) on_value(v);
          }
        },
        layer);
  }
}

}  // namespace

std::size_t Network::parameter_count() const {
  std::size_t count = 0;
  walk_parameters(layers_, [&](const double&) { ++count; });
  return count;
}

std::vector<double> Network::parameters() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  walk_parameters(layers_, [&](const double& v) { out.push_back(v); });
  return out;
}

void Network::set_parameters(std::span<const double> values) {
  if (values.size() != parameter_count()) throw InvalidInput("set_parameters: size mismatch");
  std::size_t i = 0;
  walk_parameters(layers_, [&](double& v) { v = values[i++]; });
}

std::vector<double> Network::gradients() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (const auto& layer : layers_) {
    std::visit(
        [&](const auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, CompConvLayer>) {
            const std::size_t count = l.bank.component_count();
            const bool ready = l.grads.d_weight.size() == count;
            for (std::size_t k = 0; k < count; ++k) {
              out.push_back(ready ? l.grads.d_weight[k] : 0.0);
              out.push_back(ready ? l.grads.d_mean_x[k] : 0.0);
              out.push_back(ready ? l.grads.d_mean_y[k] : 0.0);
              out.push_back(ready ? l.grads.d_sigma[k] : 0.0);
            }
            for (std::size_t f = 0; f < l.bank.features(); ++f) out.push_back(ready ? l.grads.d_bias[f] : 0.0);
          } else if constexpr (std::is_same_v<T, DenseConvLayer>) {
            const bool ready = l.grads.weights.size() == l.bank.weights.size();
            for (std::size_t i = 0; i < l.bank.weights.size(); ++i) out.push_back(ready ? l.grads.weights[i] : 0.0);
            for (std::size_t i = 0; i < l.bank.bias.size(); ++i) out.push_back(ready ? l.grads.bias[i] : 0.0);
          } else if constexpr (std::is_same_v<T, FullyConnectedLayer>) {
            const bool ready = l.grads.weights.size() == l.weights.size();
            for (std::size_t i = 0; i < l.weights.size(); ++i) out.push_back(ready ? l.grads.weights[i] : 0.0);
            for (std::size_t i = 0; i < l.bias.size(); ++i) out.push_back(ready ? l.grads.bias[i] : 0.0);
          }
        },
        layer);
  }
  return out;
}

void Network::project_constraints() {
  for (auto& layer : layers_) {
    if (auto* comp = std::get_if<CompConvLayer>(&layer)) project_constraints_in_place(comp->bank);
  }
}

void Network::validate_constraints() const {
  for (const auto& layer : layers_) {
    if (const auto* comp = std::get_if<CompConvLayer>(&layer)) comp->bank.validate();
  }
}

std::vector<std::size_t> Network::comp_layer_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (std::holds_alternative<CompConvLayer>(layers_[i])) out.push_back(i);
  }
  return out;
}

CompFilterBank& Network::comp_bank(std::size_t ordinal) {
  const auto idx = comp_layer_indices();
  if (ordinal >= idx.size()) throw InvalidInput("no compositional layer #" + std::to_string(ordinal + 1));
  return std::get<CompConvLayer>(layers_[idx[ordinal]]).bank;
}

const CompFilterBank& Network::comp_bank(std::size_t ordinal) const {
  const auto idx = comp_layer_indices();
  if (ordinal >= idx.size()) throw InvalidInput("no compositional layer #" + std::to_string(ordinal + 1));
  return std::get<CompConvLayer>(layers_[idx[ordinal]]).bank;
}

}  // namespace dcn

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace dcn {

struct Shape4 {
  std::size_t n = 0, c = 0, h = 0, w = 0;

  std::size_t size() const { return n * c * h * w; }
  friend bool operator==(const Shape4&, const Shape4&) = default;
};

/// Dense (batch, channel, row, col) array of doubles, row-major.
class Tensor4 {
 public:
  Tensor4() = default;
  Tensor4(std::size_t n, std::size_t c, std::size_t h, std::size_t w, double fill = 0.0);
  explicit Tensor4(Shape4 shape, double fill = 0.0) : Tensor4(shape.n, shape.c, shape.h, shape.w, fill) {}

  Shape4 shape() const { return shape_; }
  std::size_t n() const { return shape_.n; }
  std::size_t c() const { return shape_.c; }
  std::size_t h() const { return shape_.h; }
  std::size_t w() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t n, std::size_t c, std::size_t y, std::size_t x) {
    return data_[((n * shape_.c + c) * shape_.h + y) * shape_.w + x];
  }
  double operator()(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
    return data_[((n * shape_.c + c) * shape_.h + y) * shape_.w + x];
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  /// One (h, w) plane.
  std::span<double> plane(std::size_t n, std::size_t c) {
    return {data_.data() + (n * shape_.c + c) * shape_.h * shape_.w, shape_.h * shape_.w};
  }
  std::span<const double> plane(std::size_t n, std::size_t c) const {
    return {data_.data() + (n * shape_.c + c) * shape_.h * shape_.w, shape_.h * shape_.w};
  }

  /// All channels of one sample.
  std::span<double> sample(std::size_t n) {
    const std::size_t stride = shape_.c * shape_.h * shape_.w;
    return {data_.data() + n * stride, stride};
  }
  std::span<const double> sample(std::size_t n) const {
    const std::size_t stride = shape_.c * shape_.h * shape_.w;
    return {data_.data() + n * stride, stride};
  }

  bool all_finite() const;

  friend bool operator==(const Tensor4&, const Tensor4&) = default;

 private:
  Shape4 shape_;
  std::vector<double> data_;
};

/// Gathers the listed samples of `src` into a new batch.
Tensor4 gather_samples(const Tensor4& src, std::span<const std::size_t> indices);

/// Free per-tap filters: weights laid out [feature][channel][row][col].
struct DenseFilterBank {
  std::size_t features = 0;
  std::size_t channels = 0;
  std::size_t kh = 0;
  std::size_t kw = 0;
  std::vector<double> weights;
  std::vector<double> bias;

  DenseFilterBank() = default;
  DenseFilterBank(std::size_t features, std::size_t channels, std::size_t kh, std::size_t kw);

  double& at(std::size_t f, std::size_t s, std::size_t y, std::size_t x) {
    return weights[((f * channels + s) * kh + y) * kw + x];
  }
  double at(std::size_t f, std::size_t s, std::size_t y, std::size_t x) const {
    return weights[((f * channels + s) * kh + y) * kw + x];
  }
  std::span<double> slice(std::size_t f, std::size_t s) {
    return {weights.data() + (f * channels + s) * kh * kw, kh * kw};
  }
  std::span<const double> slice(std::size_t f, std::size_t s) const {
    return {weights.data() + (f * channels + s) * kh * kw, kh * kw};
  }

  void validate() const;
};

// Convolution. All convolutions are "valid" (no padding, unit stride) and,
// as usual for CNNs, computed as cross-correlation.

Tensor4 conv2d_valid(const Tensor4& input, const DenseFilterBank& bank);

struct ConvGrads {
  DenseFilterBank bank;  // d_weights and d_bias
  Tensor4 input;         // empty unless requested
};

/// Weight/bias gradient (input windows correlated with grad_out) and,
/// optionally, the input gradient.
ConvGrads conv2d_backward(const Tensor4& input, const Tensor4& grad_out, const DenseFilterBank& bank,
                          bool want_input_grad);

/// Input gradient only, computed from the output gradient and the filters.
Tensor4 conv2d_backward_input(const Tensor4& grad_out, const DenseFilterBank& bank);

/// Full (zero-padded) correlation of `grad_out` with an already rotated bank,
/// summed over output features: the literal back-propagated error form.
Tensor4 correlate_full(const Tensor4& grad_out, const DenseFilterBank& rotated);

// Element-wise and pooling layers.

Tensor4 relu(const Tensor4& input);
Tensor4 relu_backward(const Tensor4& grad_out, const Tensor4& input);

struct PoolResult {
  Tensor4 output;
  /// For each output element, the flat index of the winning input element.
  std::vector<std::size_t> argmax;
};

PoolResult maxpool(const Tensor4& input, std::size_t window, std::size_t stride);
Tensor4 maxpool_backward(const Tensor4& grad_out, std::span<const std::size_t> argmax, Shape4 input_shape);

std::size_t pooled_size(std::size_t dim, std::size_t window, std::size_t stride);

// Fully connected: weights are (outputs x inputs) row-major, inputs are the
// flattened (c, h, w) sample.

Tensor4 fully_connected(const Tensor4& input, std::span<const double> weights, std::span<const double> bias);

struct FcGrads {
  std::vector<double> weights;
  std::vector<double> bias;
  Tensor4 input;
};

FcGrads fully_connected_backward(const Tensor4& input, const Tensor4& grad_out, std::span<const double> weights,
                                 std::size_t outputs, bool want_input_grad = true);

struct SoftmaxLoss {
  double loss = 0.0;
  Tensor4 grad;  // d loss / d scores
};

/// Mean multinomial logistic loss over the batch; scores are (n, classes, 1, 1).
SoftmaxLoss softmax_xent(const Tensor4& scores, std::span<const int> labels);

/// Index of the largest score per sample (first wins on ties).
std::vector<int> argmax_classes(const Tensor4& scores);

}  // namespace dcn

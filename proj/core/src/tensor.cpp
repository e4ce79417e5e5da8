#include "dcn/tensor.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "dcn/error.hpp"

namespace dcn {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

std::string shape_str(Shape4 s) {
  return "(" + std::to_string(s.n) + "," + std::to_string(s.c) + "," + std::to_string(s.h) + "," +
         std::to_string(s.w) + ")";
}

void check_conv_input(const Tensor4& input, const DenseFilterBank& bank) {
  bank.validate();
  if (input.c() != bank.channels) {
    throw InvalidInput("conv: input has " + std::to_string(input.c()) + " channels, filters expect " +
                       std::to_string(bank.channels));
  }
  if (input.h() < bank.kh || input.w() < bank.kw) {
    throw InvalidInput("conv: input " + shape_str(input.shape()) + " smaller than kernel");
  }
}

// col is (channels*kh*kw) x (oh*ow), row-major.
void im2col(std::span<const double> sample, std::size_t channels, std::size_t h, std::size_t w, std::size_t kh,
            std::size_t kw, std::vector<double>& col) {
  const std::size_t oh = h - kh + 1;
  const std::size_t ow = w - kw + 1;
  col.resize(channels * kh * kw * oh * ow);
  double* dst = col.data();
  for (std::size_t s = 0; s < channels; ++s) {
    const double* plane = sample.data() + s * h * w;
    for (std::size_t dy = 0; dy < kh; ++dy) {
      for (std::size_t dx = 0; dx < kw; ++dx) {
        for (std::size_t y = 0; y < oh; ++y) {
          const double* src = plane + (y + dy) * w + dx;
          std::copy(src, src + ow, dst);
          dst += ow;
        }
      }
    }
  }
}

// rows is (oh*ow) x (channels*kh*kw), row-major: one patch per output pixel.
void im2row(std::span<const double> sample, std::size_t channels, std::size_t h, std::size_t w, std::size_t kh,
            std::size_t kw, double* rows) {
  const std::size_t oh = h - kh + 1;
  const std::size_t ow = w - kw + 1;
  double* dst = rows;
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      for (std::size_t s = 0; s < channels; ++s) {
        const double* src = sample.data() + s * h * w + y * w + x;
        for (std::size_t dy = 0; dy < kh; ++dy) {
          std::copy(src + dy * w, src + dy * w + kw, dst);
          dst += kw;
        }
      }
    }
  }
}

void col2im_add(const std::vector<double>& col, std::size_t channels, std::size_t h, std::size_t w, std::size_t kh,
                std::size_t kw, std::span<double> sample) {
  const std::size_t oh = h - kh + 1;
  const std::size_t ow = w - kw + 1;
  const double* src = col.data();
  for (std::size_t s = 0; s < channels; ++s) {
    double* plane = sample.data() + s * h * w;
    for (std::size_t dy = 0; dy < kh; ++dy) {
      for (std::size_t dx = 0; dx < kw; ++dx) {
        for (std::size_t y = 0; y < oh; ++y) {
          double* dst = plane + (y + dy) * w + dx;
          for (std::size_t x = 0; x < ow; ++x) dst[x] += src[x];
          src += ow;
        }
      }
    }
  }
}

}  // namespace

Tensor4::Tensor4(std::size_t n, std::size_t c, std::size_t h, std::size_t w, double fill)
    : shape_{n, c, h, w}, data_(n * c * h * w, fill) {}

bool Tensor4::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor4 gather_samples(const Tensor4& src, std::span<const std::size_t> indices) {
  Tensor4 out(indices.size(), src.c(), src.h(), src.w());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= src.n()) throw InvalidInput("gather_samples: index out of range");
    auto from = src.sample(indices[i]);
    std::copy(from.begin(), from.end(), out.sample(i).begin());
  }
  return out;
}

DenseFilterBank::DenseFilterBank(std::size_t features, std::size_t channels, std::size_t kh, std::size_t kw)
    : features(features), channels(channels), kh(kh), kw(kw), weights(features * channels * kh * kw, 0.0),
      bias(features, 0.0) {}

void DenseFilterBank::validate() const {
  if (kh < 1 || kw < 1) throw InvalidInput("filter bank: kernel dims must be >= 1");
  if (weights.size() != features * channels * kh * kw) throw InvalidInput("filter bank: weight count mismatch");
  if (bias.size() != features) throw InvalidInput("filter bank: bias count mismatch");
}

Tensor4 conv2d_valid(const Tensor4& input, const DenseFilterBank& bank) {
  check_conv_input(input, bank);
  const std::size_t oh = input.h() - bank.kh + 1;
  const std::size_t ow = input.w() - bank.kw + 1;
  const std::size_t k = bank.channels * bank.kh * bank.kw;
  const std::size_t p = oh * ow;
  Tensor4 out(input.n(), bank.features, oh, ow);

  // Patch rows of several samples in one GEMM: (chunk*p x k) * (k x features).
  ConstMatrixMap weights(bank.weights.data(), bank.features, k);
  const std::size_t chunk = std::clamp<std::size_t>(2048 / p, 1, input.n());
  std::vector<double> rows;
  RowMatrix result;
  for (std::size_t n0 = 0; n0 < input.n(); n0 += chunk) {
    const std::size_t m = std::min(chunk, input.n() - n0);
    rows.resize(m * p * k);
    for (std::size_t i = 0; i < m; ++i) {
      im2row(input.sample(n0 + i), input.c(), input.h(), input.w(), bank.kh, bank.kw, rows.data() + i * p * k);
    }
    result.noalias() = ConstMatrixMap(rows.data(), m * p, k) * weights.transpose();
    for (std::size_t i = 0; i < m; ++i) {
      MatrixMap dst(out.sample(n0 + i).data(), bank.features, p);
      dst.noalias() = result.middleRows(i * p, p).transpose();
      for (std::size_t f = 0; f < bank.features; ++f) dst.row(f).array() += bank.bias[f];
    }
  }
  return out;
}

ConvGrads conv2d_backward(const Tensor4& input, const Tensor4& grad_out, const DenseFilterBank& bank,
                          bool want_input_grad) {
  check_conv_input(input, bank);
  const std::size_t oh = input.h() - bank.kh + 1;
  const std::size_t ow = input.w() - bank.kw + 1;
  const Shape4 expected{input.n(), bank.features, oh, ow};
  if (grad_out.shape() != expected) {
    throw InvalidInput("conv backward: gradient shape " + shape_str(grad_out.shape()) + " != " + shape_str(expected));
  }
  const std::size_t k = bank.channels * bank.kh * bank.kw;
  const std::size_t p = oh * ow;

  ConvGrads grads;
  grads.bank = DenseFilterBank(bank.features, bank.channels, bank.kh, bank.kw);
  if (want_input_grad) grads.input = Tensor4(input.shape());

  MatrixMap d_weights(grads.bank.weights.data(), bank.features, k);
  ConstMatrixMap weights(bank.weights.data(), bank.features, k);
  std::vector<double> col;
  std::vector<double> d_col;
  for (std::size_t n = 0; n < input.n(); ++n) {
    ConstMatrixMap g(grad_out.sample(n).data(), bank.features, p);
    im2col(input.sample(n), input.c(), input.h(), input.w(), bank.kh, bank.kw, col);
    d_weights.noalias() += g * ConstMatrixMap(col.data(), k, p).transpose();
    // Plain loop: Eigen's vectorized sum peels by address, so its rounding
    // would depend on where the allocator put the tensor.
    const double* gp = grad_out.sample(n).data();
    for (std::size_t f = 0; f < bank.features; ++f) {
      double s = 0.0;
      for (std::size_t i = 0; i < p; ++i) s += gp[f * p + i];
      grads.bank.bias[f] += s;
    }
    if (want_input_grad) {
      d_col.resize(k * p);
      MatrixMap(d_col.data(), k, p).noalias() = weights.transpose() * g;
      col2im_add(d_col, input.c(), input.h(), input.w(), bank.kh, bank.kw, grads.input.sample(n));
    }
  }
  return grads;
}

Tensor4 conv2d_backward_input(const Tensor4& grad_out, const DenseFilterBank& bank) {
  bank.validate();
  if (grad_out.c() != bank.features) throw InvalidInput("conv backward: gradient channels != filter features");
  const std::size_t h = grad_out.h() + bank.kh - 1;
  const std::size_t w = grad_out.w() + bank.kw - 1;
  const std::size_t k = bank.channels * bank.kh * bank.kw;
  const std::size_t p = grad_out.h() * grad_out.w();
  Tensor4 d_input(grad_out.n(), bank.channels, h, w);
  ConstMatrixMap weights(bank.weights.data(), bank.features, k);
  std::vector<double> d_col(k * p);
  for (std::size_t n = 0; n < grad_out.n(); ++n) {
    ConstMatrixMap g(grad_out.sample(n).data(), bank.features, p);
    MatrixMap(d_col.data(), k, p).noalias() = weights.transpose() * g;
    col2im_add(d_col, bank.channels, h, w, bank.kh, bank.kw, d_input.sample(n));
  }
  return d_input;
}

Tensor4 correlate_full(const Tensor4& grad_out, const DenseFilterBank& rotated) {
  rotated.validate();
  if (grad_out.c() != rotated.features) throw InvalidInput("correlate_full: gradient channels != filter features");
  const std::size_t kh = rotated.kh;
  const std::size_t kw = rotated.kw;
  const std::size_t gh = grad_out.h();
  const std::size_t gw = grad_out.w();
  Tensor4 out(grad_out.n(), rotated.channels, gh + kh - 1, gw + kw - 1);
  for (std::size_t n = 0; n < grad_out.n(); ++n) {
    for (std::size_t s = 0; s < rotated.channels; ++s) {
      for (std::size_t y = 0; y < out.h(); ++y) {
        for (std::size_t x = 0; x < out.w(); ++x) {
          double acc = 0.0;
          for (std::size_t f = 0; f < rotated.features; ++f) {
            for (std::size_t dy = 0; dy < kh; ++dy) {
              // Padded source row is y + dy - (kh - 1).
              if (y + dy < kh - 1 || y + dy - (kh - 1) >= gh) continue;
              const std::size_t gy = y + dy - (kh - 1);
              for (std::size_t dx = 0; dx < kw; ++dx) {
                if (x + dx < kw - 1 || x + dx - (kw - 1) >= gw) continue;
                acc += grad_out(n, f, gy, x + dx - (kw - 1)) * rotated.at(f, s, dy, dx);
              }
            }
          }
          out(n, s, y, x) = acc;
        }
      }
    }
  }
  return out;
}

Tensor4 relu(const Tensor4& input) {
  Tensor4 out(input.shape());
  auto src = input.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] > 0.0 ? src[i] : 0.0;
  return out;
}

Tensor4 relu_backward(const Tensor4& grad_out, const Tensor4& input) {
  if (grad_out.shape() != input.shape()) throw InvalidInput("relu backward: shape mismatch");
  Tensor4 out(input.shape());
  auto g = grad_out.data();
  auto x = input.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] = x[i] > 0.0 ? g[i] : 0.0;
  return out;
}

std::size_t pooled_size(std::size_t dim, std::size_t window, std::size_t stride) {
  if (stride < 1) throw InvalidInput("maxpool: stride must be >= 1");
  if (window < 1 || window > dim) throw InvalidInput("maxpool: window larger than input");
  return (dim - window) / stride + 1;
}

PoolResult maxpool(const Tensor4& input, std::size_t window, std::size_t stride) {
  const std::size_t oh = pooled_size(input.h(), window, stride);
  const std::size_t ow = pooled_size(input.w(), window, stride);
  PoolResult result{Tensor4(input.n(), input.c(), oh, ow), {}};
  result.argmax.resize(result.output.size());
  auto in = input.data();
  auto out = result.output.data();
  std::size_t o = 0;
  for (std::size_t n = 0; n < input.n(); ++n) {
    for (std::size_t c = 0; c < input.c(); ++c) {
      const std::size_t base = (n * input.c() + c) * input.h() * input.w();
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x, ++o) {
          std::size_t best = base + y * stride * input.w() + x * stride;
          for (std::size_t dy = 0; dy < window; ++dy) {
            for (std::size_t dx = 0; dx < window; ++dx) {
              const std::size_t idx = base + (y * stride + dy) * input.w() + x * stride + dx;
              if (in[idx] > in[best]) best = idx;
            }
          }
          out[o] = in[best];
          result.argmax[o] = best;
        }
      }
    }
  }
  return result;
}

Tensor4 maxpool_backward(const Tensor4& grad_out, std::span<const std::size_t> argmax, Shape4 input_shape) {
  if (argmax.size() != grad_out.size()) throw InvalidInput("maxpool backward: argmax size mismatch");
  Tensor4 d_input(input_shape);
  auto dst = d_input.data();
  auto g = grad_out.data();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (argmax[i] >= dst.size()) throw InvalidInput("maxpool backward: argmax out of range");
    dst[argmax[i]] += g[i];
  }
  return d_input;
}

Tensor4 fully_connected(const Tensor4& input, std::span<const double> weights, std::span<const double> bias) {
  const std::size_t in_size = input.c() * input.h() * input.w();
  const std::size_t outputs = bias.size();
  if (weights.size() != outputs * in_size) {
    throw InvalidInput("fully_connected: weight matrix is not " + std::to_string(outputs) + "x" +
                       std::to_string(in_size));
  }
  Tensor4 scores(input.n(), outputs, 1, 1);
  ConstMatrixMap w(weights.data(), outputs, in_size);
  ConstMatrixMap x(input.data().data(), input.n(), in_size);
  MatrixMap s(scores.data().data(), input.n(), outputs);
  s.noalias() = x * w.transpose();
  for (std::size_t n = 0; n < input.n(); ++n) {
    for (std::size_t j = 0; j < outputs; ++j) s(n, j) += bias[j];
  }
  return scores;
}

FcGrads fully_connected_backward(const Tensor4& input, const Tensor4& grad_out, std::span<const double> weights,
                                 std::size_t outputs, bool want_input_grad) {
  const std::size_t in_size = input.c() * input.h() * input.w();
  if (weights.size() != outputs * in_size) throw InvalidInput("fully_connected backward: weight size mismatch");
  if (grad_out.n() != input.n() || grad_out.c() * grad_out.h() * grad_out.w() != outputs) {
    throw InvalidInput("fully_connected backward: gradient shape mismatch");
  }
  FcGrads grads;
  grads.weights.assign(outputs * in_size, 0.0);
  grads.bias.assign(outputs, 0.0);
  ConstMatrixMap g(grad_out.data().data(), input.n(), outputs);
  ConstMatrixMap x(input.data().data(), input.n(), in_size);
  MatrixMap(grads.weights.data(), outputs, in_size).noalias() = g.transpose() * x;
  for (std::size_t n = 0; n < input.n(); ++n) {
    for (std::size_t j = 0; j < outputs; ++j) grads.bias[j] += g(n, j);
  }
  if (want_input_grad) {
    grads.input = Tensor4(input.shape());
    MatrixMap(grads.input.data().data(), input.n(), in_size).noalias() =
        g * ConstMatrixMap(weights.data(), outputs, in_size);
  }
  return grads;
}

SoftmaxLoss softmax_xent(const Tensor4& scores, std::span<const int> labels) {
  const std::size_t classes = scores.c() * scores.h() * scores.w();
  if (labels.size() != scores.n()) throw InvalidInput("softmax_xent: label count != batch size");
  if (scores.n() == 0) throw InvalidInput("softmax_xent: empty batch");
  SoftmaxLoss result{0.0, Tensor4(scores.shape())};
  const double inv_batch = 1.0 / static_cast<double>(scores.n());
  for (std::size_t n = 0; n < scores.n(); ++n) {
    const int label = labels[n];
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw InvalidInput("softmax_xent: label " + std::to_string(label) + " outside [0, " + std::to_string(classes) +
                         ")");
    }
    auto s = scores.sample(n);
    auto g = result.grad.sample(n);
    const double peak = *std::max_element(s.begin(), s.end());
    double total = 0.0;
    for (std::size_t j = 0; j < classes; ++j) {
      g[j] = std::exp(s[j] - peak);
      total += g[j];
    }
    result.loss += (std::log(total) - (s[label] - peak)) * inv_batch;
    for (std::size_t j = 0; j < classes; ++j) g[j] = (g[j] / total - (static_cast<int>(j) == label ? 1.0 : 0.0)) * inv_batch;
  }
  return result;
}

std::vector<int> argmax_classes(const Tensor4& scores) {
  std::vector<int> out(scores.n());
  for (std::size_t n = 0; n < scores.n(); ++n) {
    auto s = scores.sample(n);
    out[n] = static_cast<int>(std::max_element(s.begin(), s.end()) - s.begin());
  }
  return out;
}

}  // namespace dcn

#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace dcn {

/// Row-major 2D array of doubles; used for kernels and pixel maps.
class Grid2 {
 public:
  Grid2() = default;
  Grid2(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), v_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return v_.size(); }

  double& operator()(std::size_t y, std::size_t x) { return v_[y * cols_ + x]; }
  double operator()(std::size_t y, std::size_t x) const { return v_[y * cols_ + x]; }

  std::span<double> values() { return v_; }
  std::span<const double> values() const { return v_; }

  double sum() const {
    double s = 0.0;
    for (double v : v_) s += v;
    return s;
  }

  friend bool operator==(const Grid2&, const Grid2&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> v_;
};

}  // namespace dcn

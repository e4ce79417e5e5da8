#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "dcn/tensor.hpp"

namespace testutil {

inline dcn::Tensor4 random_tensor(dcn::Shape4 s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  dcn::Tensor4 t(s);
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.data()) v = u(rng);
  return t;
}

inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double dot(const dcn::Tensor4& a, const dcn::Tensor4& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
  return s;
}

/// Central difference of f with respect to *x.
inline double central_diff(double* x, double h, const std::function<double()>& f) {
  const double saved = *x;
  *x = saved + h;
  const double fp = f();
  *x = saved - h;
  const double fm = f();
  *x = saved;
  return (fp - fm) / (2.0 * h);
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace testutil

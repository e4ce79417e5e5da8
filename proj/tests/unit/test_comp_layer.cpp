#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "dcn/bench.hpp"
#include "dcn/comp_layer.hpp"
#include "dcn/error.hpp"
#include "dcn/gradcheck.hpp"
#include "test_util.hpp"

using namespace dcn;
using testutil::random_tensor;

namespace {

DenseFilterBank single_slice(const Grid2& k) {
  DenseFilterBank b(1, 1, k.rows(), k.cols());
  for (std::size_t i = 0; i < k.size(); ++i) b.weights[i] = k.values()[i];
  return b;
}

Tensor4 channel(const Tensor4& x, std::size_t n, std::size_t s) {
  Tensor4 out(1, 1, x.h(), x.w());
  for (std::size_t i = 0; i < x.h() * x.w(); ++i) out.data()[i] = x.plane(n, s)[i];
  return out;
}

double plane_dot(const Tensor4& a, const Tensor4& g, std::size_t n, std::size_t f) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a.data()[i] * g.plane(n, f)[i];
  return acc;
}

}  // namespace

TEST_CASE("zero-weight bank outputs its bias") {
  CompFilterBank bank(2, 3, KernelGeometry::checked(5, 5), 1);
  bank.bias() = {0.25, -1.5};
  std::mt19937_64 rng(1);
  const Tensor4 out = comp_forward(random_tensor({2, 3, 8, 9}, rng), bank);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t i = 0; i < out.h() * out.w(); ++i) {
      CHECK(out.plane(n, 0)[i] == 0.25);
      CHECK(out.plane(n, 1)[i] == -1.5);
    }
}

TEST_CASE("forward equals convolution with the materialized filters") {
  std::mt19937_64 rng(2);
  const KernelGeometry geom = KernelGeometry::checked(7, 6);
  const CompFilterBank bank = random_comp_bank(3, 2, geom, 1, 17);
  const Tensor4 x = random_tensor({2, 2, 11, 12}, rng);
  const Tensor4 out = comp_forward(x, bank);
  // Oracle: per slice, materialize that one component and convolve.
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t f = 0; f < 3; ++f) {
      Tensor4 acc(1, 1, out.h(), out.w(), bank.bias()[f]);
      for (std::size_t s = 0; s < 2; ++s) {
        const Tensor4 part = conv2d_valid(channel(x, n, s), single_slice(materialize(bank.group(f, s)[0], geom)));
        for (std::size_t i = 0; i < acc.size(); ++i) acc.data()[i] += part.data()[i];
      }
      for (std::size_t i = 0; i < acc.size(); ++i) CHECK(std::abs(acc.data()[i] - out.plane(n, f)[i]) <= 1e-12);
    }
}

TEST_CASE("materialize_bank") {
  const KernelGeometry geom = KernelGeometry::checked(6, 6);
  SUBCASE("linear in the weights") {
    const GaussianComponent c{1.0, {2.5, 3.0}, 1.1};
    GaussianComponent a = c, b = c, ab = c;
    a.weight = 0.7;
    b.weight = -1.9;
    ab.weight = 0.7 - 1.9;
    const CompFilterBank two(1, 1, geom, {{a, b}}, {0.0});
    const CompFilterBank one(1, 1, geom, {{ab}}, {0.0});
    CHECK(testutil::max_abs_diff(materialize_bank(two).weights, materialize_bank(one).weights) <= 1e-15);
  }
  SUBCASE("random G=4 bank vs per-component sums") {
    const CompFilterBank bank = random_comp_bank(2, 3, geom, 4, 5);
    const DenseFilterBank dense = materialize_bank(bank);
    for (std::size_t f = 0; f < 2; ++f)
      for (std::size_t s = 0; s < 3; ++s) {
        Grid2 sum(geom.height, geom.width);
        for (const auto& c : bank.group(f, s)) {
          const Grid2 k = materialize(c, geom);
          for (std::size_t i = 0; i < k.size(); ++i) sum.values()[i] += k.values()[i];
        }
        CHECK(testutil::max_abs_diff(sum.values(), dense.slice(f, s)) <= 1e-12);
      }
  }
}

TEST_CASE("forward is linear in the component weights") {
  std::mt19937_64 rng(3);
  const CompFilterBank bank = random_comp_bank(2, 2, KernelGeometry::checked(5, 7), 4, 9);
  CompFilterBank scaled = bank;
  for (auto& c : scaled.components()) c.weight *= -2.5;
  const Tensor4 x = random_tensor({1, 2, 10, 10}, rng);
  const Tensor4 y = comp_forward(x, bank);
  const Tensor4 ys = comp_forward(x, scaled);
  for (std::size_t f = 0; f < 2; ++f)
    for (std::size_t i = 0; i < y.h() * y.w(); ++i) {
      const double b = bank.bias()[f];
      CHECK(ys.plane(0, f)[i] == doctest::Approx(-2.5 * (y.plane(0, f)[i] - b) + b).epsilon(1e-12));
    }
}

TEST_CASE("separable forward equals direct forward") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const KernelGeometry geom = KernelGeometry::checked(4 + rng() % 10, 4 + rng() % 10);
    const CompFilterBank bank = random_comp_bank(1 + rng() % 3, 1 + rng() % 3, geom, 1 + rng() % 9, rng());
    const Tensor4 x = random_tensor({2, bank.channels(), geom.height + rng() % 8, geom.width + rng() % 8}, rng);
    CHECK(max_relative_deviation(comp_forward(x, bank), comp_forward_separable(x, bank)) <= 1e-10);
  }
}

TEST_CASE("parameter gradients: zero upstream gradient") {
  std::mt19937_64 rng(5);
  const CompFilterBank bank = random_comp_bank(2, 2, KernelGeometry::checked(5, 5), 4, 1);
  const Tensor4 x = random_tensor({2, 2, 8, 8}, rng);
  const CompLayerGrads g = comp_backward_params(x, Tensor4(2, 2, 4, 4), bank);
  for (const auto* v : {&g.d_weight, &g.d_mean_x, &g.d_mean_y, &g.d_sigma, &g.d_bias})
    for (double e : *v) CHECK(e == 0.0);
  const Tensor4 dx = comp_backward_input(Tensor4(2, 2, 4, 4), bank);
  for (double e : dx.data()) CHECK(e == 0.0);
}

TEST_CASE("parameter gradients equal input correlated with derivative kernels") {
  // Literal form: dL/dtheta = sum over outputs of grad_Z * (X_s conv dG/dtheta).
  std::mt19937_64 rng(6);
  const KernelGeometry geom = KernelGeometry::checked(7, 7);
  const CompFilterBank bank = random_comp_bank(2, 2, geom, 4, 33);
  const Tensor4 x = random_tensor({2, 2, 10, 10}, rng);
  const Tensor4 gz = random_tensor({2, 2, 4, 4}, rng);
  const CompLayerGrads g = comp_backward_params(x, gz, bank);
  std::size_t k = 0;
  for (std::size_t f = 0; f < 2; ++f)
    for (std::size_t s = 0; s < 2; ++s)
      for (const auto& c : bank.group(f, s)) {
        GaussianComponent unit = c;
        unit.weight = 1.0;
        const MeanDerivative dm = dG_dmu(c, geom);
        const Grid2 kernels[] = {materialize(unit, geom), dm.d_x, dm.d_y, dG_dsigma(c, geom)};
        const double got[] = {g.d_weight[k], g.d_mean_x[k], g.d_mean_y[k], g.d_sigma[k]};
        for (int p = 0; p < 4; ++p) {
          double want = 0.0;
          for (std::size_t n = 0; n < 2; ++n)
            want += plane_dot(conv2d_valid(channel(x, n, s), single_slice(kernels[p])), gz, n, f);
          CHECK(testutil::rel_err(got[p], want, 1e-12) <= 1e-12);
        }
        ++k;
      }
  for (std::size_t f = 0; f < 2; ++f) {
    double want = 0.0;
    for (std::size_t n = 0; n < 2; ++n)
      for (double v : gz.plane(n, f)) want += v;
    CHECK(g.d_bias[f] == doctest::Approx(want).epsilon(1e-13));
  }
}

TEST_CASE("narrow component weight gradient approaches the per-tap gradient") {
  std::mt19937_64 rng(7);
  const KernelGeometry geom = KernelGeometry::checked(5, 5);
  const Tensor4 x = random_tensor({2, 1, 9, 9}, rng);
  const Tensor4 gz = random_tensor({2, 1, 5, 5}, rng);
  const CompFilterBank bank(1, 1, geom, {{{0.8, {2.0, 3.0}, 0.501}}}, {0.0});
  const DenseFilterBank dense_grad = conv2d_backward(x, gz, materialize_bank(bank), false).bank;
  const double tap = dense_grad.at(0, 0, 3, 2);
  double prev = std::abs(comp_backward_params(x, gz, bank).d_weight[0] - tap);
  for (double sigma : {0.4, 0.25, 0.1}) {
    // Below the constraint floor only to take the limit.
    const CompFilterBank narrow(1, 1, geom, {{{0.8, {2.0, 3.0}, sigma}}}, {0.0});
    const double err = std::abs(comp_backward_params(x, gz, narrow).d_weight[0] - tap);
    CHECK(err < prev);
    prev = err;
  }
  CHECK(prev <= 1e-12 * std::max(1.0, std::abs(tap)));
}

TEST_CASE("input gradient impulse response is the rotated kernel") {
  const KernelGeometry geom = KernelGeometry::checked(5, 4);
  const CompFilterBank bank = random_comp_bank(1, 1, geom, 3, 8);
  Tensor4 gz(1, 1, 4, 5);
  gz(0, 0, 1, 2) = 1.0;
  const Tensor4 gi = comp_backward_input(gz, bank);
  const DenseFilterBank k = materialize_bank(bank);
  for (std::size_t y = 0; y < gi.h(); ++y)
    for (std::size_t x = 0; x < gi.w(); ++x) {
      const bool inside = y >= 1 && y < 1 + geom.height && x >= 2 && x < 2 + geom.width;
      const double want = inside ? k.at(0, 0, y - 1, x - 2) : 0.0;
      CHECK(gi(0, 0, y, x) == doctest::Approx(want).epsilon(1e-15));
    }
}

TEST_CASE("all gradients match central differences on 50 random layers") {
  GradCheckOptions o;
  o.configurations = 50;
  const GradCheckReport r = check_comp_layer_gradients(o);
  INFO(r.to_text());
  CHECK(r.passed());
  REQUIRE(r.classes.size() == 6);
  for (const auto& c : r.classes) CHECK(c.checked > 0);
}

TEST_CASE("gradient check reports a corrupted gradient") {
  GradCheckOptions o;
  o.configurations = 3;
  o.perturb = 1e-3;
  CHECK_FALSE(check_comp_layer_gradients(o).passed());
}

TEST_CASE("gradient check verdicts are stable across seeds") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    GradCheckOptions o;
    o.seed = seed;
    o.configurations = 5;
    CHECK(check_comp_layer_gradients(o).passed());
  }
}

TEST_CASE("input gradient matches central differences at 1e-5") {
  std::mt19937_64 rng(9);
  const CompFilterBank bank = random_comp_bank(2, 2, KernelGeometry::checked(7, 7), 4, 12);
  Tensor4 x = random_tensor({2, 2, 10, 10}, rng);
  const Tensor4 r = random_tensor({2, 2, 4, 4}, rng);
  const Tensor4 gi = comp_backward_input(r, bank);
  auto loss = [&] { return testutil::dot(r, comp_forward(x, bank)); };
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(testutil::rel_err(gi.data()[i], testutil::central_diff(&x.data()[i], 1e-4, loss), 1e-6) <= 1e-5);
}

TEST_CASE("projection") {
  const KernelGeometry g9 = KernelGeometry::checked(9, 9);
  const CompFilterBank inside(1, 1, g9, {{{0.3, {2.0, 6.0}, 0.9}}}, {0.1});
  CHECK(project_constraints(inside) == inside);
  const CompFilterBank outside(1, 1, g9, {{{0.3, {-3.0, 99.0}, 0.2}}}, {0.1});
  const CompFilterBank p = project_constraints(outside);
  CHECK(p.components()[0].mean == Vec2{1.5, 6.5});
  CHECK(p.components()[0].sigma == doctest::Approx(0.501).epsilon(1e-15));
  CHECK(p.components()[0].weight == 0.3);
  CHECK(project_constraints(p) == p);
  CHECK_NOTHROW(p.validate());
  CHECK_THROWS_AS(outside.validate(), InvalidInput);
}

TEST_CASE("initialization") {
  std::mt19937_64 rng(10);
  const KernelGeometry geom = KernelGeometry::checked(9, 9);
  const CompFilterBank bank = init_comp_bank(4, 3, geom, 3, 3, rng);
  CHECK(bank.component_count() == 4 * 3 * 9);
  CHECK_NOTHROW(bank.validate());
  for (double b : bank.bias()) CHECK(b == 0.0);
  // Cell centers of a 3x3 lattice over [1.5, 6.5]: 2.333.., 4, 5.666..
  const auto g = bank.group(0, 0);
  CHECK(g[0].mean.x == doctest::Approx(1.5 + 5.0 / 6.0));
  CHECK(g[4].mean.x == doctest::Approx(4.0));
  CHECK(g[4].mean.y == doctest::Approx(4.0));
  CHECK(g[0].sigma == doctest::Approx(5.0 / 6.0));
  std::mt19937_64 a(3), b(3);
  CHECK(init_comp_bank(2, 2, geom, 2, 2, a) == init_comp_bank(2, 2, geom, 2, 2, b));
}

TEST_CASE("dense baseline layer") {
  std::mt19937_64 rng(11);
  SUBCASE("finite differences") {
    DenseFilterBank bank = init_dense_bank(2, 2, 3, 3, rng);
    Tensor4 x = random_tensor({2, 2, 6, 6}, rng);
    const Tensor4 r = random_tensor({2, 2, 4, 4}, rng);
    const ConvGrads g = dense_layer_backward(x, r, bank);
    auto loss = [&] { return testutil::dot(r, dense_layer_forward(x, bank)); };
    for (std::size_t i = 0; i < bank.weights.size(); ++i)
      CHECK(testutil::rel_err(g.bank.weights[i], testutil::central_diff(&bank.weights[i], 1e-5, loss)) <= 1e-5);
    for (std::size_t i = 0; i < x.size(); ++i)
      CHECK(testutil::rel_err(g.input.data()[i], testutil::central_diff(&x.data()[i], 1e-5, loss)) <= 1e-5);
  }
  SUBCASE("1x1 kernel is a per-pixel linear map") {
    DenseFilterBank bank(1, 2, 1, 1);
    bank.weights = {2.0, -3.0};
    bank.bias = {0.5};
    const Tensor4 x = random_tensor({1, 2, 3, 3}, rng);
    const Tensor4 y = dense_layer_forward(x, bank);
    const Tensor4 r = random_tensor(y.shape(), rng);
    const ConvGrads g = dense_layer_backward(x, r, bank);
    double d0 = 0.0, d1 = 0.0, db = 0.0;
    for (std::size_t i = 0; i < 9; ++i) {
      CHECK(y.data()[i] == doctest::Approx(2.0 * x.plane(0, 0)[i] - 3.0 * x.plane(0, 1)[i] + 0.5));
      CHECK(g.input.plane(0, 0)[i] == doctest::Approx(2.0 * r.data()[i]));
      CHECK(g.input.plane(0, 1)[i] == doctest::Approx(-3.0 * r.data()[i]));
      d0 += r.data()[i] * x.plane(0, 0)[i];
      d1 += r.data()[i] * x.plane(0, 1)[i];
      db += r.data()[i];
    }
    CHECK(g.bank.weights[0] == doctest::Approx(d0));
    CHECK(g.bank.weights[1] == doctest::Approx(d1));
    CHECK(g.bank.bias[0] == doctest::Approx(db));
  }
  SUBCASE("zero upstream gradient") {
    const DenseFilterBank bank = init_dense_bank(2, 2, 3, 3, rng);
    const ConvGrads g = dense_layer_backward(random_tensor({1, 2, 5, 5}, rng), Tensor4(1, 2, 3, 3), bank);
    for (double v : g.bank.weights) CHECK(v == 0.0);
    for (double v : g.input.data()) CHECK(v == 0.0);
  }
}

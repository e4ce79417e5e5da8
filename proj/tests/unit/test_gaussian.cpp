#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "dcn/error.hpp"
#include "dcn/gaussian.hpp"
#include "test_util.hpp"

using namespace dcn;

namespace {

GaussianComponent random_component(KernelGeometry geom, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> mx(geom.mean_lo(), geom.mean_hi_x());
  std::uniform_real_distribution<double> my(geom.mean_lo(), geom.mean_hi_y());
  std::uniform_real_distribution<double> s(0.51, 4.0);
  std::uniform_real_distribution<double> w(-2.0, 2.0);
  return {w(rng), {mx(rng), my(rng)}, s(rng)};
}

KernelGeometry random_geometry(std::mt19937_64& rng) {
  return KernelGeometry::checked(4 + rng() % 14, 4 + rng() % 14);
}

// Plain double loop over the tap grid.
double brute_normalizer(KernelGeometry geom, Vec2 mu, double sigma) {
  double n = 0.0;
  for (std::size_t y = 0; y < geom.height; ++y)
    for (std::size_t x = 0; x < geom.width; ++x) {
      const double dx = static_cast<double>(x) - mu.x;
      const double dy = static_cast<double>(y) - mu.y;
      n += std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
    }
  return n;
}

}  // namespace

TEST_CASE("geometry checks") {
  CHECK_THROWS_AS(KernelGeometry::checked(3, 7), InvalidInput);
  const KernelGeometry g = KernelGeometry::checked(9, 7);
  CHECK(g.mean_lo() == 1.5);
  CHECK(g.mean_hi_x() == 6.5);
  CHECK(g.mean_hi_y() == 4.5);
  CHECK(satisfies_constraints({1.0, {1.5, 4.5}, 0.51}, g));
  CHECK_FALSE(satisfies_constraints({1.0, {1.4, 3.0}, 1.0}, g));
  CHECK_FALSE(satisfies_constraints({1.0, {3.0, 3.0}, 0.5}, g));
}

TEST_CASE("unnormalized gaussian") {
  CHECK(g_unnorm({2.0, 3.0}, {2.0, 3.0}, 1.3) == 1.0);
  CHECK(g_unnorm({0.0, 0.0}, {1.5, 1.5}, 1.0) == doctest::Approx(0.10539922456186433).epsilon(1e-15));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int i = 0; i < 20; ++i) {
    const Vec2 mu{u(rng), u(rng)};
    const Vec2 d{u(rng), u(rng)};
    CHECK(g_unnorm({mu.x + d.x, mu.y + d.y}, mu, 1.7) == doctest::Approx(g_unnorm({mu.x - d.x, mu.y - d.y}, mu, 1.7)).epsilon(1e-14));
  }
}

TEST_CASE("normalizer") {
  const KernelGeometry g9 = KernelGeometry::checked(9, 9);
  CHECK(normalizer(g9, {4.0, 4.0}, 2.0) == doctest::Approx(23.990704011121736).epsilon(1e-13));
  CHECK(normalizer(g9, {4.0, 4.0}, 0.02) == doctest::Approx(1.0).epsilon(1e-15));
  std::mt19937_64 rng(2);
  for (int i = 0; i < 200; ++i) {
    const KernelGeometry geom = random_geometry(rng);
    const GaussianComponent c = random_component(geom, rng);
    const double n = normalizer(geom, c.mean, c.sigma);
    CHECK(n > 0.0);
    CHECK(testutil::rel_err(n, brute_normalizer(geom, c.mean, c.sigma)) <= 1e-13);
    double sx = 0.0, sy = 0.0;
    for (std::size_t x = 0; x < geom.width; ++x) sx += std::exp(-std::pow(x - c.mean.x, 2) / (2 * c.sigma * c.sigma));
    for (std::size_t y = 0; y < geom.height; ++y) sy += std::exp(-std::pow(y - c.mean.y, 2) / (2 * c.sigma * c.sigma));
    CHECK(testutil::rel_err(n, sx * sy) <= 1e-13);
  }
}

TEST_CASE("materialize") {
  const KernelGeometry g7 = KernelGeometry::checked(7, 7);
  const Grid2 k = materialize({1.0, {3.0, 3.0}, 1.0}, g7);
  CHECK(k.rows() == 7);
  CHECK(k.cols() == 7);
  CHECK(k(3, 3) == doctest::Approx(0.15924112569070242).epsilon(1e-14));
  const Grid2 zero = materialize({0.0, {3.0, 2.0}, 1.0}, g7);
  for (double v : zero.values()) CHECK(v == 0.0);

  const KernelGeometry g = KernelGeometry::checked(6, 9);
  const Grid2 r = materialize({1.0, {2.0, 5.5}, 1.2}, g);
  CHECK(r.rows() == 9);
  CHECK(r.cols() == 6);
  // rows index y, columns index x
  CHECK(r(5, 2) > r(2, 5));

  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const KernelGeometry geom = random_geometry(rng);
    const GaussianComponent c = random_component(geom, rng);
    CHECK(std::abs(materialize(c, geom).sum() - c.weight) <= 1e-12);
  }
}

TEST_CASE("mean derivative kernels") {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 50; ++i) {
    const KernelGeometry geom = random_geometry(rng);
    GaussianComponent c = random_component(geom, rng);
    const MeanDerivative d = dG_dmu(c, geom);
    CHECK(std::abs(d.d_x.sum()) <= 1e-10);
    CHECK(std::abs(d.d_y.sum()) <= 1e-10);
    const double h = 1e-5;
    GaussianComponent px = c, mx = c, py = c, my = c;
    px.mean.x += h;
    mx.mean.x -= h;
    py.mean.y += h;
    my.mean.y -= h;
    const Grid2 kpx = materialize(px, geom), kmx = materialize(mx, geom);
    const Grid2 kpy = materialize(py, geom), kmy = materialize(my, geom);
    double scale = 0.0;
    for (double v : d.d_x.values()) scale = std::max(scale, std::abs(v));
    for (std::size_t t = 0; t < d.d_x.size(); ++t) {
      const double fx = (kpx.values()[t] - kmx.values()[t]) / (2 * h);
      const double fy = (kpy.values()[t] - kmy.values()[t]) / (2 * h);
      CHECK(testutil::rel_err(d.d_x.values()[t], fx, 1e-3 * scale) <= 1e-6);
      CHECK(testutil::rel_err(d.d_y.values()[t], fy, 1e-3 * scale) <= 1e-6);
    }
  }
}

TEST_CASE("mean derivative is antisymmetric at the window center") {
  const KernelGeometry geom = KernelGeometry::checked(9, 7);
  const MeanDerivative d = dG_dmu({1.0, geom.center(), 1.4}, geom);
  for (std::size_t y = 0; y < geom.height; ++y)
    for (std::size_t x = 0; x < geom.width; ++x) {
      CHECK(d.d_x(y, x) == doctest::Approx(-d.d_x(y, geom.width - 1 - x)).epsilon(1e-12));
      CHECK(d.d_y(y, x) == doctest::Approx(-d.d_y(geom.height - 1 - y, x)).epsilon(1e-12));
    }
  CHECK(std::abs(d.d_x(3, 4)) <= 1e-15);
}

TEST_CASE("sigma derivative kernel") {
  const KernelGeometry g7 = KernelGeometry::checked(7, 7);
  const Grid2 zero_ds = dG_dsigma({0.0, {3.0, 3.0}, 1.0}, g7);
  for (double v : zero_ds.values()) CHECK(v == 0.0);
  std::mt19937_64 rng(5);
  for (int i = 0; i < 50; ++i) {
    const KernelGeometry geom = random_geometry(rng);
    const GaussianComponent c = random_component(geom, rng);
    const Grid2 d = dG_dsigma(c, geom);
    CHECK(std::abs(d.sum()) <= 1e-10);
    const double h = 1e-5;
    GaussianComponent p = c, m = c;
    p.sigma += h;
    m.sigma -= h;
    const Grid2 kp = materialize(p, geom), km = materialize(m, geom);
    double scale = 0.0;
    for (double v : d.values()) scale = std::max(scale, std::abs(v));
    for (std::size_t t = 0; t < d.size(); ++t)
      CHECK(testutil::rel_err(d.values()[t], (kp.values()[t] - km.values()[t]) / (2 * h), 1e-3 * scale) <= 1e-6);
  }
}

TEST_CASE("separable factors reproduce the kernel") {
  const KernelGeometry g5 = KernelGeometry::checked(5, 5);
  CHECK(separable_factors({0.0, {2.0, 2.0}, 1.0}, g5).scale == 0.0);
  std::mt19937_64 rng(6);
  for (int i = 0; i < 200; ++i) {
    const KernelGeometry geom = random_geometry(rng);
    GaussianComponent c = random_component(geom, rng);
    c.weight = 1.0;
    const SeparableFactors f = separable_factors(c, geom);
    REQUIRE(f.row.size() == geom.width);
    REQUIRE(f.column.size() == geom.height);
    const Grid2 k = materialize(c, geom);
    for (std::size_t y = 0; y < geom.height; ++y)
      for (std::size_t x = 0; x < geom.width; ++x) CHECK(std::abs(f.column[y] * f.row[x] * f.scale - k(y, x)) <= 1e-14);
  }
}

TEST_CASE("two 1D passes equal one 2D correlation") {
  std::mt19937_64 rng(7);
  const KernelGeometry geom = KernelGeometry::checked(7, 5);
  const GaussianComponent c{1.7, {2.2, 2.9}, 1.1};
  const Grid2 k = materialize(c, geom);
  const SeparableFactors f = separable_factors(c, geom);
  const std::size_t H = 12, W = 15, oh = H - geom.height + 1, ow = W - geom.width + 1;
  const dcn::Tensor4 img = testutil::random_tensor({1, 1, H, W}, rng);
  Grid2 rows(H, ow);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < ow; ++x)
      for (std::size_t dx = 0; dx < geom.width; ++dx) rows(y, x) += img(0, 0, y, x + dx) * f.row[dx];
  double worst = 0.0, scale = 0.0;
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double sep = 0.0, direct = 0.0;
      for (std::size_t dy = 0; dy < geom.height; ++dy) sep += rows(y + dy, x) * f.column[dy];
      sep *= f.scale;
      for (std::size_t dy = 0; dy < geom.height; ++dy)
        for (std::size_t dx = 0; dx < geom.width; ++dx) direct += img(0, 0, y + dy, x + dx) * k(dy, dx);
      worst = std::max(worst, std::abs(sep - direct));
      scale = std::max(scale, std::abs(direct));
    }
  CHECK(worst / scale <= 1e-10);
}

TEST_CASE("rotate180") {
  const KernelGeometry g = KernelGeometry::checked(7, 5);
  DenseFilterBank bank(2, 3, g.height, g.width);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (double& v : bank.weights) v = u(rng);
  CHECK(rotate180(rotate180(bank)).weights == bank.weights);

  auto stamp = [&](const Grid2& k) {
    DenseFilterBank b(1, 1, g.height, g.width);
    for (std::size_t i = 0; i < k.size(); ++i) b.weights[i] = k.values()[i];
    return b;
  };
  const DenseFilterBank centered = stamp(materialize({1.0, g.center(), 1.3}, g));
  CHECK(testutil::max_abs_diff(rotate180(centered).weights, centered.weights) <= 1e-15);

  for (int i = 0; i < 20; ++i) {
    const GaussianComponent c = random_component(g, rng);
    GaussianComponent mirrored = c;
    mirrored.mean = {g.width - 1.0 - c.mean.x, g.height - 1.0 - c.mean.y};
    const DenseFilterBank a = rotate180(stamp(materialize(c, g)));
    const DenseFilterBank b = stamp(materialize(mirrored, g));
    CHECK(testutil::max_abs_diff(a.weights, b.weights) <= 1e-12);
  }
}

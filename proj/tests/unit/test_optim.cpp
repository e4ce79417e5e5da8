#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "dcn/error.hpp"
#include "dcn/optim.hpp"

using namespace dcn;

namespace {

// 8x8 images: class 0 brighter on the left half, class 1 on the right.
LabeledDataset halves(std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.1);
  LabeledDataset d;
  d.images = Tensor4(count, 1, 8, 8);
  d.class_count = 2;
  for (std::size_t n = 0; n < count; ++n) {
    const int label = static_cast<int>(n % 2);
    d.labels.push_back(label);
    for (std::size_t y = 0; y < 8; ++y)
      for (std::size_t x = 0; x < 8; ++x) {
        const bool left = x < 4;
        d.images(n, 0, y, x) = ((left == (label == 0)) ? 0.5 : -0.5) + noise(rng);
      }
  }
  return d;
}

NetworkConfig toy_config() {
  return NetworkConfig::parse(R"(
[input]
channels = 1
height = 8
width = 8
[comp_conv]
features = 2
kernel = 5x5
components = 2x2
[relu]
[fully_connected]
outputs = 2
[softmax_loss]
)");
}

}  // namespace

TEST_CASE("adadelta: zero gradient and zero momentum leaves parameters") {
  std::vector<double> p{1.0, -2.0};
  AdaDeltaState s(2);
  adadelta_step(p, std::vector<double>{0.0, 0.0}, s);
  CHECK(p == std::vector<double>{1.0, -2.0});
}

TEST_CASE("adadelta: zero gradient applies pure momentum") {
  std::vector<double> p{1.0};
  AdaDeltaState s(1);
  s.prev_update[0] = 0.25;
  adadelta_step(p, std::vector<double>{0.0}, s);
  CHECK(p[0] == doctest::Approx(1.0 + 0.8 * 0.25).epsilon(1e-15));
}

TEST_CASE("adadelta: two hand-evaluated steps") {
  std::vector<double> p{1.0};
  AdaDeltaState s(1);
  adadelta_step(p, std::vector<double>{0.5}, s);
  // delta = -sqrt(eps) / sqrt((1 - rho) g^2 + eps) * g
  const double first = -std::sqrt(1e-6) / std::sqrt(0.05 * 0.25 + 1e-6) * 0.5;
  CHECK(first == doctest::Approx(-0.0044719570802937885).epsilon(1e-15));
  CHECK(p[0] == doctest::Approx(0.9955280429197062).epsilon(1e-15));
  adadelta_step(p, std::vector<double>{-0.2}, s);
  CHECK(s.prev_update[0] == doctest::Approx(-0.0011764993074957538).epsilon(1e-14));
  CHECK(p[0] == doctest::Approx(0.9943515436122105).epsilon(1e-15));
  CHECK_THROWS_AS(adadelta_step(p, std::vector<double>{1.0, 2.0}, s), InvalidInput);
}

TEST_CASE("adadelta is deterministic") {
  std::vector<double> a{0.3, 0.1}, b = a;
  AdaDeltaState sa(2), sb(2);
  for (int i = 0; i < 5; ++i) {
    const std::vector<double> g{std::sin(i * 1.0), std::cos(i * 1.0)};
    adadelta_step(a, g, sa);
    adadelta_step(b, g, sb);
  }
  CHECK(a == b);
  CHECK(sa.acc_grad == sb.acc_grad);
}

TEST_CASE("batch sampler visits every index once per epoch") {
  BatchSampler s(10, 4);
  std::multiset<std::size_t> seen;
  for (int i = 0; i < 5; ++i)
    for (std::size_t v : s.next(2)) seen.insert(v);
  for (std::size_t i = 0; i < 10; ++i) CHECK(seen.count(i) == 1);
  BatchSampler a(50, 1), b(50, 1);
  CHECK(a.next(50) == b.next(50));
  CHECK(a.next(50) != BatchSampler(50, 1).next(50));
}

TEST_CASE("training separates a linearly separable toy problem") {
  const LabeledDataset train_set = halves(200, 1);
  const LabeledDataset test_set = halves(100, 2);
  Network net(toy_config(), 3);
  TrainConfig tc;
  tc.batch_size = 20;
  tc.iterations = 200;
  tc.eval_interval = 100;
  const TrainHistory h = train(net, train_set, &test_set, tc);
  CHECK(h.rows.size() == 200);
  const Evaluation e = net.evaluate(train_set.images, train_set.labels);
  CHECK(e.accuracy >= 0.99);
  REQUIRE(h.last_evaluation().has_value());
  CHECK(*h.last_evaluation()->test_accuracy >= 0.99);
  CHECK_NOTHROW(net.validate_constraints());
}

TEST_CASE("frozen training stays at chance loss") {
  LabeledDataset d = halves(200, 5);
  std::mt19937_64 rng(6);
  for (int& l : d.labels) l = static_cast<int>(rng() % 2);
  Network net(toy_config(), 7);
  const std::vector<double> before = net.parameters();
  TrainConfig tc;
  tc.batch_size = 20;
  tc.iterations = 50;
  tc.frozen = true;
  const TrainHistory h = train(net, d, nullptr, tc);
  double mean = 0.0;
  for (const auto& r : h.rows) mean += r.train_loss / static_cast<double>(h.rows.size());
  CHECK(net.parameters() == before);
  CHECK(std::abs(mean - std::log(2.0)) <= 0.1);
}

TEST_CASE("training is bit-reproducible") {
  const LabeledDataset d = halves(60, 8);
  auto run = [&] {
    Network net(toy_config(), 11);
    TrainConfig tc;
    tc.batch_size = 10;
    tc.iterations = 30;
    tc.eval_interval = 10;
    const TrainHistory h = train(net, d, &d, tc);
    std::ostringstream csv;
    h.write_csv(csv);
    return std::make_pair(csv.str(), net.parameters());
  };
  const auto a = run();
  const auto b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

TEST_CASE("history csv layout") {
  TrainHistory h;
  h.rows.push_back({1, 0.5, std::nullopt, std::nullopt});
  h.rows.push_back({2, 0.25, 0.75, 0.5});
  std::ostringstream out;
  h.write_csv(out);
  CHECK(out.str() == "iteration,train_loss,test_loss,test_accuracy\n1,0.5,,\n2,0.25,0.75,0.5\n");
  CHECK(h.last_evaluation()->iteration == 2);
}

TEST_CASE("train rejects mismatched data") {
  Network net(toy_config(), 1);
  LabeledDataset d;
  d.images = Tensor4(4, 1, 9, 8);
  d.labels = {0, 1, 0, 1};
  d.class_count = 2;
  CHECK_THROWS_AS(train(net, d, nullptr, TrainConfig{}), InvalidInput);
}

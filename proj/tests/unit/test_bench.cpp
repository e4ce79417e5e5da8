#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sstream>

#include "dcn/bench.hpp"
#include "dcn/error.hpp"

using namespace dcn;

TEST_CASE("relative deviation") {
  Tensor4 a(1, 1, 1, 3), b(1, 1, 1, 3);
  a.data()[0] = 2.0;
  a.data()[1] = -4.0;
  b.data()[0] = 2.0;
  b.data()[1] = -4.0;
  b.data()[2] = 0.01;
  CHECK(max_relative_deviation(a, b) == doctest::Approx(0.0025));
  CHECK(max_relative_deviation(a, a) == 0.0);
  CHECK_THROWS_AS(max_relative_deviation(a, Tensor4(1, 1, 3, 1)), InvalidInput);
}

TEST_CASE("bench rows") {
  BenchConfig c;
  c.kernels = {5, 9};
  c.features = 2;
  c.channels = 2;
  c.map_width = 20;
  c.map_height = 16;
  c.repeats = 3;
  const auto rows = run_bench(c);
  REQUIRE(rows.size() == 2);
  for (const auto& r : rows) {
    CHECK(r.max_rel_diff <= 1e-10);
    CHECK(r.t_direct > 0.0);
    CHECK(r.t_separable > 0.0);
    CHECK(r.speedup == r.t_direct / r.t_separable);
    CHECK(r.components == 4);
  }
  std::ostringstream csv;
  write_bench_csv(rows, csv);
  std::istringstream in(csv.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "k,components,t_direct,t_separable,speedup");
  std::getline(in, line);
  CHECK(line.rfind("5,4,", 0) == 0);
  c.kernels = {3};
  CHECK_THROWS_AS(run_bench(c), InvalidInput);
  c.kernels = {21};
  CHECK_THROWS_AS(run_bench(c), InvalidInput);
}

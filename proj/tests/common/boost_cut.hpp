#pragma once

#include <boost/graph/adjacency_list.hpp>
#include <boost/graph/edmonds_karp_max_flow.hpp>
#include <cmath>

#include "dcn/viz.hpp"

namespace testutil {

// Independent oracle: Boost's BFS augmenting-path max flow on the same
// energy graph.
inline double boost_cut(const dcn::DistributionMap& m) {
  using namespace boost;
  using Traits = adjacency_list_traits<vecS, vecS, directedS>;
  using Graph = adjacency_list<
      vecS, vecS, directedS, no_property,
      property<edge_capacity_t, double, property<edge_residual_capacity_t, double, property<edge_reverse_t, Traits::edge_descriptor>>>>;
  const std::size_t h = m.pos.rows(), w = m.pos.cols(), n = h * w;
  Graph g(n + 2);
  auto cap = get(edge_capacity, g);
  auto rev = get(edge_reverse, g);
  auto add = [&](std::size_t u, std::size_t v, double c) {
    const auto e = add_edge(u, v, g).first;
    const auto r = add_edge(v, u, g).first;
    cap[e] = c;
    cap[r] = 0.0;
    rev[e] = r;
    rev[r] = e;
  };
  auto d = [&](std::size_t y, std::size_t x) { return m.pos(y, x) - m.neg(y, x); };
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t p = y * w + x;
      add(n, p, m.neg(y, x));
      add(p, n + 1, m.pos(y, x));
      if (x + 1 < w) {
        const double c = std::pow(d(y, x) - d(y, x + 1), 2);
        add(p, p + 1, c);
        add(p + 1, p, c);
      }
      if (y + 1 < h) {
        const double c = std::pow(d(y, x) - d(y + 1, x), 2);
        add(p, p + w, c);
        add(p + w, p, c);
      }
    }
  return edmonds_karp_max_flow(g, n, n + 1);
}

}  // namespace testutil

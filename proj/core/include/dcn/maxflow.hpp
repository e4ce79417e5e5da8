#pragma once

#include <cstddef>
#include <vector>

namespace dcn {

/// Max-flow / min-cut on a directed graph with real capacities (Dinic:
/// BFS level graph + blocking flow).
class MaxFlow {
 public:
  explicit MaxFlow(std::size_t nodes);

  /// Edge u -> v with capacity `cap`, and v -> u with `reverse_cap`.
  void add_edge(std::size_t u, std::size_t v, double cap, double reverse_cap = 0.0);

  double solve(std::size_t source, std::size_t sink);

  /// After solve(): true for nodes reachable from the source in the
  /// residual graph (the source side of a minimum cut).
  std::vector<bool> source_side() const;

  std::size_t node_count() const { return head_.size(); }

 private:
  struct Edge {
    std::size_t to;
    std::size_t next;
    double cap;
  };
  bool build_levels(std::size_t source, std::size_t sink);
  double push(std::size_t u, std::size_t sink, double limit);
  bool residual(const Edge& e) const { return e.cap > tolerance_; }

  std::vector<Edge> edges_;
  std::vector<std::size_t> head_;
  std::vector<std::size_t> iter_;
  std::vector<int> level_;
  std::size_t source_ = 0;
  double tolerance_ = 0.0;
};

}  // namespace dcn

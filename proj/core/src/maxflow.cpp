#include "dcn/maxflow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

#include "dcn/error.hpp"

namespace dcn {
namespace {
constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
}

MaxFlow::MaxFlow(std::size_t nodes) : head_(nodes, kNone), iter_(nodes), level_(nodes) {}

void MaxFlow::add_edge(std::size_t u, std::size_t v, double cap, double reverse_cap) {
  if (u >= head_.size() || v >= head_.size()) throw InvalidInput("MaxFlow: node out of range");
  if (!(cap >= 0.0) || !(reverse_cap >= 0.0)) throw InvalidInput("MaxFlow: capacities must be >= 0");
  // Paired edges sit at indices 2k and 2k+1, so e ^ 1 is the reverse.
  edges_.push_back({v, head_[u], cap});
  head_[u] = edges_.size() - 1;
  edges_.push_back({u, head_[v], reverse_cap});
  head_[v] = edges_.size() - 1;
}

bool MaxFlow::build_levels(std::size_t source, std::size_t sink) {
  std::fill(level_.begin(), level_.end(), -1);
  std::queue<std::size_t> q;
  level_[source] = 0;
  q.push(source);
  while (!q.empty()) {
    const std::size_t u = q.front();
    q.pop();
    for (std::size_t e = head_[u]; e != kNone; e = edges_[e].next) {
      if (residual(edges_[e]) && level_[edges_[e].to] < 0) {
        level_[edges_[e].to] = level_[u] + 1;
        q.push(edges_[e].to);
      }
    }
  }
  return level_[sink] >= 0;
}

double MaxFlow::push(std::size_t u, std::size_t sink, double limit) {
  if (u == sink) return limit;
  for (std::size_t& e = iter_[u]; e != kNone; e = edges_[e].next) {
    Edge& edge = edges_[e];
    if (!residual(edge) || level_[edge.to] != level_[u] + 1) continue;
    const double pushed = push(edge.to, sink, std::min(limit, edge.cap));
    if (pushed > 0.0) {
      edge.cap -= pushed;
      edges_[e ^ 1].cap += pushed;
      return pushed;
    }
  }
  return 0.0;
}

double MaxFlow::solve(std::size_t source, std::size_t sink) {
  if (source >= head_.size() || sink >= head_.size() || source == sink) throw InvalidInput("MaxFlow: bad terminals");
  source_ = source;
  double max_cap = 0.0;
  for (const auto& e : edges_) max_cap = std::max(max_cap, e.cap);
  tolerance_ = max_cap * 1e-14;
  double flow = 0.0;
  while (build_levels(source, sink)) {
    std::copy(head_.begin(), head_.end(), iter_.begin());
    for (;;) {
      const double f = push(source, sink, std::numeric_limits<double>::infinity());
      if (f <= 0.0) break;
      flow += f;
    }
  }
  return flow;
}

std::vector<bool> MaxFlow::source_side() const {
  std::vector<bool> seen(head_.size(), false);
  std::queue<std::size_t> q;
  seen[source_] = true;
  q.push(source_);
  while (!q.empty()) {
    const std::size_t u = q.front();
    q.pop();
    for (std::size_t e = head_[u]; e != kNone; e = edges_[e].next) {
      if (residual(edges_[e]) && !seen[edges_[e].to]) {
        seen[edges_[e].to] = true;
        q.push(edges_[e].to);
      }
    }
  }
  return seen;
}

}  // namespace dcn

#include "dcn/prune.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "dcn/error.hpp"

namespace dcn {

MergeResult merge_overlapping(const CompFilterBank& bank, double tau) {
  if (!(tau > 0.0)) throw InvalidInput("merge_overlapping: tau must be > 0");
  auto groups = bank.groups();
  std::size_t removed = 0;
  for (auto& group : groups) {
    for (;;) {
      std::size_t best_i = 0, best_j = 0;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < group.size(); ++i) {
        for (std::size_t j = i + 1; j < group.size(); ++j) {
          const double d = std::hypot(group[i].mean.x - group[j].mean.x, group[i].mean.y - group[j].mean.y);
          if (d < tau * std::max(group[i].sigma, group[j].sigma) && d < best) {
            best = d;
            best_i = i;
            best_j = j;
          }
        }
      }
      if (!std::isfinite(best)) break;

      const GaussianComponent a = group[best_i];
      const GaussianComponent b = group[best_j];
      const double wa = std::abs(a.weight);
      const double wb = std::abs(b.weight);
      group.erase(group.begin() + static_cast<std::ptrdiff_t>(best_j));
      if (wa + wb == 0.0) {
        if (group.size() > 1) {
          group.erase(group.begin() + static_cast<std::ptrdiff_t>(best_i));
          removed += 2;
        } else {
          removed += 1;  // keep one zero-weight component in place
        }
        continue;
      }
      GaussianComponent& m = group[best_i];
      m.weight = a.weight + b.weight;
      m.mean = {(wa * a.mean.x + wb * b.mean.x) / (wa + wb), (wa * a.mean.y + wb * b.mean.y) / (wa + wb)};
      m.sigma = (wa * a.sigma + wb * b.sigma) / (wa + wb);
      removed += 1;
    }
  }
  return {CompFilterBank(bank.features(), bank.channels(), bank.geometry(), std::move(groups), bank.bias()), removed};
}

DiscardResult discard_small(const CompFilterBank& bank, double fraction) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw InvalidInput("discard_small: fraction must be in [0, 1)");
  double max_weight = 0.0;
  for (const auto& c : bank.components()) max_weight = std::max(max_weight, std::abs(c.weight));
  const double threshold = fraction * max_weight;

  auto groups = bank.groups();
  std::size_t removed = 0;
  for (auto& group : groups) {
    std::size_t largest = 0;
    for (std::size_t i = 1; i < group.size(); ++i) {
      if (std::abs(group[i].weight) > std::abs(group[largest].weight)) largest = i;
    }
    const GaussianComponent keep = group[largest];
    const std::size_t before = group.size();
    std::erase_if(group, [&](const GaussianComponent& c) {
      return std::abs(c.weight) < threshold || (fraction > 0.0 && c.weight == 0.0);
    });
    if (group.empty()) group.push_back(keep);
    removed += before - group.size();
  }
  return {CompFilterBank(bank.features(), bank.channels(), bank.geometry(), std::move(groups), bank.bias()), removed};
}

CompFilterBank prune_bank(const CompFilterBank& bank, double tau, double fraction, PruneReport& report) {
  report.components_before = bank.component_count();
  MergeResult merged = merge_overlapping(bank, tau);
  DiscardResult kept = discard_small(merged.bank, fraction);
  report.merged = merged.removed;
  report.discarded = kept.removed;
  report.components_after = kept.bank.component_count();
  return std::move(kept.bank);
}

double PruneReport::removed_fraction() const {
  if (components_before == 0) return 0.0;
  return static_cast<double>(merged + discarded) / static_cast<double>(components_before);
}

std::string PruneReport::to_text() const {
  std::ostringstream out;
  out.precision(6);
  out << "layer " << layer << " pruning\n"
      << "  components before: " << components_before << "\n"
      << "  merged:            " << merged << "\n"
      << "  discarded:         " << discarded << "\n"
      << "  components after:  " << components_after << " (" << 100.0 * removed_fraction() << "% removed)\n"
      << "  loss before:       " << loss_before << "\n"
      << "  loss after:        " << loss_after << "\n";
  return out.str();
}

std::string PruneReport::csv_header() {
  return "layer,components_before,merged,discarded,components_after,loss_before,loss_after";
}

std::string PruneReport::to_csv_row() const {
  std::ostringstream out;
  out.precision(17);
  out << layer << ',' << components_before << ',' << merged << ',' << discarded << ',' << components_after << ','
      << loss_before << ',' << loss_after;
  return out.str();
}

}  // namespace dcn

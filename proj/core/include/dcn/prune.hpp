#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>

#include "dcn/comp_layer.hpp"

namespace dcn {

inline constexpr double kDefaultMergeTau = 0.5;
inline constexpr double kDefaultDiscardFraction = 0.02;

struct MergeResult {
  CompFilterBank bank;
  std::size_t removed = 0;  // components eliminated by merging
};

/// Within each (feature, channel) group, repeatedly merges the closest pair
/// whose means are closer than tau * max(sigma_i, sigma_j). The merged
/// component sums the weights and takes |w|-weighted averages of mean and
/// sigma; a pair with |w_i| + |w_j| == 0 is dropped (one zero component
/// survives if the group would otherwise be empty).
MergeResult merge_overlapping(const CompFilterBank& bank, double tau = kDefaultMergeTau);

struct DiscardResult {
  CompFilterBank bank;
  std::size_t removed = 0;
};

/// Removes components with |w| < fraction * max|w| (max over the whole
/// layer), and zero-weight ones whenever fraction > 0. A group that would
/// be emptied keeps its largest component.
DiscardResult discard_small(const CompFilterBank& bank, double fraction = kDefaultDiscardFraction);

struct PruneReport {
  std::size_t layer = 0;  // 1-based compositional layer ordinal
  std::size_t components_before = 0;
  std::size_t merged = 0;
  std::size_t discarded = 0;
  std::size_t components_after = 0;
  double loss_before = 0.0;
  double loss_after = 0.0;

  double removed_fraction() const;
  std::string to_text() const;
  static std::string csv_header();
  std::string to_csv_row() const;
};

/// Merge followed by discard; fills the count fields of the report.
CompFilterBank prune_bank(const CompFilterBank& bank, double tau, double fraction, PruneReport& report);

}  // namespace dcn

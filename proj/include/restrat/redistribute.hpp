#pragma once

// Estimator redistribution: remap shrunken model scores so that the pooled
// sample's bin proportions match a national target distribution.

#include <span>
#include <vector>

#include "restrat/core.hpp"

namespace restrat {

/// Source-side bin boundaries aligned one-to-one with the target bins.
struct SourceBinBoundaries {
  Variable variable = Variable::Age;
  std::vector<Bin> source;  // [min^s_l, max^s_l); last bin closed
  std::vector<Bin> target;  // [min^t_l, max^t_l)
  /// Bins whose realized mass exceeds the target by more than one value
  /// (tied scores straddling a boundary cannot be split).
  std::vector<std::size_t> overshoot_bins;
};

struct RedistributionOptions {
  /// Boundary growth step in native units; <= 0 selects range / 10,000.
  double step = 0.0;
};

/// Grow each source bin from the end of the previous one in fixed steps
/// until it holds the target bin's share of the scores, then place the
/// boundary exactly between the order statistics inside the final step.
SourceBinBoundaries build_source_bins(std::span<const double> scores, const NationalTarget& target,
                                      const RedistributionOptions& options = {});

/// Linear map of d_s from its source bin onto the matching target bin.
double redistribute_value(double d_s, Bin source_bin, Bin target_bin);

/// Map every score through the source bins onto the target bins.
std::vector<double> redistribute_scores(std::span<const double> scores, const SourceBinBoundaries& bins);

/// Redistribute one variable of the pooled sample; returns new individuals.
std::vector<Individual> redistribute_all(const std::vector<Individual>& individuals, Variable variable,
                                         const NationalTarget& target,
                                         const RedistributionOptions& options = {});

}  // namespace restrat

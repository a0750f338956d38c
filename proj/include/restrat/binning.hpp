#pragma once

// Bin occupancy counting and adaptive merging of sparse adjacent bins.

#include <cstdint>
#include <span>
#include <vector>

#include "restrat/core.hpp"

namespace restrat {

struct BinCounts {
  Partition partition;
  std::vector<std::uint64_t> counts;
  /// For each bin, the [first, last] indices of the original bins it covers.
  std::vector<std::pair<std::size_t, std::size_t>> sources;

  std::uint64_t total() const;
};

/// Count values per bin (out-of-range values fold into the edge bins).
BinCounts count_values(std::span<const double> values, const Partition& partition);
BinCounts count_per_bin(std::span<const Individual> individuals, const Partition& partition);

/// Repeatedly merge the leftmost minimum-count bin into its smaller adjacent
/// neighbour (left on ties) until every bin holds at least `min_count`
/// observations or one bin remains.
BinCounts adaptive_bin(const BinCounts& counts, std::uint64_t min_count);

/// Re-sum population shares over a coarsened partition.
MarginTable project_margins(const MarginTable& margins, const Partition& merged);

}  // namespace restrat

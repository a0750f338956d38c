#include "restrat/binning.hpp"

#include <algorithm>
#include <numeric>

namespace restrat {

std::uint64_t BinCounts::total() const { return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}); }

BinCounts count_values(std::span<const double> values, const Partition& partition) {
  BinCounts out;
  out.partition = partition;
  out.counts.assign(partition.size(), 0);
  for (std::size_t l = 0; l < partition.size(); ++l) out.sources.emplace_back(l, l);
  for (double v : values) ++out.counts[partition.bin_index(v)];
  return out;
}

BinCounts count_per_bin(std::span<const Individual> individuals, const Partition& partition) {
  std::vector<double> values;
  values.reserve(individuals.size());
  for (const auto& ind : individuals) values.push_back(ind.value(partition.variable()));
  return count_values(values, partition);
}

BinCounts adaptive_bin(const BinCounts& counts, std::uint64_t min_count) {
  auto bins = counts.partition.bins();
  auto c = counts.counts;
  auto sources = counts.sources;
  if (sources.size() != c.size()) {
    sources.clear();
    for (std::size_t l = 0; l < c.size(); ++l) sources.emplace_back(l, l);
  }

  while (c.size() > 1) {
    auto min_it = std::min_element(c.begin(), c.end());  // leftmost minimum
    if (*min_it >= min_count) break;
    const auto i = static_cast<std::size_t>(min_it - c.begin());
    std::size_t left;  // merge bins left and left + 1
    if (i == 0) {
      left = 0;
    } else if (i + 1 == c.size()) {
      left = i - 1;
    } else {
      left = (c[i - 1] <= c[i + 1]) ? i - 1 : i;
    }
    c[left] += c[left + 1];
    bins[left].hi = bins[left + 1].hi;
    sources[left].second = sources[left + 1].second;
    c.erase(c.begin() + static_cast<std::ptrdiff_t>(left) + 1);
    bins.erase(bins.begin() + static_cast<std::ptrdiff_t>(left) + 1);
    sources.erase(sources.begin() + static_cast<std::ptrdiff_t>(left) + 1);
  }

  BinCounts out;
  out.partition = Partition(counts.partition.variable(), std::move(bins));
  out.counts = std::move(c);
  out.sources = std::move(sources);
  return out;
}

MarginTable project_margins(const MarginTable& margins, const Partition& merged) {
  if (merged.variable() != margins.variable()) throw Error("merged partition is over a different variable");
  const auto& orig = margins.partition.bins();
  MarginTable out;
  out.community = margins.community;
  out.partition = merged;
  std::size_t j = 0;
  for (const auto& bin : merged.bins()) {
    if (j >= orig.size() || orig[j].lo != bin.lo)
      throw Error("merged partition is not a coarsening of the margin partition for community " +
                  margins.community);
    double sum = 0.0;
    const std::size_t first = j;
    while (j < orig.size() && orig[j].hi <= bin.hi) sum += margins.percentages[j++];
    if (j == first || orig[j - 1].hi != bin.hi)
      throw Error("merged partition is not a coarsening of the margin partition for community " +
                  margins.community);
    out.percentages.push_back(sum);
  }
  if (j != orig.size())
    throw Error("merged partition does not cover the margin partition for community " + margins.community);
  return out;
}

}  // namespace restrat

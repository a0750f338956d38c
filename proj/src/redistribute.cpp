#include "restrat/redistribute.hpp"

#include <algorithm>
#include <cmath>

namespace restrat {

namespace {

// Number of sorted scores strictly below x.
std::size_t count_below(const std::vector<double>& sorted, double x) {
  return static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), x) - sorted.begin());
}

}  // namespace

SourceBinBoundaries build_source_bins(std::span<const double> scores, const NationalTarget& target,
                                      const RedistributionOptions& options) {
  if (scores.empty()) throw Error("redistribution needs at least one score");
  if (!target.valid()) throw Error("national target for " + std::string(to_string(target.variable())) +
                                   " does not sum to one");
  std::vector<double> sorted(scores.begin(), scores.end());
  for (double s : sorted)
    if (!std::isfinite(s)) throw Error("redistribution scores contain a non-finite value");
  std::sort(sorted.begin(), sorted.end());

  const Variable var = target.variable();
  const auto& range = info(var).valid_range;
  const double step = options.step > 0.0 ? options.step : (range.max - range.min) / 10000.0;
  const auto& tbins = target.partition.bins();
  const std::size_t n = sorted.size();
  const std::size_t nbins = tbins.size();

  SourceBinBoundaries out;
  out.variable = var;
  out.target = tbins;

  double cumulative = 0.0;
  // scores below the target floor (e.g. estimated ages under 18) belong to the first bin
  double lo = std::min(tbins.front().lo, sorted.front());
  for (std::size_t l = 0; l < nbins; ++l) {
    cumulative += target.percentages[l];
    const std::size_t already = count_below(sorted, lo);
    std::size_t need = (l + 1 == nbins) ? n
                                        : static_cast<std::size_t>(std::llround(cumulative * static_cast<double>(n)));
    need = std::min(need, n);

    double hi = lo;
    if (l + 1 == nbins) {
      // the closed top bin takes every remaining score
      std::size_t m = 1;
      while (lo + static_cast<double>(m) * step <= sorted.back()) ++m;
      hi = lo + static_cast<double>(m) * step;
    } else if (need > already) {
      std::size_t m = 1;
      while (count_below(sorted, lo + static_cast<double>(m) * step) < need) ++m;
      const double grid_hi = lo + static_cast<double>(m) * step;
      // first score strictly above the need-th order statistic, inside the last step
      auto next = std::upper_bound(sorted.begin(), sorted.end(), sorted[need - 1]);
      hi = (next == sorted.end()) ? grid_hi : std::min(*next, grid_hi);
      const std::size_t realized = count_below(sorted, hi);
      if (realized > need) out.overshoot_bins.push_back(l);
    }
    out.source.push_back({lo, hi});
    lo = hi;
  }
  return out;
}

double redistribute_value(double d_s, Bin source_bin, Bin target_bin) {
  const double src_width = source_bin.hi - source_bin.lo;
  if (!(src_width > 0.0)) throw Error("redistribution source bin has zero width");
  if (!(target_bin.hi > target_bin.lo)) throw Error("redistribution target bin has zero width");
  if (d_s < source_bin.lo || d_s > source_bin.hi) throw Error("score lies outside its source bin");
  const double frac = (d_s - source_bin.lo) / src_width;
  return target_bin.lo + frac * (target_bin.hi - target_bin.lo);
}

std::vector<double> redistribute_scores(std::span<const double> scores, const SourceBinBoundaries& bins) {
  std::vector<double> out;
  out.reserve(scores.size());
  const auto& src = bins.source;
  const auto& tgt = bins.target;
  for (double d : scores) {
    if (d < src.front().lo) {
      out.push_back(tgt.front().lo);
      continue;
    }
    if (d >= src.back().hi) {
      out.push_back(tgt.back().hi);
      continue;
    }
    // zero-width bins never satisfy lo <= d < hi, so upper_bound skips them
    auto it = std::upper_bound(src.begin(), src.end(), d, [](double v, const Bin& b) { return v < b.hi; });
    const auto l = static_cast<std::size_t>(it - src.begin());
    double mapped = redistribute_value(d, src[l], tgt[l]);
    if (l + 1 < tgt.size() && mapped >= tgt[l].hi) mapped = std::nextafter(tgt[l].hi, tgt[l].lo);
    out.push_back(mapped);
  }
  return out;
}

std::vector<Individual> redistribute_all(const std::vector<Individual>& individuals, Variable variable,
                                         const NationalTarget& target, const RedistributionOptions& options) {
  if (target.variable() != variable) throw Error("national target variable does not match");
  if (individuals.empty()) return {};
  std::vector<double> scores;
  scores.reserve(individuals.size());
  for (const auto& ind : individuals) scores.push_back(ind.value(variable));
  const auto bins = build_source_bins(scores, target, options);
  const auto mapped = redistribute_scores(scores, bins);
  std::vector<Individual> out = individuals;
  for (std::size_t i = 0; i < out.size(); ++i) out[i].value(variable) = mapped[i];
  return out;
}

}  // namespace restrat

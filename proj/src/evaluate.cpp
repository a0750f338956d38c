#include "restrat/evaluate.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <map>
#include <numeric>

namespace restrat {

namespace {

void check_aligned(std::span<const double> a, std::span<const double> b, std::size_t min_len) {
  if (a.size() != b.size()) throw Error("metric inputs have different lengths");
  if (a.size() < min_len) throw Error("metric inputs need at least " + std::to_string(min_len) + " values");
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!std::isfinite(a[i]) || !std::isfinite(b[i])) throw Error("metric inputs contain non-finite values");
}

}  // namespace

double pearson_r(std::span<const double> pred, std::span<const double> actual) {
  check_aligned(pred, actual, 3);
  const double n = static_cast<double>(pred.size());
  const double mp = std::accumulate(pred.begin(), pred.end(), 0.0) / n;
  const double ma = std::accumulate(actual.begin(), actual.end(), 0.0) / n;
  double spp = 0.0, saa = 0.0, spa = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double dp = pred[i] - mp, da = actual[i] - ma;
    spp += dp * dp;
    saa += da * da;
    spa += dp * da;
  }
  if (spp <= 0.0 || saa <= 0.0) throw Error("pearson r undefined: zero variance");
  return std::clamp(spa / std::sqrt(spp * saa), -1.0, 1.0);
}

double r_squared(std::span<const double> pred, std::span<const double> actual) {
  const double r = pearson_r(pred, actual);
  return r * r;
}

double rmse(std::span<const double> pred, std::span<const double> actual) {
  check_aligned(pred, actual, 1);
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - actual[i]) * (pred[i] - actual[i]);
  return std::sqrt(s / static_cast<double>(pred.size()));
}

PairedTest paired_residual_test(std::span<const double> residuals_a, std::span<const double> residuals_b) {
  check_aligned(residuals_a, residuals_b, 3);
  const std::size_t n = residuals_a.size();
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = std::abs(residuals_a[i]) - std::abs(residuals_b[i]);
  PairedTest t;
  t.mean_difference = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double x : d) ss += (x - t.mean_difference) * (x - t.mean_difference);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (!(sd > 0.0)) {
    t.degenerate = true;
    t.p_value = 1.0;
    return t;
  }
  t.t_statistic = t.mean_difference / (sd / std::sqrt(static_cast<double>(n)));
  boost::math::students_t dist(static_cast<double>(n - 1));
  t.p_value = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t.t_statistic))));
  return t;
}

double kost_mcdermott_covariance(double rho) {
  return 3.263 * rho + 0.710 * rho * rho + 0.027 * rho * rho * rho;
}

double combine_dependent_pvalues(std::span<const double> p_values, const Eigen::MatrixXd& correlations) {
  const auto k = static_cast<Eigen::Index>(p_values.size());
  if (k == 0) throw Error("no p-values to combine");
  if (correlations.rows() != k || correlations.cols() != k) throw Error("correlation matrix size mismatch");
  double stat = 0.0;
  for (double p : p_values) {
    if (!(p > 0.0 && p <= 1.0)) throw Error("p-values must lie in (0, 1]");
    stat += -2.0 * std::log(p);
  }
  double cov_sum = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) {
    if (std::abs(correlations(i, i) - 1.0) > 1e-12) throw Error("correlation matrix needs a unit diagonal");
    for (Eigen::Index j = i + 1; j < k; ++j) {
      const double rho = correlations(i, j);
      if (std::abs(rho - correlations(j, i)) > 1e-12) throw Error("correlation matrix is not symmetric");
      if (std::abs(rho) > 1.0) throw Error("correlation magnitude exceeds 1");
      cov_sum += kost_mcdermott_covariance(rho);
    }
  }
  const double expectation = 2.0 * static_cast<double>(k);
  const double variance = 4.0 * static_cast<double>(k) + 2.0 * cov_sum;
  if (!(variance > 0.0)) throw Error("combined statistic has non-positive variance");
  const double scale = variance / (2.0 * expectation);
  const double dof = 2.0 * expectation * expectation / variance;
  boost::math::chi_squared dist(dof);
  return boost::math::cdf(boost::math::complement(dist, stat / scale));
}

std::string_view to_string(Direction d) {
  switch (d) {
    case Direction::SignificantIncrease: return "+";
    case Direction::SignificantDecrease: return "-";
    case Direction::NotSignificant: return "ns";
  }
  return "?";
}

Direction classify(double baseline_metric, double corrected_metric, double p_value, double alpha) {
  if (p_value >= alpha || corrected_metric == baseline_metric) return Direction::NotSignificant;
  return corrected_metric > baseline_metric ? Direction::SignificantIncrease : Direction::SignificantDecrease;
}

// ---------------------------------------------------------------------------

const VariableBias* BiasReport::find(Variable v) const {
  for (const auto& e : entries)
    if (e.variable == v) return &e;
  return nullptr;
}

double imputed_midpoint(const Partition& partition, std::size_t bin) {
  const auto& b = partition.bins().at(bin);
  if (bin + 1 == partition.size() && !is_dichotomous(partition.variable()) && partition.size() > 1)
    return 1.5 * b.lo;
  return 0.5 * (b.lo + b.hi);
}

BiasReport quantify_bias(const std::vector<Individual>& individuals, const std::vector<WeightAssignment>& weights,
                         const std::vector<MarginTable>& margins, VariableSet variables) {
  std::map<CommunityId, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < individuals.size(); ++i) members[individuals[i].community].push_back(i);

  std::map<CommunityId, const WeightAssignment*> by_community;
  for (const auto& w : weights) by_community[w.community] = &w;

  BiasReport report;
  for (auto v : variables.list()) {
    VariableBias entry{v};
    double total = 0.0;
    for (const auto& [community, idx] : members) {
      const MarginTable* margin = nullptr;
      for (const auto& m : margins)
        if (m.community == community && m.variable() == v) margin = &m;
      if (margin == nullptr) {
        ++entry.skipped;
        report.warnings.push_back("no census margins for " + std::string(to_string(v)) + " in community " + community);
        continue;
      }

      std::vector<double> psi(idx.size(), 1.0);
      if (auto it = by_community.find(community); it != by_community.end()) {
        std::map<IndividualId, double> lookup(it->second->weights.begin(), it->second->weights.end());
        for (std::size_t j = 0; j < idx.size(); ++j) {
          auto w = lookup.find(individuals[idx[j]].id);
          if (w == lookup.end()) throw Error("no weight for individual " + individuals[idx[j]].id);
          psi[j] = w->second;
        }
      }
      const double wsum = std::accumulate(psi.begin(), psi.end(), 0.0);
      if (!(wsum > 0.0)) {
        ++entry.skipped;
        report.warnings.push_back("community " + community + " has zero total weight");
        continue;
      }

      if (is_dichotomous(v)) {
        const std::size_t one = margin->partition.bin_index(1.0);
        const double census = margin->percentages[one];
        double share = 0.0;
        for (std::size_t j = 0; j < idx.size(); ++j) share += psi[j] * dichotomize(individuals[idx[j]].value(v));
        share /= wsum;
        total += std::abs(census - share);
      } else {
        double cmean = 0.0;
        for (std::size_t l = 0; l < margin->partition.size(); ++l)
          cmean += margin->percentages[l] * imputed_midpoint(margin->partition, l);
        double cvar = 0.0;
        for (std::size_t l = 0; l < margin->partition.size(); ++l) {
          const double d = imputed_midpoint(margin->partition, l) - cmean;
          cvar += margin->percentages[l] * d * d;
        }
        double smean = 0.0;
        for (std::size_t j = 0; j < idx.size(); ++j) smean += psi[j] * individuals[idx[j]].value(v);
        smean /= wsum;
        double svar = 0.0;
        for (std::size_t j = 0; j < idx.size(); ++j) {
          const double d = individuals[idx[j]].value(v) - smean;
          svar += psi[j] * d * d;
        }
        svar /= wsum;
        const double pooled = std::sqrt(0.5 * (cvar + svar));
        if (!(pooled > 0.0)) {
          ++entry.skipped;
          report.warnings.push_back("pooled standard deviation is zero for " + std::string(to_string(v)) +
                                    " in community " + community);
          continue;
        }
        total += std::abs(cmean - smean) / pooled;
      }
      ++entry.communities;
    }
    entry.bias = entry.communities > 0 ? total / static_cast<double>(entry.communities) : 0.0;
    report.entries.push_back(entry);
  }
  return report;
}

}  // namespace restrat

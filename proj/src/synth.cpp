#include "restrat/synth.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <numeric>
#include <random>

namespace restrat {

namespace {

std::uint64_t split_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t kFeatureStream = 0xFEA7;
constexpr std::uint64_t kOutcomeStream = 0x0C7C;

std::string padded(const char* prefix, std::uint64_t i, int width) {
  auto digits = std::to_string(i);
  if (static_cast<int>(digits.size()) < width) digits.insert(0, static_cast<std::size_t>(width) - digits.size(), '0');
  return prefix + digits;
}

double truncated_normal(std::mt19937_64& rng, double mean, double sd, double lo, double hi) {
  std::normal_distribution<double> normal(mean, sd);
  for (int tries = 0; tries < 1000; ++tries) {
    const double x = normal(rng);
    if (x >= lo && x <= hi) return x;
  }
  return std::clamp(mean, lo, hi);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct FeatureModel {
  std::vector<double> base;
  std::vector<std::array<double, kNumVariables>> coef;
};

}  // namespace

double synth_z(Variable v, double value) {
  switch (v) {
    case Variable::Age: return (value - 42.0) / 15.0;
    case Variable::Income: return (std::log(std::max(value, 1.0)) - std::log(50000.0)) / 0.7;
    case Variable::Gender:
    case Variable::Education: return 2.0 * value - 1.0;
  }
  return 0.0;
}

void SynthSpec::check() const {
  if (n_communities == 0 || population_size == 0 || sample_size == 0 || n_features == 0)
    throw Error("synthetic sizes must be positive");
  if (sample_size > population_size) throw Error("sample size exceeds population size");
  for (double c : shrinkage)
    if (!(c >= 0.0 && c <= 1.0)) throw Error("shrinkage factor must lie in [0, 1]");
  for (double s : estimator_noise)
    if (!(s >= 0.0)) throw Error("estimator noise must be non-negative");
  if (!(outcome_noise_sd >= 0.0)) throw Error("outcome noise must be non-negative");
}

SynthOutput generate(const SynthSpec& spec, bool keep_population) {
  spec.check();
  SynthOutput out;
  Dataset& data = out.dataset;

  const int cwidth = std::max(4, static_cast<int>(std::to_string(spec.n_communities).size()));
  const int uwidth = std::max(5, static_cast<int>(std::to_string(spec.population_size).size()));
  const int fwidth = std::max(3, static_cast<int>(std::to_string(spec.n_features).size()));
  for (std::uint32_t f = 0; f < spec.n_features; ++f) data.vocabulary.intern(padded("f", f, fwidth));

  FeatureModel fm;
  {
    std::mt19937_64 rng(split_seed(spec.seed, kFeatureStream));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::uint32_t f = 0; f < spec.n_features; ++f) {
      fm.base.push_back(normal(rng));
      std::array<double, kNumVariables> c{};
      for (std::size_t v = 0; v < kNumVariables; ++v) c[v] = spec.feature_coef_sd[v] * normal(rng);
      fm.coef.push_back(c);
    }
  }

  std::array<double, kNumVariables> pop_sum{};
  double pop_count = 0.0;
  std::vector<FeatureVector> sample_features;
  std::vector<double> logits(spec.n_features);

  for (std::uint32_t c = 0; c < spec.n_communities; ++c) {
    std::mt19937_64 rng(split_seed(spec.seed, c));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const CommunityId cid = padded("c", c, cwidth);

    const double age_mean = spec.age_mean + spec.age_between_sd * normal(rng);
    const double female = std::clamp(spec.female_share + spec.female_between_sd * normal(rng), 0.02, 0.98);
    const double log_median = std::log(spec.income_median) + spec.income_between_log_sd * normal(rng);
    const double edu = std::clamp(spec.education_share + spec.education_between_sd * normal(rng), 0.02, 0.98);
    std::array<double, kNumVariables> sel{};
    for (std::size_t v = 0; v < kNumVariables; ++v)
      sel[v] = spec.selection_coef[v] + spec.selection_coef_sd[v] * normal(rng);

    const auto& age_range = info(Variable::Age).valid_range;
    const auto& inc_range = info(Variable::Income).valid_range;

    std::vector<Individual> pop(spec.population_size);
    std::vector<FeatureVector> pop_feats(spec.population_size);
    std::vector<double> oracle(spec.n_features, 0.0);
    std::vector<double> keys(spec.population_size);
    for (std::uint32_t j = 0; j < spec.population_size; ++j) {
      auto& ind = pop[j];
      ind.id = cid + padded("_u", j, uwidth);
      ind.community = cid;
      ind.value(Variable::Age) = truncated_normal(rng, age_mean, spec.age_within_sd, 18.0, age_range.max);
      ind.value(Variable::Gender) = unif(rng) < female ? 1.0 : 0.0;
      ind.value(Variable::Income) =
          std::exp(truncated_normal(rng, log_median, spec.income_within_log_sd, std::log(1000.0), std::log(inc_range.max)));
      ind.value(Variable::Education) = unif(rng) < edu ? 1.0 : 0.0;

      std::array<double, kNumVariables> z{};
      for (auto v : kAllVariables) z[static_cast<std::size_t>(v)] = synth_z(v, ind.value(v));

      double top = -1e300;
      for (std::uint32_t f = 0; f < spec.n_features; ++f) {
        double l = fm.base[f] + spec.feature_noise_sd * normal(rng);
        for (std::size_t v = 0; v < kNumVariables; ++v) l += fm.coef[f][v] * z[v];
        logits[f] = l;
        top = std::max(top, l);
      }
      double norm = 0.0;
      for (auto& l : logits) norm += (l = std::exp(l - top));
      auto& fv = pop_feats[j];
      fv.entries.reserve(spec.n_features);
      for (std::uint32_t f = 0; f < spec.n_features; ++f) {
        const double r = logits[f] / norm;
        fv.entries.emplace_back(f, r);
        oracle[f] += r;
      }

      double eta = spec.selection_intercept;
      for (std::size_t v = 0; v < kNumVariables; ++v) eta += sel[v] * z[v];
      const double propensity = std::max(sigmoid(eta), 1e-12);
      // Efraimidis-Spirakis key; the largest keys form the weighted sample
      keys[j] = std::log(std::max(unif(rng), 1e-300)) / propensity;

      for (std::size_t v = 0; v < kNumVariables; ++v) pop_sum[v] += ind.demographics[v];
      pop_count += 1.0;
    }

    CommunityFeatures truth;
    truth.community = cid;
    for (std::uint32_t f = 0; f < spec.n_features; ++f)
      truth.means.emplace_back(f, oracle[f] / static_cast<double>(spec.population_size));
    out.oracle_means.push_back(std::move(truth));

    for (auto v : kAllVariables) {
      MarginTable m;
      m.community = cid;
      m.partition = census_partition(v);
      std::vector<double> counts(m.partition.size(), 0.0);
      for (const auto& ind : pop) counts[m.partition.bin_index(ind.value(v))] += 1.0;
      for (double x : counts) m.percentages.push_back(x / static_cast<double>(spec.population_size));
      data.margins.push_back(std::move(m));
    }

    std::vector<std::uint32_t> order(spec.population_size);
    std::iota(order.begin(), order.end(), 0u);
    std::partial_sort(order.begin(), order.begin() + spec.sample_size, order.end(),
                      [&](std::uint32_t a, std::uint32_t b) { return keys[a] != keys[b] ? keys[a] > keys[b] : a < b; });
    std::sort(order.begin(), order.begin() + spec.sample_size);
    for (std::uint32_t s = 0; s < spec.sample_size; ++s) {
      out.true_sample.push_back(pop[order[s]]);
      sample_features.push_back(pop_feats[order[s]]);
    }

    if (keep_population) {
      for (auto& ind : pop) out.population.push_back(std::move(ind));
      for (auto& fv : pop_feats) out.population_features.push_back(std::move(fv));
    }
  }

  // national targets: pooled true sample over the survey bins
  for (auto v : kAllVariables) {
    NationalTarget t;
    t.partition = national_partition(v);
    if (v == Variable::Income) {
      // the open top bin ends at the largest sampled income
      double top = 0.0;
      for (const auto& ind : out.true_sample) top = std::max(top, ind.value(v));
      auto bins = t.partition.bins();
      bins.back().hi = std::max(bins.back().lo + 1000.0, std::ceil(top / 1000.0) * 1000.0);
      t.partition = Partition(v, bins);
    }
    std::vector<double> counts(t.partition.size(), 0.0);
    for (const auto& ind : out.true_sample) counts[t.partition.bin_index(ind.value(v))] += 1.0;
    for (double x : counts) t.percentages.push_back(x / static_cast<double>(out.true_sample.size()));
    data.targets.push_back(std::move(t));
  }

  // shrunken estimates toward the population grand mean
  std::array<double, kNumVariables> grand{};
  for (std::size_t v = 0; v < kNumVariables; ++v) grand[v] = pop_sum[v] / pop_count;
  {
    std::mt19937_64 rng(split_seed(spec.seed, 0xE57));
    std::normal_distribution<double> normal(0.0, 1.0);
    data.individuals = out.true_sample;
    for (auto& ind : data.individuals)
      for (auto v : kAllVariables) {
        const auto vi = static_cast<std::size_t>(v);
        double est = ind.demographics[vi] - spec.shrinkage[vi] * (ind.demographics[vi] - grand[vi]);
        if (spec.estimator_noise[vi] > 0.0) est += spec.estimator_noise[vi] * normal(rng);
        ind.demographics[vi] = clamp_to_range(v, est);
      }
  }
  data.features = std::move(sample_features);

  // outcomes from standardized true community means
  {
    std::mt19937_64 rng(split_seed(spec.seed, kOutcomeStream));
    std::normal_distribution<double> normal(0.0, 1.0);
    const std::size_t nc = out.oracle_means.size();
    std::vector<double> mean(spec.n_features, 0.0), sd(spec.n_features, 0.0);
    for (const auto& cf : out.oracle_means)
      for (const auto& [f, x] : cf.means) mean[f] += x / static_cast<double>(nc);
    for (const auto& cf : out.oracle_means)
      for (const auto& [f, x] : cf.means) sd[f] += (x - mean[f]) * (x - mean[f]) / static_cast<double>(nc);
    for (auto& s : sd) s = s > 0.0 ? std::sqrt(s) : 1.0;

    for (std::uint32_t t = 0; t < spec.n_outcomes; ++t) {
      std::vector<double> w(spec.n_features);
      for (auto& x : w) x = normal(rng);
      std::vector<double> signal(nc, 0.0);
      for (std::size_t c = 0; c < nc; ++c)
        for (const auto& [f, x] : out.oracle_means[c].means) signal[c] += w[f] * (x - mean[f]) / sd[f];
      const double smean = std::accumulate(signal.begin(), signal.end(), 0.0) / static_cast<double>(nc);
      double svar = 0.0;
      for (double s : signal) svar += (s - smean) * (s - smean) / static_cast<double>(nc);
      const double ssd = svar > 0.0 ? std::sqrt(svar) : 1.0;
      OutcomeTable table;
      table.name = "outcome" + std::to_string(t + 1);
      for (std::size_t c = 0; c < nc; ++c)
        table.values[out.oracle_means[c].community] = (signal[c] - smean) / ssd + spec.outcome_noise_sd * normal(rng);
      data.outcomes.push_back(std::move(table));
    }
  }
  return out;
}

}  // namespace restrat

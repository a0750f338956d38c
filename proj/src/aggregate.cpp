#include "restrat/aggregate.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace restrat {

namespace {

// Neumaier compensated accumulator.
struct KahanSum {
  double sum = 0.0;
  double comp = 0.0;
  void add(double x) {
    const double t = sum + x;
    if (std::abs(sum) >= std::abs(x))
      comp += (sum - t) + x;
    else
      comp += (x - t) + sum;
    sum = t;
  }
  double value() const { return sum + comp; }
};

}  // namespace

CommunityFeatures aggregate_features(std::span<const Individual> individuals,
                                     std::span<const FeatureVector> features, const WeightAssignment& weights) {
  if (individuals.empty()) throw Error("cannot aggregate an empty community");
  if (features.size() != individuals.size()) throw Error("feature vectors are not aligned with individuals");
  if (weights.weights.size() != individuals.size())
    throw Error("weights do not cover the community's individuals (community " + weights.community + ")");

  std::unordered_map<IndividualId, double> psi;
  psi.reserve(weights.weights.size());
  for (const auto& [id, w] : weights.weights) psi.emplace(id, w);

  // dense accumulators over the touched feature range
  FeatureIndex max_feature = 0;
  for (const auto& fv : features)
    if (!fv.entries.empty()) max_feature = std::max(max_feature, fv.entries.back().first);
  std::vector<KahanSum> acc(static_cast<std::size_t>(max_feature) + 1);
  std::vector<char> touched(acc.size(), 0);

  for (std::size_t j = 0; j < individuals.size(); ++j) {
    auto it = psi.find(individuals[j].id);
    if (it == psi.end()) throw Error("no weight for individual " + individuals[j].id);
    const double w = it->second;
    for (const auto& [f, r] : features[j].entries) {
      acc[f].add(w * r);
      touched[f] = 1;
    }
  }

  CommunityFeatures out;
  out.community = individuals.front().community;
  const double n = static_cast<double>(individuals.size());
  for (std::size_t f = 0; f < acc.size(); ++f)
    if (touched[f]) out.means.emplace_back(static_cast<FeatureIndex>(f), acc[f].value() / n);
  return out;
}

std::vector<CommunityFeatures> aggregate_dataset(const Dataset& data, const std::vector<WeightAssignment>& weights) {
  std::vector<CommunityFeatures> out;
  std::size_t c = 0;
  for (const auto& [community, idx] : data.members()) {
    std::vector<Individual> members;
    std::vector<FeatureVector> feats;
    members.reserve(idx.size());
    feats.reserve(idx.size());
    for (auto i : idx) {
      members.push_back(data.individuals[i]);
      feats.push_back(i < data.features.size() ? data.features[i] : FeatureVector{});
    }
    WeightAssignment unit;
    const WeightAssignment* w = nullptr;
    if (weights.empty()) {
      unit.community = community;
      for (const auto& m : members) unit.weights.emplace_back(m.id, 1.0);
      w = &unit;
    } else {
      if (c >= weights.size() || weights[c].community != community)
        throw Error("weights are not ordered by community (expected " + community + ")");
      w = &weights[c];
    }
    out.push_back(aggregate_features(members, feats, *w));
    ++c;
  }
  return out;
}

}  // namespace restrat

#pragma once

#include <span>
#include <vector>

#include "restrat/core.hpp"

namespace restrat {

/// Weighted community mean of relative frequencies:
///   mean[f] = (1 / N) * sum_j psi_j * r_j(f)
/// `weights` must list exactly the individuals in `individuals` (any order).
/// Sums are compensated, so the result does not depend on member order
/// beyond the last bit.
CommunityFeatures aggregate_features(std::span<const Individual> individuals,
                                     std::span<const FeatureVector> features, const WeightAssignment& weights);

/// Aggregate every community of a dataset; `weights` ordered by community
/// (as produced by assign_dataset_weights). Empty `weights` means psi = 1.
std::vector<CommunityFeatures> aggregate_dataset(const Dataset& data, const std::vector<WeightAssignment>& weights);

}  // namespace restrat

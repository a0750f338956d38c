#pragma once

// Seeded synthetic populations with a known selection mechanism, shrunken
// demographic estimates, demographic-driven features and outcomes built
// from the true population feature means.

#include <array>
#include <cstdint>
#include <vector>

#include "restrat/core.hpp"

namespace restrat {

struct SynthSpec {
  std::uint64_t seed = 1;
  std::uint32_t n_communities = 500;
  std::uint32_t population_size = 2000;
  std::uint32_t sample_size = 200;

  // community-level demographic distributions
  double age_mean = 42.0, age_between_sd = 5.0, age_within_sd = 15.0;
  double female_share = 0.5, female_between_sd = 0.03;
  double income_median = 50000.0, income_between_log_sd = 0.3, income_within_log_sd = 0.7;
  double education_share = 0.3, education_between_sd = 0.1;

  // selection propensity: logistic(intercept + sum_v coef_v,c * z_v), with
  // coef_v,c ~ N(selection_coef[v], selection_coef_sd[v]) per community
  double selection_intercept = 0.0;
  std::array<double, kNumVariables> selection_coef{};
  std::array<double, kNumVariables> selection_coef_sd{};

  // estimated score = grand mean + (1 - shrinkage) * (true - grand mean) + N(0, estimator_noise);
  // shrinkage 0 leaves the true values, 1 collapses every score onto the grand mean
  std::array<double, kNumVariables> shrinkage{};
  std::array<double, kNumVariables> estimator_noise{};

  // features: r_j(f) proportional to exp(base_f + sum_v b_fv z_v + noise)
  std::uint32_t n_features = 40;
  std::array<double, kNumVariables> feature_coef_sd{0.5, 0.5, 0.5, 0.5};
  double feature_noise_sd = 0.5;

  // outcomes: standardized true feature means combined with random weights, plus noise
  std::uint32_t n_outcomes = 1;
  double outcome_noise_sd = 0.5;

  void check() const;
};

struct SynthOutput {
  Dataset dataset;  // biased sample, census margins, national targets, outcomes
  std::vector<CommunityFeatures> oracle_means;          // full-population means, ordered by community
  std::vector<Individual> true_sample;                  // sample with true demographics
  std::vector<Individual> population;                   // only when requested
  std::vector<FeatureVector> population_features;       // only when requested
};

/// Deterministic in `spec`. Community c draws from its own sub-seed.
SynthOutput generate(const SynthSpec& spec, bool keep_population = false);

/// Standardized demographic used by the selection and feature models.
double synth_z(Variable v, double value);

}  // namespace restrat

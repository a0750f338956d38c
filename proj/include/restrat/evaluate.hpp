#pragma once

// Accuracy metrics, significance tests against a baseline, and residual
// demographic bias of a (weighted) sample.

#include <Eigen/Dense>
#include <span>
#include <string>
#include <vector>

#include "restrat/core.hpp"

namespace restrat {

double pearson_r(std::span<const double> pred, std::span<const double> actual);
/// Squared out-of-sample Pearson r.
double r_squared(std::span<const double> pred, std::span<const double> actual);
double rmse(std::span<const double> pred, std::span<const double> actual);

struct PairedTest {
  double p_value = 1.0;
  double t_statistic = 0.0;
  double mean_difference = 0.0;  // mean(|a|) - mean(|b|)
  bool degenerate = false;       // zero-variance differences
};

/// Two-sided paired t-test on |a_i| - |b_i|.
PairedTest paired_residual_test(std::span<const double> residuals_a, std::span<const double> residuals_b);

/// Kost-McDermott approximation of cov(-2 ln p_i, -2 ln p_j) given the
/// correlation of the underlying test statistics.
double kost_mcdermott_covariance(double rho);

/// Fisher's statistic referred to a scaled chi-square whose first two
/// moments account for correlation between the tests.
double combine_dependent_pvalues(std::span<const double> p_values, const Eigen::MatrixXd& correlations);

enum class Direction { SignificantIncrease, SignificantDecrease, NotSignificant };
std::string_view to_string(Direction d);

struct ComparisonResult {
  std::string task;
  double baseline_r = 0.0;
  double corrected_r = 0.0;
  double baseline_rmse = 0.0;
  double corrected_rmse = 0.0;
  double p_value = 1.0;
  Direction direction = Direction::NotSignificant;
};

/// Direction from p-value and metric ordering at the given level.
Direction classify(double baseline_metric, double corrected_metric, double p_value, double alpha = 0.05);

struct VariableBias {
  Variable variable;
  /// Continuous: mean over communities of |census mean - sample mean| / pooled sd.
  /// Dichotomous: mean over communities of |census share - sample share|.
  double bias = 0.0;
  std::size_t communities = 0;
  std::size_t skipped = 0;
};

struct BiasReport {
  std::vector<VariableBias> entries;
  std::vector<std::string> warnings;
  const VariableBias* find(Variable v) const;
};

/// Midpoint of a census bin for mean imputation; the top bin of a continuous
/// variable is open-ended and imputed at 1.5 times its lower edge.
double imputed_midpoint(const Partition& partition, std::size_t bin);

/// Residual bias of a sample against census margins. `weights` ordered by
/// community as from assign_dataset_weights; empty means psi = 1.
BiasReport quantify_bias(const std::vector<Individual>& individuals, const std::vector<WeightAssignment>& weights,
                         const std::vector<MarginTable>& margins, VariableSet variables);

}  // namespace restrat

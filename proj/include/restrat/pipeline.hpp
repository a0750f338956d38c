#pragma once

// Community-level predictive pipeline: variance screening, outcome
// correlation screening, standardization, randomized PCA, ridge regression
// and k-fold cross-validation.

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "restrat/core.hpp"

namespace restrat {

struct FeatureMatrix {
  std::vector<CommunityId> rows;
  std::vector<std::string> cols;
  Eigen::MatrixXd values;  // rows x cols
};

/// Dense matrix from community aggregates; columns are the vocabulary.
FeatureMatrix build_feature_matrix(const std::vector<CommunityFeatures>& communities,
                                   const FeatureVocabulary& vocabulary);

/// Rows of `m` restricted to communities with an outcome; returns (X, y) aligned.
std::pair<FeatureMatrix, Eigen::VectorXd> align_outcome(const FeatureMatrix& m, const OutcomeTable& outcome);

using ColumnMask = std::vector<bool>;

/// Keep columns whose sample variance exceeds `min_var`.
ColumnMask variance_filter(const Eigen::MatrixXd& x, double min_var = 0.0);

/// Two-sided p-value of the Pearson correlation of each column with y.
Eigen::VectorXd correlation_pvalues(const Eigen::MatrixXd& x, const Eigen::VectorXd& y);

/// Keep columns with correlation p-value below alpha_family / n_columns.
ColumnMask correlation_filter(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double alpha_family = 60.0);

Eigen::MatrixXd select_columns(const Eigen::MatrixXd& x, const ColumnMask& mask);

struct Standardizer {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd sd;  // population convention (divide by n)
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
};

/// Fit column means and population standard deviations; throws on zero sd.
Standardizer fit_standardizer(const Eigen::MatrixXd& x);

struct Projection {
  Eigen::MatrixXd components;  // cols x k, orthonormal columns
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const { return x * components; }
};

struct PcaOptions {
  double ratio = 0.1;
  std::uint32_t power_iterations = 4;
  std::uint32_t oversampling = 10;
};

/// Randomized range-finder PCA onto ceil(ratio * cols) components.
Projection fit_projection(const Eigen::MatrixXd& x, const PcaOptions& options, std::uint64_t seed);

struct RidgeModel {
  Eigen::VectorXd beta;
  double intercept = 0.0;
  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;
};

/// Solve (X'X + lambda I) beta = X'(y - mean(y)); intercept = mean(y).
RidgeModel ridge_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda = 10000.0);

struct PipelineConfig {
  std::uint32_t folds = 10;
  std::uint64_t seed = 42;
  double lambda = 10000.0;
  double alpha_family = 60.0;
  double min_variance = 0.0;
  PcaOptions pca;
  bool reduce = true;
  /// Fit screening once on all rows instead of per training fold.
  bool global_selection = false;

  std::string describe() const;
};

/// Everything fitted on one training split.
struct FoldModel {
  ColumnMask variance_mask;
  ColumnMask correlation_mask;
  Standardizer standardizer;
  Projection projection;
  bool reduced = false;
  RidgeModel ridge;

  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;
  friend bool identical(const FoldModel& a, const FoldModel& b);
};

FoldModel fit_fold_model(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const PipelineConfig& config,
                         std::uint64_t seed);

struct FoldAssignment {
  std::vector<std::uint32_t> fold;  // per row
  std::uint32_t folds = 0;
};

/// Rows ordered by a seeded stable hash of their community id, then dealt
/// round-robin into folds.
FoldAssignment assign_folds(const std::vector<CommunityId>& rows, std::uint32_t folds, std::uint64_t seed);

struct EvalResult {
  std::string task;
  std::vector<CommunityId> communities;
  Eigen::VectorXd actual;
  Eigen::VectorXd predicted;
  Eigen::VectorXd residuals;  // actual - predicted
  double pearson_r = 0.0;
  double r_squared = 0.0;
  double rmse = 0.0;
  std::vector<FoldModel> models;
  FoldAssignment assignment;
};

EvalResult cross_validate(const FeatureMatrix& x, const Eigen::VectorXd& y, const PipelineConfig& config);

}  // namespace restrat

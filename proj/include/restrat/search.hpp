#pragma once

// Grid search over correction settings and backwards elimination over the
// correction variables.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "restrat/core.hpp"
#include "restrat/pipeline.hpp"
#include "restrat/weights.hpp"

namespace restrat {

struct GridSpec {
  std::vector<Method> methods{Method::Raking};
  std::vector<VariableSet> variable_sets;
  std::vector<std::uint32_t> min_bin_thresholds{1, 10, 50, 100, 1000};
  std::vector<double> smoothing_ks{0.0, 1.0, 10.0, 100.0, 1000.0};
  std::vector<bool> redistribution{true};
  bool include_baseline = true;

  std::vector<CorrectionConfig> cells() const;
};

struct TaskMetrics {
  std::string task;
  double pearson_r = 0.0;
  double r_squared = 0.0;
  double rmse = 0.0;
};

struct CellResult {
  CorrectionConfig config;
  std::vector<TaskMetrics> tasks;
  double mean_r = 0.0;
  std::uint64_t weights_fingerprint = 0;
  std::string error;  // non-empty when the cell failed
};

/// Fingerprint of a weight assignment (bit patterns of every psi, in order).
std::uint64_t fingerprint(const std::vector<WeightAssignment>& weights);

/// Evaluates correction configs end to end (weights, aggregation, CV) and
/// caches redistributed demographics and aggregated feature matrices.
class Evaluator {
 public:
  Evaluator(const Dataset& data, PipelineConfig pipeline, WeightOptions options = {});

  const Dataset& data() const { return data_; }
  const PipelineConfig& pipeline() const { return pipeline_; }

  /// Demographics the weights are computed from (redistributed or raw).
  const std::vector<Individual>& individuals(bool redistributed);
  std::vector<WeightAssignment> weights(const CorrectionConfig& config);
  /// Community x feature matrix for a weight assignment (cached by fingerprint).
  const FeatureMatrix& features(const std::vector<WeightAssignment>& weights);

  EvalResult evaluate_task(const CorrectionConfig& config, const std::string& task);
  CellResult evaluate(const CorrectionConfig& config, const std::vector<std::string>& tasks);

  std::size_t cache_hits() const { return cache_hits_; }

 private:
  const Dataset& data_;
  PipelineConfig pipeline_;
  WeightOptions options_;
  std::optional<std::vector<Individual>> redistributed_;
  std::map<std::uint64_t, FeatureMatrix> feature_cache_;
  std::size_t cache_hits_ = 0;
};

/// Evaluate every grid cell; ranked by mean Pearson r (descending), ties by
/// config description. Failed cells are kept, ranked last, with `error` set.
std::vector<CellResult> grid_search(Evaluator& evaluator, const std::vector<std::string>& tasks, const GridSpec& grid);

struct EliminationStep {
  VariableSet variables;
  CellResult best;
  bool accepted = false;
};

struct EliminationResult {
  VariableSet variables;
  CellResult best;
  std::vector<EliminationStep> trace;
};

struct EliminationOptions {
  /// Score differences below this count as ties, favouring fewer variables.
  double tolerance = 0.001;
};

/// Backwards elimination with raking and redistribution. Each variable set is
/// scored by its best grid cell over (min bin threshold, smoothing k); the
/// empty set is the uncorrected baseline.
EliminationResult backwards_eliminate(Evaluator& evaluator, const std::vector<std::string>& tasks,
                                      VariableSet full_set, const GridSpec& grid,
                                      const EliminationOptions& options = {});

}  // namespace restrat

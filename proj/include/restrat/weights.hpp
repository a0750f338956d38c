#pragma once

// Correction factors: full/naive post-stratification, raking, and informed
// smoothing of the sample distribution.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "restrat/binning.hpp"
#include "restrat/core.hpp"
#include "restrat/redistribute.hpp"

namespace restrat {

/// Dense row-major table over the product of several partitions.
class JointCellTable {
 public:
  JointCellTable() = default;
  explicit JointCellTable(std::vector<Partition> axes, double fill = 0.0);

  const std::vector<Partition>& axes() const { return axes_; }
  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return axes_.size(); }
  std::size_t cell_count() const { return cells_.size(); }

  std::vector<double>& cells() { return cells_; }
  const std::vector<double>& cells() const { return cells_; }
  double& at(std::span<const std::size_t> index) { return cells_[flat(index)]; }
  double at(std::span<const std::size_t> index) const { return cells_[flat(index)]; }

  std::size_t flat(std::span<const std::size_t> index) const;
  std::vector<std::size_t> unflatten(std::size_t flat_index) const;

  double sum() const;
  /// Marginal along one axis (sums over all other axes).
  std::vector<double> marginal(std::size_t axis) const;

 private:
  std::vector<Partition> axes_;
  std::vector<std::size_t> shape_;
  std::vector<std::size_t> strides_;
  std::vector<double> cells_;
};

class UndefinedCellError : public Error {
 public:
  UndefinedCellError(std::size_t cell, const std::string& what) : Error(what), cell_(cell) {}
  std::size_t cell() const { return cell_; }

 private:
  std::size_t cell_;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(double deviation, const std::string& what) : Error(what), deviation_(deviation) {}
  double deviation() const { return deviation_; }

 private:
  double deviation_;
};

/// An empty sample slice facing a positive target; raking cannot converge.
class StructuralZeroError : public ConvergenceError {
 public:
  StructuralZeroError(std::size_t axis, std::size_t bin, double deviation, const std::string& what)
      : ConvergenceError(deviation, what), axis_(axis), bin_(bin) {}
  std::size_t axis() const { return axis_; }
  std::size_t bin() const { return bin_; }

 private:
  std::size_t axis_;
  std::size_t bin_;
};

/// psi = population share / sample share. `cell` is reported on error.
double cell_weight(double pop_pct, double samp_pct, std::size_t cell = 0);

/// Joint population table under independence of the marginals.
JointCellTable naive_joint(const std::vector<std::pair<Partition, std::vector<double>>>& marginals);

struct RakeOptions {
  double tol = 1e-6;
  std::uint32_t max_iter = 500;
};

struct RakeResult {
  JointCellTable table;                      // adjusted, sums to 1
  std::vector<std::vector<double>> factors;  // cumulative per-axis scaling, table = input/sum * prod factors
  std::uint32_t iterations = 0;
  double max_deviation = 0.0;
};

/// Iterative proportional fitting of a sample table to target marginals.
RakeResult rake(const JointCellTable& sample_joint, const std::vector<std::vector<double>>& target_marginals,
                const RakeOptions& options = {});

/// Informed smoothing: (n_s + k * pop_prob) / (n_i + k).
double smooth_sample_prob(double n_s, double n_i, double pop_prob, double k);

struct WeightOptions {
  RakeOptions rake;
  RedistributionOptions redistribution;
};

/// Correction factors for one community's (already redistributed) sample.
/// `margins` must hold a table per configured variable. `population_joint`
/// is only consulted by full post-stratification: a joint population table
/// whose axes are the configured variables (in variable order) over the
/// same partitions as `margins`. Without it full post-stratification
/// corrects each variable separately.
WeightAssignment assign_weights(std::span<const Individual> community, const CorrectionConfig& config,
                                std::span<const MarginTable> margins, const WeightOptions& options = {},
                                const JointCellTable* population_joint = nullptr);

/// Whole-dataset correction: pooled redistribution (when configured), then
/// per-community weights. Communities whose weights cannot be formed fall
/// back to psi = 1 with a warning. Output ordered by community id.
struct DatasetWeights {
  std::vector<Individual> individuals;  // redistributed copy (or original)
  std::vector<WeightAssignment> communities;
};
DatasetWeights assign_dataset_weights(const Dataset& data, const CorrectionConfig& config,
                                      const WeightOptions& options = {});

/// Pooled redistribution of every variable that has a national target.
std::vector<Individual> redistribute_dataset(const Dataset& data, const RedistributionOptions& options = {});

/// Per-community weights over `individuals` (aligned with data.individuals,
/// already redistributed when the config asks for it).
std::vector<WeightAssignment> assign_community_weights(const Dataset& data, const std::vector<Individual>& individuals,
                                                       const CorrectionConfig& config,
                                                       const WeightOptions& options = {});

}  // namespace restrat

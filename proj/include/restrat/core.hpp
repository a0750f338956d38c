#pragma once

// Domain types shared by every stage of the reweighting toolkit.

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace restrat {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Demographic variables

enum class Variable : std::uint8_t { Age = 0, Gender = 1, Income = 2, Education = 3 };
inline constexpr std::size_t kNumVariables = 4;
inline constexpr std::array<Variable, kNumVariables> kAllVariables = {
    Variable::Age, Variable::Gender, Variable::Income, Variable::Education};

enum class VariableKind : std::uint8_t { ContinuousScore, Dichotomous };

struct Range {
  double min = 0.0;
  double max = 0.0;
};

struct VariableInfo {
  Variable variable;
  std::string_view name;
  VariableKind kind;
  Range valid_range;
};

const VariableInfo& info(Variable v);
std::string_view to_string(Variable v);
Variable parse_variable(std::string_view name);
bool is_dichotomous(Variable v);

/// Clamp a raw value into the variable's valid range.
double clamp_to_range(Variable v, double value);

/// Score threshold separating class 0 from class 1 for dichotomous variables.
inline constexpr double kDichotomyThreshold = 0.5;

/// Class (0 or 1) of a dichotomous score. Scores at the threshold count as 1.
int dichotomize(double score);

/// Ordered set of variables (bitmask), iteration in Variable order.
class VariableSet {
 public:
  VariableSet() = default;
  VariableSet(std::initializer_list<Variable> vars);

  void insert(Variable v) { bits_ |= bit(v); }
  void erase(Variable v) { bits_ &= static_cast<std::uint8_t>(~bit(v)); }
  bool contains(Variable v) const { return (bits_ & bit(v)) != 0; }
  bool empty() const { return bits_ == 0; }
  std::size_t size() const;
  std::vector<Variable> list() const;
  std::uint8_t bits() const { return bits_; }

  /// "income+education" style label; "none" when empty.
  std::string label() const;
  static VariableSet parse(std::string_view text);

  friend bool operator==(VariableSet a, VariableSet b) { return a.bits_ == b.bits_; }

 private:
  static std::uint8_t bit(Variable v) { return static_cast<std::uint8_t>(1u << static_cast<unsigned>(v)); }
  std::uint8_t bits_ = 0;
};

// ---------------------------------------------------------------------------
// Individuals and features

using IndividualId = std::string;
using CommunityId = std::string;
using FeatureIndex = std::uint32_t;

struct Individual {
  IndividualId id;
  CommunityId community;
  std::array<double, kNumVariables> demographics{};

  double value(Variable v) const { return demographics[static_cast<std::size_t>(v)]; }
  double& value(Variable v) { return demographics[static_cast<std::size_t>(v)]; }

  friend bool operator==(const Individual&, const Individual&) = default;
};

/// Sparse per-individual relative frequencies, sorted by feature index.
struct FeatureVector {
  std::vector<std::pair<FeatureIndex, double>> entries;

  void normalize_order();
  double get(FeatureIndex f) const;
  double total() const;
  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

/// Interns feature names to dense indices.
class FeatureVocabulary {
 public:
  FeatureIndex intern(const std::string& name);
  std::optional<FeatureIndex> find(const std::string& name) const;
  const std::string& name(FeatureIndex f) const { return names_.at(f); }
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, FeatureIndex> index_;
};

// ---------------------------------------------------------------------------
// Partitions and margins

struct Bin {
  double lo = 0.0;
  double hi = 0.0;
  friend bool operator==(const Bin&, const Bin&) = default;
};

/// Ordered, contiguous bins over one variable. Bins are half-open [lo, hi)
/// except the last, which is closed. Values below the first edge fold into
/// the first bin, values above the last edge into the last bin.
class Partition {
 public:
  Partition() = default;
  Partition(Variable variable, std::vector<Bin> bins);
  static Partition from_edges(Variable variable, const std::vector<double>& edges);

  Variable variable() const { return variable_; }
  const std::vector<Bin>& bins() const { return bins_; }
  std::size_t size() const { return bins_.size(); }
  std::size_t bin_index(double value) const;
  bool folds_below(double value) const { return value < bins_.front().lo; }
  bool folds_above(double value) const { return value > bins_.back().hi; }

  friend bool operator==(const Partition&, const Partition&) = default;

 private:
  Variable variable_ = Variable::Age;
  std::vector<Bin> bins_;
};

/// Bin layouts of the population census tables.
Partition census_partition(Variable v);
/// Bin layouts of the national platform-usage survey (redistribution target).
Partition national_partition(Variable v);

/// Population bin shares for one community and one variable.
struct MarginTable {
  CommunityId community;
  Partition partition;
  std::vector<double> percentages;

  Variable variable() const { return partition.variable(); }
  /// True when every share is in [0, 1], sizes agree and the sum is within tol of 1.
  bool valid(double tol = 1e-9) const;
};

/// National distribution a pooled sample is redistributed toward.
struct NationalTarget {
  Partition partition;
  std::vector<double> percentages;

  Variable variable() const { return partition.variable(); }
  bool valid(double tol = 1e-9) const;
};

// ---------------------------------------------------------------------------
// Weights, community features, outcomes

struct WeightAssignment {
  CommunityId community;
  std::vector<std::pair<IndividualId, double>> weights;  // sample order
  bool corrected = true;
  std::vector<std::string> warnings;

  double mean() const;
};

struct CommunityFeatures {
  CommunityId community;
  std::vector<std::pair<FeatureIndex, double>> means;  // sorted by index

  double get(FeatureIndex f) const;
};

enum class Method : std::uint8_t { FullPostStratification, Naive, Raking };
std::string_view to_string(Method m);
Method parse_method(std::string_view name);

struct CorrectionConfig {
  Method method = Method::Raking;
  VariableSet variables;
  bool redistribute = false;
  std::uint32_t min_bin_threshold = 0;
  double smoothing_k = 0.0;
  bool normalize_weights = false;

  /// Stable textual form; used for fingerprints and trace files.
  std::string describe() const;
  void check() const;
  friend bool operator==(const CorrectionConfig&, const CorrectionConfig&) = default;
};

struct OutcomeTable {
  std::string name;
  std::map<CommunityId, double> values;
};

// ---------------------------------------------------------------------------
// Dataset and validation

struct Dataset {
  std::vector<Individual> individuals;
  std::vector<FeatureVector> features;  // aligned with individuals
  FeatureVocabulary vocabulary;
  std::vector<MarginTable> margins;
  std::vector<NationalTarget> targets;
  std::vector<OutcomeTable> outcomes;

  /// Community ids in sorted order.
  std::vector<CommunityId> communities() const;
  /// Indices into `individuals` per community, communities sorted.
  std::map<CommunityId, std::vector<std::size_t>> members() const;
  const MarginTable* margin(const CommunityId& c, Variable v) const;
  const NationalTarget* target(Variable v) const;
  const OutcomeTable* outcome(const std::string& name) const;
};

struct ValidationReport {
  std::size_t community_count = 0;
  std::size_t min_community_size = 100;
  std::vector<std::pair<CommunityId, std::size_t>> small_communities;
  std::vector<IndividualId> missing_demographics;
  std::vector<IndividualId> invalid_features;
  std::vector<std::pair<CommunityId, Variable>> invalid_margins;
  /// Individuals whose value lies below the first census bin and is folded in.
  std::array<std::size_t, kNumVariables> folded_below{};

  bool clean() const;
  std::vector<std::string> messages() const;
};

ValidationReport validate_dataset(const std::vector<Individual>& individuals,
                                  const std::vector<FeatureVector>& features,
                                  const std::vector<MarginTable>& margins,
                                  std::size_t min_community_size = 100);

}  // namespace restrat

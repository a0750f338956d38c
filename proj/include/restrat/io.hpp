#pragma once

// Delimited-value dataset files, run configuration and output headers.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "restrat/core.hpp"
#include "restrat/evaluate.hpp"
#include "restrat/pipeline.hpp"

namespace restrat {

/// Malformed input; the message names file, line and column.
class SchemaError : public Error {
 public:
  SchemaError(const std::string& file, std::size_t line, std::size_t column, const std::string& what);
  const std::string& file() const { return file_; }
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::string file_;
  std::size_t line_;
  std::size_t column_;
};

struct DatasetPaths {
  std::filesystem::path users, features, margins, national_target, outcomes;

  /// Standard file names inside one directory.
  static DatasetPaths in(const std::filesystem::path& dir);
};

struct LoadedDataset {
  Dataset data;
  ValidationReport report;
  std::string header;  // leading "#" line of users.csv, if any
};

/// Reads and validates a dataset. Missing national_target / outcomes files
/// are allowed (empty tables); users and margins are mandatory.
LoadedDataset load_dataset(const DatasetPaths& paths, std::size_t min_community_size = 100);

/// Writes the standard files; every file starts with `header` when non-empty.
/// Numbers use round-trip precision so load -> save is byte-stable.
void save_dataset(const std::filesystem::path& dir, const Dataset& data, const std::string& header = "");

std::vector<Individual> read_users(const std::filesystem::path& path);
std::vector<FeatureVector> read_features(const std::filesystem::path& path, const std::vector<Individual>& users,
                                         FeatureVocabulary& vocabulary);
std::vector<MarginTable> read_margins(const std::filesystem::path& path);
std::vector<NationalTarget> read_national_target(const std::filesystem::path& path);
std::vector<OutcomeTable> read_outcomes(const std::filesystem::path& path);
/// Weight file rows grouped into assignments, ordered by community.
std::vector<WeightAssignment> read_weights(const std::filesystem::path& path);
std::vector<CommunityFeatures> read_community_features(const std::filesystem::path& path,
                                                       FeatureVocabulary& vocabulary);

void write_users(std::ostream& out, const std::vector<Individual>& users);
void write_features(std::ostream& out, const std::vector<Individual>& users, const std::vector<FeatureVector>& features,
                    const FeatureVocabulary& vocabulary);
void write_margins(std::ostream& out, const std::vector<MarginTable>& margins);
void write_national_target(std::ostream& out, const std::vector<NationalTarget>& targets);
void write_outcomes(std::ostream& out, const std::vector<OutcomeTable>& outcomes);
void write_weights(std::ostream& out, const std::vector<WeightAssignment>& weights);
void write_community_features(std::ostream& out, const std::vector<CommunityFeatures>& features,
                              const FeatureVocabulary& vocabulary);

/// Shortest text that parses back to the same double.
std::string format_number(double x);

/// Everything a CLI run needs; loaded from a flat key = value file and
/// overridden by flags.
struct RunConfig {
  std::filesystem::path data_dir;
  std::filesystem::path output_dir;
  CorrectionConfig correction;
  PipelineConfig pipeline;
  std::vector<std::string> tasks;  // empty: every outcome
  bool seed_set = false;

  /// Apply one key/value; unknown keys throw.
  void set(const std::string& key, const std::string& value);
  /// Stable hash of every setting that affects outputs.
  std::uint64_t fingerprint() const;
  /// "# restrat seed=<seed> fingerprint=<hex> <settings>"
  std::string header() const;
};

/// Parse a config file into `config`; errors name file and line.
void load_config(const std::filesystem::path& path, RunConfig& config);

}  // namespace restrat

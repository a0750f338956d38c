#include "restrat/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <unordered_map>

namespace restrat {

namespace fs = std::filesystem;

SchemaError::SchemaError(const std::string& file, std::size_t line, std::size_t column, const std::string& what)
    : Error(file + ":" + std::to_string(line) + ":" + std::to_string(column) + ": " + what),
      file_(file),
      line_(line),
      column_(column) {}

namespace {

struct Row {
  std::size_t line = 0;
  std::vector<std::string> fields;
};

// Minimal RFC-4180 style reader: comma separated, optional double quotes,
// lines starting with '#' are comments.
class CsvReader {
 public:
  CsvReader(const fs::path& path, std::vector<std::string> expected) : path_(path.string()), in_(path) {
    if (!in_) throw Error("cannot open " + path_);
    Row header;
    if (!next(header)) throw SchemaError(path_, std::max<std::size_t>(line_, 1), 1, "missing header row");
    for (std::size_t c = 0; c < expected.size(); ++c)
      if (c >= header.fields.size() || header.fields[c] != expected[c])
        throw SchemaError(path_, header.line, c + 1, "expected column '" + expected[c] + "'");
    if (header.fields.size() != expected.size())
      throw SchemaError(path_, header.line, expected.size() + 1, "unexpected extra column");
    columns_ = expected.size();
  }

  bool next(Row& row) {
    std::string text;
    while (std::getline(in_, text)) {
      ++line_;
      if (!text.empty() && text.back() == '\r') text.pop_back();
      if (text.empty() || text[0] == '#') continue;
      row.line = line_;
      row.fields = split(text);
      if (columns_ != 0 && row.fields.size() != columns_)
        throw SchemaError(path_, line_, std::min(row.fields.size(), columns_) + 1,
                          "expected " + std::to_string(columns_) + " fields, found " +
                              std::to_string(row.fields.size()));
      return true;
    }
    return false;
  }

  double number(const Row& row, std::size_t col) const {
    const auto& s = row.fields[col];
    double x = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
      throw SchemaError(path_, row.line, col + 1, "not a number: '" + s + "'");
    return x;
  }

  const std::string& text(const Row& row, std::size_t col) const {
    if (row.fields[col].empty()) throw SchemaError(path_, row.line, col + 1, "empty field");
    return row.fields[col];
  }

  [[noreturn]] void fail(const Row& row, std::size_t col, const std::string& what) const {
    throw SchemaError(path_, row.line, col + 1, what);
  }

  const std::string& path() const { return path_; }

 private:
  std::vector<std::string> split(const std::string& text) const {
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
      const char ch = text[i];
      if (quoted) {
        if (ch == '"' && i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else if (ch == '"') {
          quoted = false;
        } else {
          field += ch;
        }
      } else if (ch == '"') {
        quoted = true;
      } else if (ch == ',') {
        out.push_back(std::move(field));
        field.clear();
      } else {
        field += ch;
      }
    }
    if (quoted) throw SchemaError(path_, line_, out.size() + 1, "unterminated quote");
    out.push_back(std::move(field));
    return out;
  }

  std::string path_;
  std::ifstream in_;
  std::size_t line_ = 0;
  std::size_t columns_ = 0;
};

std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

Variable variable_at(const CsvReader& reader, const Row& row, std::size_t col) {
  try {
    return parse_variable(reader.text(row, col));
  } catch (const SchemaError&) {
    throw;
  } catch (const Error& e) {
    reader.fail(row, col, e.what());
  }
}

std::string read_header(const fs::path& path) {
  std::ifstream in(path);
  std::string line;
  if (std::getline(in, line) && !line.empty() && line[0] == '#') return line;
  return {};
}

std::ofstream open_out(const fs::path& path, const std::string& header) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  if (!header.empty()) out << header << '\n';
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw Error("setting '" + key + "' expects a boolean, got '" + v + "'");
}

template <typename T>
T parse_value(const std::string& key, const std::string& v) {
  T x{};
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size())
    throw Error("setting '" + key + "' expects a number, got '" + v + "'");
  return x;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::string format_number(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  if (ec != std::errc()) throw Error("cannot format number");
  return std::string(buf, ptr);
}

DatasetPaths DatasetPaths::in(const fs::path& dir) {
  return {dir / "users.csv", dir / "features.csv", dir / "margins.csv", dir / "national_target.csv",
          dir / "outcomes.csv"};
}

std::vector<Individual> read_users(const fs::path& path) {
  CsvReader reader(path, {"individual_id", "community_id", "age", "gender_score", "income", "education_score"});
  std::vector<Individual> users;
  std::unordered_map<std::string, std::size_t> seen;
  Row row;
  while (reader.next(row)) {
    Individual ind;
    ind.id = reader.text(row, 0);
    ind.community = reader.text(row, 1);
    // empty demographics load as NaN and are reported by validation
    for (std::size_t v = 0; v < kNumVariables; ++v)
      ind.demographics[v] =
          row.fields[2 + v].empty() ? std::numeric_limits<double>::quiet_NaN() : reader.number(row, 2 + v);
    if (!seen.emplace(ind.id, users.size()).second) reader.fail(row, 0, "duplicate individual id '" + ind.id + "'");
    users.push_back(std::move(ind));
  }
  return users;
}

std::vector<FeatureVector> read_features(const fs::path& path, const std::vector<Individual>& users,
                                         FeatureVocabulary& vocabulary) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < users.size(); ++i) index.emplace(users[i].id, i);
  std::vector<FeatureVector> features(users.size());
  CsvReader reader(path, {"individual_id", "feature_id", "rel_freq"});
  Row row;
  while (reader.next(row)) {
    auto it = index.find(reader.text(row, 0));
    if (it == index.end()) reader.fail(row, 0, "unknown individual '" + row.fields[0] + "'");
    const auto f = vocabulary.intern(reader.text(row, 1));
    features[it->second].entries.emplace_back(f, reader.number(row, 2));
  }
  for (auto& fv : features) fv.normalize_order();
  return features;
}

std::vector<MarginTable> read_margins(const fs::path& path) {
  CsvReader reader(path, {"community_id", "variable", "bin_lo", "bin_hi", "pct"});
  struct Group {
    CommunityId community;
    Variable variable;
    Row first;
    std::vector<std::pair<Bin, double>> rows;
  };
  std::vector<Group> groups;
  std::map<std::pair<std::string, Variable>, std::size_t> index;
  Row row;
  while (reader.next(row)) {
    const auto& c = reader.text(row, 0);
    const auto v = variable_at(reader, row, 1);
    auto [it, fresh] = index.emplace(std::make_pair(c, v), groups.size());
    if (fresh) groups.push_back({c, v, row, {}});
    groups[it->second].rows.push_back({{reader.number(row, 2), reader.number(row, 3)}, reader.number(row, 4)});
  }
  std::vector<MarginTable> out;
  for (auto& g : groups) {
    std::stable_sort(g.rows.begin(), g.rows.end(), [](const auto& a, const auto& b) { return a.first.lo < b.first.lo; });
    MarginTable m;
    m.community = g.community;
    std::vector<Bin> bins;
    for (const auto& [b, p] : g.rows) {
      bins.push_back(b);
      m.percentages.push_back(p);
    }
    try {
      m.partition = Partition(g.variable, std::move(bins));
    } catch (const Error& e) {
      reader.fail(g.first, 2, e.what());
    }
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<NationalTarget> read_national_target(const fs::path& path) {
  CsvReader reader(path, {"variable", "bin_lo", "bin_hi", "pct"});
  std::vector<std::pair<Row, std::vector<std::pair<Bin, double>>>> groups;
  std::map<Variable, std::size_t> index;
  Row row;
  while (reader.next(row)) {
    const auto v = variable_at(reader, row, 0);
    auto [it, fresh] = index.emplace(v, groups.size());
    if (fresh) groups.push_back({row, {}});
    groups[it->second].second.push_back({{reader.number(row, 1), reader.number(row, 2)}, reader.number(row, 3)});
  }
  std::vector<NationalTarget> out;
  for (auto& [first, rows] : groups) {
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first.lo < b.first.lo; });
    NationalTarget t;
    std::vector<Bin> bins;
    for (const auto& [b, p] : rows) {
      bins.push_back(b);
      t.percentages.push_back(p);
    }
    try {
      t.partition = Partition(parse_variable(first.fields[0]), std::move(bins));
    } catch (const Error& e) {
      reader.fail(first, 1, e.what());
    }
    if (!t.valid(1e-6)) reader.fail(first, 3, "national target shares must be non-negative and sum to 1");
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<OutcomeTable> read_outcomes(const fs::path& path) {
  CsvReader reader(path, {"community_id", "outcome_name", "value"});
  std::vector<OutcomeTable> out;
  std::map<std::string, std::size_t> index;
  Row row;
  while (reader.next(row)) {
    const auto& name = reader.text(row, 1);
    auto [it, fresh] = index.emplace(name, out.size());
    if (fresh) out.push_back({name, {}});
    if (!out[it->second].values.emplace(reader.text(row, 0), reader.number(row, 2)).second)
      reader.fail(row, 0, "duplicate outcome row for community '" + row.fields[0] + "'");
  }
  return out;
}

std::vector<WeightAssignment> read_weights(const fs::path& path) {
  CsvReader reader(path, {"community_id", "individual_id", "psi"});
  std::map<CommunityId, WeightAssignment> groups;
  Row row;
  while (reader.next(row)) {
    auto& w = groups[reader.text(row, 0)];
    w.community = row.fields[0];
    const double psi = reader.number(row, 2);
    if (!(psi >= 0.0)) reader.fail(row, 2, "weights must be non-negative");
    w.weights.emplace_back(reader.text(row, 1), psi);
  }
  std::vector<WeightAssignment> out;
  for (auto& [c, w] : groups) out.push_back(std::move(w));
  return out;
}

std::vector<CommunityFeatures> read_community_features(const fs::path& path, FeatureVocabulary& vocabulary) {
  CsvReader reader(path, {"community_id", "feature_id", "mean"});
  std::map<CommunityId, CommunityFeatures> groups;
  Row row;
  while (reader.next(row)) {
    auto& cf = groups[reader.text(row, 0)];
    cf.community = row.fields[0];
    cf.means.emplace_back(vocabulary.intern(reader.text(row, 1)), reader.number(row, 2));
  }
  std::vector<CommunityFeatures> out;
  for (auto& [c, cf] : groups) {
    std::sort(cf.means.begin(), cf.means.end());
    out.push_back(std::move(cf));
  }
  return out;
}

void write_users(std::ostream& out, const std::vector<Individual>& users) {
  out << "individual_id,community_id,age,gender_score,income,education_score\n";
  for (const auto& ind : users) {
    out << quote(ind.id) << ',' << quote(ind.community);
    for (double x : ind.demographics) out << ',' << (std::isnan(x) ? std::string() : format_number(x));
    out << '\n';
  }
}

void write_features(std::ostream& out, const std::vector<Individual>& users, const std::vector<FeatureVector>& features,
                    const FeatureVocabulary& vocabulary) {
  if (features.size() != users.size()) throw Error("features are not aligned with users");
  out << "individual_id,feature_id,rel_freq\n";
  for (std::size_t i = 0; i < users.size(); ++i)
    for (const auto& [f, r] : features[i].entries)
      out << quote(users[i].id) << ',' << quote(vocabulary.name(f)) << ',' << format_number(r) << '\n';
}

void write_margins(std::ostream& out, const std::vector<MarginTable>& margins) {
  out << "community_id,variable,bin_lo,bin_hi,pct\n";
  for (const auto& m : margins)
    for (std::size_t b = 0; b < m.partition.size(); ++b)
      out << quote(m.community) << ',' << to_string(m.variable()) << ',' << format_number(m.partition.bins()[b].lo)
          << ',' << format_number(m.partition.bins()[b].hi) << ',' << format_number(m.percentages[b]) << '\n';
}

void write_national_target(std::ostream& out, const std::vector<NationalTarget>& targets) {
  out << "variable,bin_lo,bin_hi,pct\n";
  for (const auto& t : targets)
    for (std::size_t b = 0; b < t.partition.size(); ++b)
      out << to_string(t.variable()) << ',' << format_number(t.partition.bins()[b].lo) << ','
          << format_number(t.partition.bins()[b].hi) << ',' << format_number(t.percentages[b]) << '\n';
}

void write_outcomes(std::ostream& out, const std::vector<OutcomeTable>& outcomes) {
  out << "community_id,outcome_name,value\n";
  for (const auto& t : outcomes)
    for (const auto& [c, v] : t.values) out << quote(c) << ',' << quote(t.name) << ',' << format_number(v) << '\n';
}

void write_weights(std::ostream& out, const std::vector<WeightAssignment>& weights) {
  out << "community_id,individual_id,psi\n";
  for (const auto& w : weights)
    for (const auto& [id, psi] : w.weights) out << quote(w.community) << ',' << quote(id) << ',' << format_number(psi) << '\n';
}

void write_community_features(std::ostream& out, const std::vector<CommunityFeatures>& features,
                              const FeatureVocabulary& vocabulary) {
  out << "community_id,feature_id,mean\n";
  for (const auto& cf : features)
    for (const auto& [f, x] : cf.means)
      out << quote(cf.community) << ',' << quote(vocabulary.name(f)) << ',' << format_number(x) << '\n';
}

LoadedDataset load_dataset(const DatasetPaths& paths, std::size_t min_community_size) {
  LoadedDataset out;
  auto& d = out.data;
  out.header = read_header(paths.users);
  d.individuals = read_users(paths.users);
  if (fs::exists(paths.features))
    d.features = read_features(paths.features, d.individuals, d.vocabulary);
  else
    d.features.assign(d.individuals.size(), {});
  d.margins = read_margins(paths.margins);
  if (fs::exists(paths.national_target)) d.targets = read_national_target(paths.national_target);
  if (fs::exists(paths.outcomes)) d.outcomes = read_outcomes(paths.outcomes);
  out.report = validate_dataset(d.individuals, d.features, d.margins, min_community_size);
  return out;
}

void save_dataset(const fs::path& dir, const Dataset& data, const std::string& header) {
  fs::create_directories(dir);
  const auto p = DatasetPaths::in(dir);
  {
    auto out = open_out(p.users, header);
    write_users(out, data.individuals);
  }
  {
    auto out = open_out(p.features, header);
    write_features(out, data.individuals, data.features, data.vocabulary);
  }
  {
    auto out = open_out(p.margins, header);
    write_margins(out, data.margins);
  }
  {
    auto out = open_out(p.national_target, header);
    write_national_target(out, data.targets);
  }
  {
    auto out = open_out(p.outcomes, header);
    write_outcomes(out, data.outcomes);
  }
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "data") data_dir = value;
  else if (key == "out") output_dir = value;
  else if (key == "method") correction.method = parse_method(value);
  else if (key == "vars") correction.variables = VariableSet::parse(value);
  else if (key == "redistribute") correction.redistribute = parse_bool(key, value);
  else if (key == "min_bin" || key == "min-bin") correction.min_bin_threshold = parse_value<std::uint32_t>(key, value);
  else if (key == "smooth_k" || key == "smooth-k") correction.smoothing_k = parse_value<double>(key, value);
  else if (key == "normalize") correction.normalize_weights = parse_bool(key, value);
  else if (key == "folds") pipeline.folds = parse_value<std::uint32_t>(key, value);
  else if (key == "seed") {
    pipeline.seed = parse_value<std::uint64_t>(key, value);
    seed_set = true;
  } else if (key == "lambda") pipeline.lambda = parse_value<double>(key, value);
  else if (key == "alpha") pipeline.alpha_family = parse_value<double>(key, value);
  else if (key == "min_variance") pipeline.min_variance = parse_value<double>(key, value);
  else if (key == "pca_ratio" || key == "ratio") pipeline.pca.ratio = parse_value<double>(key, value);
  else if (key == "reduce") pipeline.reduce = parse_bool(key, value);
  else if (key == "global_selection") pipeline.global_selection = parse_bool(key, value);
  else if (key == "tasks") {
    tasks.clear();
    std::stringstream ss(value);
    std::string t;
    while (std::getline(ss, t, ','))
      if (!trim(t).empty()) tasks.push_back(trim(t));
  } else throw Error("unknown setting '" + key + "'");
}

std::uint64_t RunConfig::fingerprint() const {
  std::string text = correction.describe() + "|" + pipeline.describe() + "|";
  for (const auto& t : tasks) text += t + ",";
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string RunConfig::header() const {
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(fingerprint()));
  return "# restrat seed=" + std::to_string(pipeline.seed) + " fingerprint=" + hex + " " + correction.describe() +
         ";" + pipeline.describe();
}

void load_config(const fs::path& path, RunConfig& config) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw SchemaError(path.string(), n, 1, "expected key = value");
    try {
      config.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const SchemaError&) {
      throw;
    } catch (const Error& e) {
      throw SchemaError(path.string(), n, eq + 2, e.what());
    }
  }
}

}  // namespace restrat

#include "restrat/core.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace restrat {

namespace {

const std::array<VariableInfo, kNumVariables> kInfo = {{
    {Variable::Age, "age", VariableKind::ContinuousScore, {13.0, 80.0}},
    {Variable::Gender, "gender", VariableKind::Dichotomous, {0.0, 1.0}},
    {Variable::Income, "income", VariableKind::ContinuousScore, {0.0, 500000.0}},
    {Variable::Education, "education", VariableKind::Dichotomous, {0.0, 1.0}},
}};

bool shares_sum_to_one(const std::vector<double>& pcts, std::size_t bins, double tol) {
  if (pcts.size() != bins) return false;
  double sum = 0.0;
  for (double p : pcts) {
    if (!(p >= 0.0 && p <= 1.0)) return false;
    sum += p;
  }
  return std::abs(sum - 1.0) <= tol;
}

}  // namespace

const VariableInfo& info(Variable v) { return kInfo[static_cast<std::size_t>(v)]; }

std::string_view to_string(Variable v) { return info(v).name; }

Variable parse_variable(std::string_view name) {
  for (const auto& i : kInfo)
    if (i.name == name) return i.variable;
  if (name == "gender_score") return Variable::Gender;
  if (name == "education_score") return Variable::Education;
  throw Error("unknown demographic variable '" + std::string(name) + "'");
}

bool is_dichotomous(Variable v) { return info(v).kind == VariableKind::Dichotomous; }

double clamp_to_range(Variable v, double value) {
  const auto& r = info(v).valid_range;
  return std::clamp(value, r.min, r.max);
}

int dichotomize(double score) { return score >= kDichotomyThreshold ? 1 : 0; }

// ---------------------------------------------------------------------------

VariableSet::VariableSet(std::initializer_list<Variable> vars) {
  for (auto v : vars) insert(v);
}

std::size_t VariableSet::size() const {
  std::size_t n = 0;
  for (auto v : kAllVariables) n += contains(v) ? 1 : 0;
  return n;
}

std::vector<Variable> VariableSet::list() const {
  std::vector<Variable> out;
  for (auto v : kAllVariables)
    if (contains(v)) out.push_back(v);
  return out;
}

std::string VariableSet::label() const {
  if (empty()) return "none";
  std::string s;
  for (auto v : list()) {
    if (!s.empty()) s += '+';
    s += to_string(v);
  }
  return s;
}

VariableSet VariableSet::parse(std::string_view text) {
  VariableSet set;
  if (text.empty() || text == "none") return set;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find_first_of("+,", start);
    if (end == std::string_view::npos) end = text.size();
    auto token = text.substr(start, end - start);
    if (!token.empty()) set.insert(parse_variable(token));
    start = end + 1;
  }
  return set;
}

// ---------------------------------------------------------------------------

void FeatureVector::normalize_order() {
  std::sort(entries.begin(), entries.end());
  // merge duplicates by summing
  std::vector<std::pair<FeatureIndex, double>> merged;
  merged.reserve(entries.size());
  for (const auto& e : entries) {
    if (!merged.empty() && merged.back().first == e.first)
      merged.back().second += e.second;
    else
      merged.push_back(e);
  }
  entries = std::move(merged);
}

double FeatureVector::get(FeatureIndex f) const {
  auto it = std::lower_bound(entries.begin(), entries.end(), f,
                             [](const auto& e, FeatureIndex key) { return e.first < key; });
  return (it != entries.end() && it->first == f) ? it->second : 0.0;
}

double FeatureVector::total() const {
  double s = 0.0;
  for (const auto& e : entries) s += e.second;
  return s;
}

FeatureIndex FeatureVocabulary::intern(const std::string& name) {
  auto [it, inserted] = index_.try_emplace(name, static_cast<FeatureIndex>(names_.size()));
  if (inserted) names_.push_back(name);
  return it->second;
}

std::optional<FeatureIndex> FeatureVocabulary::find(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

// ---------------------------------------------------------------------------

Partition::Partition(Variable variable, std::vector<Bin> bins)
    : variable_(variable), bins_(std::move(bins)) {
  if (bins_.empty()) throw Error("partition over " + std::string(to_string(variable)) + " has no bins");
  for (std::size_t l = 0; l < bins_.size(); ++l) {
    if (!(bins_[l].lo < bins_[l].hi))
      throw Error("partition over " + std::string(to_string(variable)) + ": bin " + std::to_string(l) +
                  " is empty or reversed");
    if (l > 0 && bins_[l].lo != bins_[l - 1].hi)
      throw Error("partition over " + std::string(to_string(variable)) + ": bins " + std::to_string(l - 1) +
                  " and " + std::to_string(l) + " are not contiguous");
  }
}

Partition Partition::from_edges(Variable variable, const std::vector<double>& edges) {
  if (edges.size() < 2) throw Error("partition needs at least two edges");
  std::vector<Bin> bins;
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) bins.push_back({edges[i], edges[i + 1]});
  return Partition(variable, std::move(bins));
}

std::size_t Partition::bin_index(double value) const {
  // first bin whose upper edge exceeds the value; the last bin is closed
  auto it = std::upper_bound(bins_.begin(), bins_.end(), value,
                             [](double v, const Bin& b) { return v < b.hi; });
  if (it == bins_.end()) return bins_.size() - 1;
  return static_cast<std::size_t>(it - bins_.begin());
}

Partition census_partition(Variable v) {
  switch (v) {
    case Variable::Age:
      return Partition::from_edges(v, {18, 20, 25, 30, 35, 40, 45, 50, 55, 60, 65, 80});
    case Variable::Gender:
    case Variable::Education:
      return Partition::from_edges(v, {0.0, kDichotomyThreshold, 1.0});
    case Variable::Income:
      return Partition::from_edges(v, {0, 10000, 15000, 25000, 35000, 50000, 75000, 100000, 150000,
                                       200000, 500000});
  }
  throw Error("unreachable");
}

Partition national_partition(Variable v) {
  switch (v) {
    case Variable::Age:
      return Partition::from_edges(v, {18, 30, 50, 65, 80});
    case Variable::Gender:
    case Variable::Education:
      return Partition::from_edges(v, {0.0, kDichotomyThreshold, 1.0});
    case Variable::Income:
      return Partition::from_edges(v, {0, 30000, 50000, 75000, 500000});
  }
  throw Error("unreachable");
}

bool MarginTable::valid(double tol) const {
  return shares_sum_to_one(percentages, partition.size(), tol);
}

bool NationalTarget::valid(double tol) const {
  return shares_sum_to_one(percentages, partition.size(), tol);
}

// ---------------------------------------------------------------------------

double WeightAssignment::mean() const {
  if (weights.empty()) return 0.0;
  double s = 0.0;
  for (const auto& w : weights) s += w.second;
  return s / static_cast<double>(weights.size());
}

double CommunityFeatures::get(FeatureIndex f) const {
  auto it = std::lower_bound(means.begin(), means.end(), f,
                             [](const auto& e, FeatureIndex key) { return e.first < key; });
  return (it != means.end() && it->first == f) ? it->second : 0.0;
}

std::string_view to_string(Method m) {
  switch (m) {
    case Method::FullPostStratification: return "full";
    case Method::Naive: return "naive";
    case Method::Raking: return "raking";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  if (name == "full" || name == "full-post-stratification" || name == "post-stratification")
    return Method::FullPostStratification;
  if (name == "naive") return Method::Naive;
  if (name == "raking" || name == "rake") return Method::Raking;
  throw Error("unknown correction method '" + std::string(name) + "'");
}

std::string CorrectionConfig::describe() const {
  std::ostringstream os;
  os.precision(17);
  os << "method=" << to_string(method) << ";vars=" << variables.label()
     << ";redistribute=" << (redistribute ? 1 : 0) << ";min_bin=" << min_bin_threshold
     << ";k=" << smoothing_k << ";normalize=" << (normalize_weights ? 1 : 0);
  return os.str();
}

void CorrectionConfig::check() const {
  if (!(smoothing_k >= 0.0) || !std::isfinite(smoothing_k))
    throw Error("smoothing constant must be finite and non-negative");
}

// ---------------------------------------------------------------------------

std::vector<CommunityId> Dataset::communities() const {
  std::set<CommunityId> ids;
  for (const auto& i : individuals) ids.insert(i.community);
  return {ids.begin(), ids.end()};
}

std::map<CommunityId, std::vector<std::size_t>> Dataset::members() const {
  std::map<CommunityId, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < individuals.size(); ++i) out[individuals[i].community].push_back(i);
  return out;
}

const MarginTable* Dataset::margin(const CommunityId& c, Variable v) const {
  for (const auto& m : margins)
    if (m.community == c && m.variable() == v) return &m;
  return nullptr;
}

const NationalTarget* Dataset::target(Variable v) const {
  for (const auto& t : targets)
    if (t.variable() == v) return &t;
  return nullptr;
}

const OutcomeTable* Dataset::outcome(const std::string& name) const {
  for (const auto& o : outcomes)
    if (o.name == name) return &o;
  return nullptr;
}

// ---------------------------------------------------------------------------

bool ValidationReport::clean() const {
  return small_communities.empty() && missing_demographics.empty() && invalid_features.empty() &&
         invalid_margins.empty();
}

std::vector<std::string> ValidationReport::messages() const {
  std::vector<std::string> out;
  for (const auto& [c, n] : small_communities)
    out.push_back("community " + c + " has " + std::to_string(n) + " individuals (< " +
                  std::to_string(min_community_size) + ")");
  for (const auto& id : missing_demographics) out.push_back("individual " + id + " is missing demographics");
  for (const auto& id : invalid_features) out.push_back("individual " + id + " has an invalid feature vector");
  for (const auto& [c, v] : invalid_margins)
    out.push_back("margins for community " + c + ", variable " + std::string(to_string(v)) +
                  " do not sum to one");
  for (auto v : kAllVariables)
    if (folded_below[static_cast<std::size_t>(v)] > 0)
      out.push_back(std::to_string(folded_below[static_cast<std::size_t>(v)]) + " " +
                    std::string(to_string(v)) + " values fall below the lowest census bin and are folded into it");
  return out;
}

ValidationReport validate_dataset(const std::vector<Individual>& individuals,
                                  const std::vector<FeatureVector>& features,
                                  const std::vector<MarginTable>& margins,
                                  std::size_t min_community_size) {
  ValidationReport report;
  report.min_community_size = min_community_size;

  std::map<CommunityId, std::size_t> sizes;
  for (const auto& ind : individuals) ++sizes[ind.community];
  for (const auto& m : margins) sizes.try_emplace(m.community, 0);
  report.community_count = sizes.size();
  for (const auto& [c, n] : sizes)
    if (n < min_community_size) report.small_communities.emplace_back(c, n);

  std::map<std::pair<CommunityId, Variable>, const MarginTable*> margin_index;
  for (const auto& m : margins) {
    margin_index[{m.community, m.variable()}] = &m;
    if (!m.valid()) report.invalid_margins.emplace_back(m.community, m.variable());
  }

  for (std::size_t i = 0; i < individuals.size(); ++i) {
    const auto& ind = individuals[i];
    bool missing = false;
    for (auto v : kAllVariables) {
      double x = ind.value(v);
      const auto& r = info(v).valid_range;
      if (!std::isfinite(x) || x < r.min || x > r.max) {
        missing = true;
        continue;
      }
      auto it = margin_index.find({ind.community, v});
      if (it != margin_index.end() && it->second->partition.folds_below(x))
        ++report.folded_below[static_cast<std::size_t>(v)];
    }
    if (missing) report.missing_demographics.push_back(ind.id);

    if (i < features.size()) {
      bool ok = true;
      for (const auto& [f, x] : features[i].entries)
        if (!std::isfinite(x) || x < 0.0) ok = false;
      if (ok && features[i].total() > 1.0 + 1e-9) ok = false;
      if (!ok) report.invalid_features.push_back(ind.id);
    }
  }
  return report;
}

}  // namespace restrat

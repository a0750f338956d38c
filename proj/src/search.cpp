#include "restrat/search.hpp"

#include <algorithm>
#include <cstring>
#include <set>

#include "restrat/aggregate.hpp"

namespace restrat {

std::vector<CorrectionConfig> GridSpec::cells() const {
  std::vector<CorrectionConfig> out;
  std::set<std::string> seen;
  auto add = [&](const CorrectionConfig& c) {
    if (seen.insert(c.describe()).second) out.push_back(c);
  };
  if (include_baseline) add(CorrectionConfig{});
  for (auto method : methods)
    for (const auto& vars : variable_sets) {
      if (vars.empty()) continue;
      for (bool redist : redistribution)
        for (auto thr : min_bin_thresholds)
          for (double k : smoothing_ks) {
            CorrectionConfig c;
            c.method = method;
            c.variables = vars;
            c.redistribute = redist;
            c.min_bin_threshold = thr;
            c.smoothing_k = k;
            add(c);
          }
    }
  return out;
}

std::uint64_t fingerprint(const std::vector<WeightAssignment>& weights) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& w : weights) {
    mix(w.community.data(), w.community.size());
    for (const auto& [id, psi] : w.weights) {
      mix(id.data(), id.size());
      mix(&psi, sizeof(psi));
    }
  }
  return h;
}

Evaluator::Evaluator(const Dataset& data, PipelineConfig pipeline, WeightOptions options)
    : data_(data), pipeline_(std::move(pipeline)), options_(options) {}

const std::vector<Individual>& Evaluator::individuals(bool redistributed) {
  if (!redistributed) return data_.individuals;
  if (!redistributed_) redistributed_ = redistribute_dataset(data_, options_.redistribution);
  return *redistributed_;
}

std::vector<WeightAssignment> Evaluator::weights(const CorrectionConfig& config) {
  config.check();
  if (config.redistribute)
    for (auto v : config.variables.list())
      if (data_.target(v) == nullptr)
        throw Error("redistribution requested but no national target for " + std::string(to_string(v)));
  return assign_community_weights(data_, individuals(config.redistribute && !config.variables.empty()), config,
                                  options_);
}

const FeatureMatrix& Evaluator::features(const std::vector<WeightAssignment>& weights) {
  const auto key = fingerprint(weights);
  auto it = feature_cache_.find(key);
  if (it != feature_cache_.end()) {
    ++cache_hits_;
    return it->second;
  }
  const auto aggregates = aggregate_dataset(data_, weights);
  return feature_cache_.emplace(key, build_feature_matrix(aggregates, data_.vocabulary)).first->second;
}

EvalResult Evaluator::evaluate_task(const CorrectionConfig& config, const std::string& task) {
  const OutcomeTable* outcome = data_.outcome(task);
  if (outcome == nullptr) throw Error("unknown outcome '" + task + "'");
  const auto& x = features(weights(config));
  auto [xs, y] = align_outcome(x, *outcome);
  auto result = cross_validate(xs, y, pipeline_);
  result.task = task;
  return result;
}

CellResult Evaluator::evaluate(const CorrectionConfig& config, const std::vector<std::string>& tasks) {
  CellResult cell;
  cell.config = config;
  try {
    const auto w = weights(config);
    cell.weights_fingerprint = fingerprint(w);
    const auto& x = features(w);
    double sum = 0.0;
    for (const auto& task : tasks) {
      const OutcomeTable* outcome = data_.outcome(task);
      if (outcome == nullptr) throw Error("unknown outcome '" + task + "'");
      auto [xs, y] = align_outcome(x, *outcome);
      const auto r = cross_validate(xs, y, pipeline_);
      cell.tasks.push_back({task, r.pearson_r, r.r_squared, r.rmse});
      sum += r.pearson_r;
    }
    cell.mean_r = tasks.empty() ? 0.0 : sum / static_cast<double>(tasks.size());
  } catch (const Error& e) {
    cell.error = e.what();
    cell.tasks.clear();
    cell.mean_r = 0.0;
  }
  return cell;
}

std::vector<CellResult> grid_search(Evaluator& evaluator, const std::vector<std::string>& tasks, const GridSpec& grid) {
  std::vector<CellResult> results;
  for (const auto& config : grid.cells()) results.push_back(evaluator.evaluate(config, tasks));
  std::stable_sort(results.begin(), results.end(), [](const CellResult& a, const CellResult& b) {
    if (a.error.empty() != b.error.empty()) return a.error.empty();
    if (a.mean_r != b.mean_r) return a.mean_r > b.mean_r;
    return a.config.describe() < b.config.describe();
  });
  return results;
}

EliminationResult backwards_eliminate(Evaluator& evaluator, const std::vector<std::string>& tasks,
                                      VariableSet full_set, const GridSpec& grid, const EliminationOptions& options) {
  std::map<std::uint8_t, CellResult> memo;
  auto score = [&](VariableSet set) -> const CellResult& {
    auto it = memo.find(set.bits());
    if (it != memo.end()) return it->second;
    std::optional<CellResult> best;
    if (set.empty()) {
      best = evaluator.evaluate(CorrectionConfig{}, tasks);
    } else {
      for (auto thr : grid.min_bin_thresholds)
        for (double k : grid.smoothing_ks) {
          CorrectionConfig c;
          c.method = Method::Raking;
          c.variables = set;
          c.redistribute = true;
          c.min_bin_threshold = thr;
          c.smoothing_k = k;
          auto r = evaluator.evaluate(c, tasks);
          if (!r.error.empty()) continue;
          if (!best || r.mean_r > best->mean_r) best = std::move(r);
        }
      if (!best) {
        best = CellResult{};
        best->config.variables = set;
        best->error = "every grid cell failed";
        best->mean_r = -1.0;
      }
    }
    return memo.emplace(set.bits(), std::move(*best)).first->second;
  };

  EliminationResult result;
  VariableSet current = full_set;
  result.best = score(current);
  result.trace.push_back({current, result.best, true});
  double reference = result.best.mean_r;

  while (!current.empty()) {
    std::optional<Variable> drop;
    const CellResult* drop_score = nullptr;
    for (auto v : current.list()) {
      VariableSet candidate = current;
      candidate.erase(v);
      const CellResult& s = score(candidate);
      result.trace.push_back({candidate, s, false});
      const bool better = drop_score == nullptr || s.mean_r > drop_score->mean_r ||
                          (s.mean_r == drop_score->mean_r && to_string(v) > to_string(*drop));
      if (better) {
        drop = v;
        drop_score = &s;
      }
    }
    if (drop_score->mean_r < reference - options.tolerance) break;
    current.erase(*drop);
    result.best = *drop_score;
    reference = std::max(reference, drop_score->mean_r);
    for (auto it = result.trace.rbegin(); it != result.trace.rend(); ++it)
      if (it->variables == current) {
        it->accepted = true;
        break;
      }
  }
  result.variables = current;
  return result;
}

}  // namespace restrat

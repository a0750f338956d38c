#include <doctest.h>

#include <cstring>
#include <map>

#include "restrat/aggregate.hpp"
#include "restrat/search.hpp"
#include "restrat/synth.hpp"

using namespace restrat;

namespace {

const SynthOutput& small_world() {
  static const SynthOutput out = [] {
    SynthSpec s;
    s.seed = 21;
    s.n_communities = 60;
    s.population_size = 600;
    s.sample_size = 120;
    s.n_features = 20;
    s.selection_coef[static_cast<std::size_t>(Variable::Income)] = -1.0;
    s.shrinkage = {0.3, 0.3, 0.3, 0.3};
    return generate(s);
  }();
  return out;
}

PipelineConfig small_pipeline() {
  PipelineConfig p;
  p.folds = 5;
  p.alpha_family = 1000.0;
  p.lambda = 1.0;
  p.pca.ratio = 0.5;
  return p;
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof(double)) == 0; }

}  // namespace

TEST_CASE("grid cells are deduplicated and include the baseline once") {
  GridSpec g;
  g.variable_sets = {VariableSet{Variable::Income}, VariableSet{Variable::Income}, VariableSet{}};
  g.min_bin_thresholds = {10, 50};
  g.smoothing_ks = {1, 10};
  const auto cells = g.cells();
  CHECK(cells.size() == 5);
  CHECK(cells.front() == CorrectionConfig{});
  g.include_baseline = false;
  CHECK(g.cells().size() == 4);
}

TEST_CASE("fingerprints follow every psi bit") {
  std::vector<WeightAssignment> a = {{"c", {{"u", 1.0}, {"v", 2.0}}}};
  auto b = a;
  CHECK(fingerprint(a) == fingerprint(b));
  b[0].weights[1].second = std::nextafter(2.0, 3.0);
  CHECK(fingerprint(a) != fingerprint(b));
}

TEST_CASE("a one-cell grid returns one result") {
  Evaluator ev(small_world().dataset, small_pipeline());
  GridSpec g;
  g.include_baseline = false;
  g.variable_sets = {VariableSet{Variable::Income}};
  g.min_bin_thresholds = {50};
  g.smoothing_ks = {10};
  const auto r = grid_search(ev, {"outcome1"}, g);
  REQUIRE(r.size() == 1);
  CHECK(r[0].error.empty());
  CHECK(r[0].tasks.size() == 1);
  CHECK(r[0].mean_r == r[0].tasks[0].pearson_r);
}

TEST_CASE("the baseline cell is the uncorrected pipeline") {
  const auto& data = small_world().dataset;
  Evaluator ev(data, small_pipeline());
  const auto cell = ev.evaluate(CorrectionConfig{}, {"outcome1"});

  const auto fm = build_feature_matrix(aggregate_dataset(data, {}), data.vocabulary);
  const auto [x, y] = align_outcome(fm, *data.outcome("outcome1"));
  const auto direct = cross_validate(x, y, small_pipeline());
  CHECK(same_bits(cell.tasks[0].pearson_r, direct.pearson_r));
  CHECK(same_bits(cell.tasks[0].rmse, direct.rmse));
  for (const auto& w : ev.weights(CorrectionConfig{}))
    for (const auto& [id, psi] : w.weights) CHECK(psi == 1.0);
}

TEST_CASE("a threshold that merges everything reuses the baseline features") {
  Evaluator ev(small_world().dataset, small_pipeline());
  const auto base = ev.evaluate(CorrectionConfig{}, {"outcome1"});
  CorrectionConfig c;
  c.variables = {Variable::Income, Variable::Age};
  c.redistribute = true;
  c.min_bin_threshold = 1000;
  const auto merged = ev.evaluate(c, {"outcome1"});
  CHECK(merged.weights_fingerprint == base.weights_fingerprint);
  CHECK(ev.cache_hits() >= 1);
  CHECK(same_bits(merged.mean_r, base.mean_r));
}

TEST_CASE("grid search is deterministic and ranked") {
  GridSpec g;
  g.variable_sets = {VariableSet{Variable::Income}, VariableSet{Variable::Income, Variable::Education}};
  g.min_bin_thresholds = {10, 50};
  g.smoothing_ks = {0, 10};
  Evaluator e1(small_world().dataset, small_pipeline()), e2(small_world().dataset, small_pipeline());
  const auto a = grid_search(e1, {"outcome1"}, g), b = grid_search(e2, {"outcome1"}, g);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].config == b[i].config);
    CHECK(same_bits(a[i].mean_r, b[i].mean_r));
    if (i > 0) CHECK(a[i - 1].mean_r >= a[i].mean_r);
  }
}

TEST_CASE("failed cells are kept and ranked last") {
  Dataset data = small_world().dataset;
  data.targets.clear();
  Evaluator ev(data, small_pipeline());
  GridSpec g;
  g.variable_sets = {VariableSet{Variable::Income}};
  g.min_bin_thresholds = {10};
  g.smoothing_ks = {10};
  const auto r = grid_search(ev, {"outcome1"}, g);
  REQUIRE(r.size() == 2);
  CHECK(r[0].error.empty());
  CHECK_FALSE(r[1].error.empty());
}

TEST_CASE("elimination removes variables whose correction changes nothing") {
  // census margins equal to the sample's own shares make every psi one
  Dataset data = small_world().dataset;
  Evaluator probe(data, small_pipeline());
  const auto people = probe.individuals(true);
  std::map<CommunityId, std::vector<const Individual*>> members;
  for (const auto& p : people) members[p.community].push_back(&p);
  data.margins.clear();
  for (const auto& [c, list] : members)
    for (auto v : kAllVariables) {
      MarginTable m;
      m.community = c;
      m.partition = census_partition(v);
      m.percentages.assign(m.partition.size(), 0.0);
      for (const auto* p : list) m.percentages[m.partition.bin_index(p->value(v))] += 1.0 / static_cast<double>(list.size());
      data.margins.push_back(m);
    }
  Evaluator ev(data, small_pipeline());
  GridSpec g;
  g.min_bin_thresholds = {10, 50};
  g.smoothing_ks = {1, 10};
  const auto r = backwards_eliminate(ev, {"outcome1"}, VariableSet{Variable::Age, Variable::Income}, g);
  CHECK(r.variables.empty());
  CHECK(r.trace.size() >= 3);
  CHECK(r.best.config == CorrectionConfig{});
}

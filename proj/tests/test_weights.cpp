#include <doctest.h>

#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "restrat/synth.hpp"
#include "restrat/weights.hpp"

using namespace restrat;

namespace {

std::vector<Individual> gender_sample(int women, int men) {
  std::vector<Individual> out;
  for (int j = 0; j < women + men; ++j) {
    Individual i;
    i.id = "u" + std::to_string(j);
    i.community = "c";
    i.demographics = {30, j < women ? 0.9 : 0.1, 40000, 0.2};
    out.push_back(i);
  }
  return out;
}

MarginTable margin(Variable v, std::vector<double> pct, const std::string& c = "c") {
  MarginTable m;
  m.community = c;
  m.partition = census_partition(v);
  m.percentages = std::move(pct);
  return m;
}

// plain two-way IPF used as an independent oracle
std::vector<double> ipf_2x2(std::vector<double> t, const std::vector<double>& rows, const std::vector<double>& cols) {
  const double s = std::accumulate(t.begin(), t.end(), 0.0);
  for (auto& x : t) x /= s;
  for (int it = 0; it < 1000; ++it) {
    for (int r = 0; r < 2; ++r) {
      const double m = t[2 * r] + t[2 * r + 1];
      t[2 * r] *= rows[r] / m;
      t[2 * r + 1] *= rows[r] / m;
    }
    for (int c = 0; c < 2; ++c) {
      const double m = t[c] + t[2 + c];
      t[c] *= cols[c] / m;
      t[2 + c] *= cols[c] / m;
    }
  }
  return t;
}

}  // namespace

TEST_CASE("cell weights are population over sample shares") {
  CHECK(cell_weight(0.504, 0.538) == doctest::Approx(0.9368).epsilon(1e-4));
  CHECK(cell_weight(0.3, 0.3) == 1.0);
  CHECK(cell_weight(0.2, 0.1) == doctest::Approx(2.0));
  CHECK(cell_weight(0.0, 0.1) == 0.0);
  CHECK_THROWS_AS(cell_weight(0.2, 0.0, 4), UndefinedCellError);
  try {
    cell_weight(0.2, 0.0, 4);
  } catch (const UndefinedCellError& e) {
    CHECK(e.cell() == 4);
  }
  CHECK_THROWS_AS(cell_weight(-0.1, 0.2), Error);
}

TEST_CASE("naive joint is the outer product") {
  const auto a = Partition::from_edges(Variable::Age, {0, 1, 2});
  const auto b = Partition::from_edges(Variable::Gender, {0, 0.5, 1});
  const auto t = naive_joint({{a, {0.5, 0.5}}, {b, {0.3, 0.7}}});
  CHECK(t.cells() == std::vector<double>{0.15, 0.35, 0.15, 0.35});
  const auto single = naive_joint({{a, {0.25, 0.75}}});
  CHECK(single.cells() == std::vector<double>{0.25, 0.75});
}

TEST_CASE("survey-shaped joint table has 96 cells summing to one") {
  auto norm = [](std::vector<double> x) {
    const double s = std::accumulate(x.begin(), x.end(), 0.0);
    for (auto& v : x) v /= s;
    return x;
  };
  const auto t = naive_joint({{national_partition(Variable::Age), norm({23, 35, 25, 17})},
                              {national_partition(Variable::Gender), {0.517, 0.483}},
                              {national_partition(Variable::Income), norm({30, 20, 20, 30})},
                              {Partition::from_edges(Variable::Education, {0, 1, 2, 3}), norm({30, 27, 43})}});
  CHECK(t.cell_count() == 96);
  CHECK(t.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(t.marginal(3)[2] == doctest::Approx(0.43).epsilon(1e-12));
}

TEST_CASE("joint table indexing round trips") {
  JointCellTable t({Partition::from_edges(Variable::Age, {0, 1, 2, 3}), Partition::from_edges(Variable::Gender, {0, 1}),
                    Partition::from_edges(Variable::Income, {0, 1, 2})});
  for (std::size_t i = 0; i < t.cell_count(); ++i) CHECK(t.flat(t.unflatten(i)) == i);
  const std::vector<std::size_t> bad = {3, 0, 0};
  CHECK_THROWS_AS(t.flat(bad), Error);
}

TEST_CASE("raking a 2x2 table matches an independent IPF") {
  const auto a = Partition::from_edges(Variable::Age, {0, 1, 2});
  const auto b = Partition::from_edges(Variable::Gender, {0, 0.5, 1});
  JointCellTable t({a, b});
  t.cells() = {10, 20, 30, 40};
  const auto r = rake(t, {{0.5, 0.5}, {0.5, 0.5}});
  for (std::size_t axis = 0; axis < 2; ++axis)
    for (double m : r.table.marginal(axis)) CHECK(std::abs(m - 0.5) < 1e-6);
  const auto oracle = ipf_2x2({10, 20, 30, 40}, {0.5, 0.5}, {0.5, 0.5});
  for (std::size_t c = 0; c < 4; ++c) CHECK(std::abs(r.table.cells()[c] - oracle[c]) < 1e-6);
  // the table is the normalized input scaled by the cumulative factors
  for (std::size_t c = 0; c < 4; ++c) {
    const auto idx = t.unflatten(c);
    CHECK(r.table.cells()[c] == doctest::Approx(t.cells()[c] / 100.0 * r.factors[0][idx[0]] * r.factors[1][idx[1]]));
  }
}

TEST_CASE("raking a table that already matches stops after one sweep") {
  const auto a = Partition::from_edges(Variable::Age, {0, 1, 2});
  JointCellTable t({a, a});
  t.cells() = {0.12, 0.18, 0.28, 0.42};
  const auto r = rake(t, {{0.3, 0.7}, {0.4, 0.6}});
  CHECK(r.iterations == 1);
  for (std::size_t c = 0; c < 4; ++c) CHECK(r.table.cells()[c] == doctest::Approx(t.cells()[c]).epsilon(1e-12));
}

TEST_CASE("structural zeros stop raking") {
  const auto a = Partition::from_edges(Variable::Age, {0, 1, 2});
  JointCellTable t({a, a});
  t.cells() = {0, 0, 3, 4};
  CHECK_THROWS_AS(rake(t, {{0.5, 0.5}, {0.5, 0.5}}), StructuralZeroError);
  CHECK_THROWS_AS(rake(t, {{0.5, 0.5}, {0.5, 0.5}}), ConvergenceError);
  // a zero row with zero target is fine
  const auto r = rake(t, {{0.0, 1.0}, {0.5, 0.5}});
  CHECK(r.table.marginal(1)[0] == doctest::Approx(0.5));
}

TEST_CASE("raking reports non-convergence") {
  const auto a = Partition::from_edges(Variable::Age, {0, 1, 2});
  JointCellTable t({a, a});
  t.cells() = {1, 1e-6, 1e-6, 1};
  RakeOptions opts;
  opts.max_iter = 2;
  opts.tol = 1e-12;
  CHECK_THROWS_AS(rake(t, {{0.1, 0.9}, {0.9, 0.1}}, opts), ConvergenceError);
}

TEST_CASE("informed smoothing") {
  CHECK(smooth_sample_prob(17, 60, 0.4, 0) == 17.0 / 60.0);
  CHECK(std::abs(smooth_sample_prob(3, 200, 0.37, 1e9) - 0.37) < 1e-6);
  CHECK(smooth_sample_prob(0, 100, 0.2, 10) == doctest::Approx(2.0 / 110.0));
  CHECK_THROWS_AS(smooth_sample_prob(5, 4, 0.2, 1), Error);
  CHECK_THROWS_AS(smooth_sample_prob(1, 4, 0.2, -1), Error);
}

TEST_CASE("no variables means no correction") {
  const auto people = gender_sample(75, 25);
  const auto w = assign_weights(people, CorrectionConfig{}, std::vector<MarginTable>{});
  for (const auto& [id, psi] : w.weights) CHECK(psi == 1.0);
}

TEST_CASE("a single merged bin means no correction") {
  const auto people = gender_sample(75, 25);
  CorrectionConfig c;
  c.variables = {Variable::Gender};
  c.min_bin_threshold = 1000;
  for (Method m : {Method::FullPostStratification, Method::Naive, Method::Raking}) {
    c.method = m;
    const auto w = assign_weights(people, c, std::vector<MarginTable>{margin(Variable::Gender, {0.5, 0.5})});
    for (const auto& [id, psi] : w.weights) CHECK(psi == 1.0);
  }
}

TEST_CASE("two bins, 75/25 sample against a 50/50 population") {
  const auto people = gender_sample(25, 75);  // 25 class-1, 75 class-0
  CorrectionConfig c;
  c.variables = {Variable::Gender};
  const std::vector<MarginTable> margins = {margin(Variable::Gender, {0.5, 0.5})};
  for (Method m : {Method::FullPostStratification, Method::Naive, Method::Raking}) {
    c.method = m;
    const auto w = assign_weights(people, c, margins);
    CHECK(w.weights[0].second == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(w.weights[99].second == doctest::Approx(2.0 / 3.0).epsilon(1e-6));
  }
}

TEST_CASE("missing margins are an error") {
  CorrectionConfig c;
  c.variables = {Variable::Age};
  CHECK_THROWS_AS(assign_weights(gender_sample(3, 3), c, std::vector<MarginTable>{}), Error);
}

TEST_CASE("weighted sample reproduces population marginals") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> age(40, 14), linc(10.6, 0.7);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<Individual> people(600);
  for (std::size_t j = 0; j < people.size(); ++j) {
    people[j].id = std::to_string(j);
    people[j].community = "c";
    people[j].demographics = {std::clamp(age(rng), 18.0, 80.0), u(rng), std::exp(linc(rng)), u(rng) * 0.7};
  }
  const std::vector<MarginTable> margins = {
      margin(Variable::Age, {0.04, 0.08, 0.09, 0.09, 0.09, 0.1, 0.1, 0.1, 0.1, 0.09, 0.12}),
      margin(Variable::Income, {0.08, 0.05, 0.1, 0.1, 0.15, 0.18, 0.12, 0.12, 0.05, 0.05})};
  CorrectionConfig c;
  c.variables = {Variable::Age, Variable::Income};
  c.min_bin_threshold = 10;
  for (Method m : {Method::Naive, Method::Raking}) {
    c.method = m;
    const auto w = assign_weights(people, c, margins);
    // merged partitions are reproduced by construction; check them through the adaptive bins
    for (std::size_t v = 0; v < 2; ++v) {
      const Variable var = v == 0 ? Variable::Age : Variable::Income;
      std::vector<double> values;
      for (const auto& p : people) values.push_back(p.value(var));
      const auto merged = adaptive_bin(count_values(values, margins[v].partition), c.min_bin_threshold);
      const auto pop = project_margins(margins[v], merged.partition);
      std::vector<double> weighted(merged.partition.size(), 0.0);
      for (std::size_t j = 0; j < people.size(); ++j)
        weighted[merged.partition.bin_index(values[j])] += w.weights[j].second / static_cast<double>(people.size());
      for (std::size_t l = 0; l < weighted.size(); ++l) {
        if (m == Method::Raking)
          CHECK(std::abs(weighted[l] - pop.percentages[l]) < 1e-5);
        else
          // naive cells only hold the product target exactly when every cell is occupied
          CHECK(weighted[l] == doctest::Approx(pop.percentages[l]).epsilon(0.5));
      }
    }
  }
}

TEST_CASE("full post-stratification with a population joint") {
  const auto people = gender_sample(25, 75);
  CorrectionConfig c;
  c.method = Method::FullPostStratification;
  c.variables = {Variable::Gender};
  JointCellTable joint({census_partition(Variable::Gender)});
  joint.cells() = {0.6, 0.4};
  const std::vector<MarginTable> margins = {margin(Variable::Gender, {0.6, 0.4})};
  const auto w = assign_weights(people, c, margins, {}, &joint);
  CHECK(w.weights[0].second == doctest::Approx(0.4 / 0.25));
  CHECK(w.weights[99].second == doctest::Approx(0.6 / 0.75));
}

TEST_CASE("normalized weights average one") {
  const auto people = gender_sample(25, 75);
  CorrectionConfig c;
  c.variables = {Variable::Gender};
  c.normalize_weights = true;
  const auto w = assign_weights(people, c, std::vector<MarginTable>{margin(Variable::Gender, {0.2, 0.7 + 0.1})});
  CHECK(w.mean() == doctest::Approx(1.0));
}

TEST_CASE("communities that cannot be corrected fall back to one") {
  Dataset d;
  d.individuals = gender_sample(10, 10);
  d.features.resize(20);
  CorrectionConfig c;
  c.variables = {Variable::Gender};
  const auto w = assign_dataset_weights(d, c);
  REQUIRE(w.communities.size() == 1);
  CHECK_FALSE(w.communities[0].corrected);
  CHECK_FALSE(w.communities[0].warnings.empty());
  for (const auto& [id, psi] : w.communities[0].weights) CHECK(psi == 1.0);
  c.redistribute = true;
  CHECK_THROWS_AS(assign_dataset_weights(d, c), Error);
}

TEST_CASE("recommended configuration on synthetic data") {
  SynthSpec spec;
  spec.seed = 12;
  spec.n_communities = 40;
  spec.population_size = 800;
  spec.sample_size = 150;
  spec.selection_coef[static_cast<std::size_t>(Variable::Income)] = -1.0;
  spec.selection_coef_sd[static_cast<std::size_t>(Variable::Income)] = 0.8;
  spec.selection_coef[static_cast<std::size_t>(Variable::Education)] = 0.8;
  spec.shrinkage = {0.5, 0.5, 0.5, 0.5};
  const auto syn = generate(spec);
  CorrectionConfig c;
  c.variables = {Variable::Income, Variable::Education};
  c.redistribute = true;
  c.min_bin_threshold = 50;
  c.smoothing_k = 10;
  const auto w = assign_dataset_weights(syn.dataset, c);
  std::vector<double> mean_log;
  for (const auto& a : w.communities) {
    CHECK(a.corrected);
    double s = 0;
    std::size_t n = 0;
    for (const auto& [id, psi] : a.weights) {
      CHECK(std::isfinite(psi));
      if (psi > 0) {
        s += std::abs(std::log(psi));
        ++n;
      }
    }
    mean_log.push_back(s / static_cast<double>(n));
  }
  const auto [lo, hi] = std::minmax_element(mean_log.begin(), mean_log.end());
  CHECK(*lo >= 0.0);
  CHECK(*hi > 0.0);
  CHECK(*hi - *lo > 0.01);
}

TEST_CASE("psi is non-increasing in distance from one as k grows") {
  const auto people = gender_sample(20, 80);
  CorrectionConfig c;
  c.method = Method::Naive;
  c.variables = {Variable::Gender};
  const std::vector<MarginTable> margins = {margin(Variable::Gender, {0.45, 0.55})};
  double prev0 = 1e9, prev1 = 1e9;
  for (double k : {0.0, 1.0, 10.0, 100.0, 1e4, 1e9}) {
    c.smoothing_k = k;
    const auto w = assign_weights(people, c, margins);
    const double d0 = std::abs(w.weights[0].second - 1.0), d1 = std::abs(w.weights[99].second - 1.0);
    CHECK(d0 <= prev0);
    CHECK(d1 <= prev1);
    prev0 = d0;
    prev1 = d1;
  }
  CHECK(prev0 < 1e-6);
}

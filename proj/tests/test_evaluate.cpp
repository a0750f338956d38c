#include <doctest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <random>

#include "restrat/evaluate.hpp"

using namespace restrat;

namespace {

std::vector<double> normals(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> x(n);
  for (auto& v : x) v = g(rng);
  return x;
}

double fisher(const std::vector<double>& p) {
  double s = 0;
  for (double x : p) s += -2.0 * std::log(x);
  boost::math::chi_squared d(2.0 * static_cast<double>(p.size()));
  return boost::math::cdf(boost::math::complement(d, s));
}

}  // namespace

TEST_CASE("metrics at the extremes") {
  const std::vector<double> a = {1, 4, 2, 8, 5};
  std::vector<double> neg;
  for (double x : a) neg.push_back(-x);
  CHECK(pearson_r(a, a) == doctest::Approx(1.0));
  CHECK(r_squared(a, a) == doctest::Approx(1.0));
  CHECK(rmse(a, a) == 0.0);
  CHECK(pearson_r(neg, a) == doctest::Approx(-1.0));
  const std::vector<double> flat = {2, 2, 2, 2, 2};
  CHECK_THROWS_AS(pearson_r(flat, a), Error);
  CHECK_THROWS_AS(pearson_r(std::vector<double>{1, 2}, std::vector<double>{1, 2}), Error);
  CHECK(rmse(std::vector<double>{0, 0, 0}, std::vector<double>{3, 0, -3}) == doctest::Approx(std::sqrt(6.0)));
}

TEST_CASE("pearson r is invariant under positive affine maps") {
  const auto x = normals(100, 1), y = normals(100, 2);
  const double r = pearson_r(x, y);
  std::vector<double> x2, y2;
  for (double v : x) x2.push_back(3.5 * v - 7.0);
  for (double v : y) y2.push_back(0.01 * v + 100.0);
  CHECK(pearson_r(x2, y2) == doctest::Approx(r).epsilon(1e-12));
}

TEST_CASE("published r and R-squared pairs agree up to rounding") {
  // (r, R^2) rows of the baseline and corrected columns of the recommended-model table
  const std::vector<std::pair<double, double>> rows = {{.753, .563}, {.614, .371}, {.445, .187}, {.746, .552},
                                                       {.769, .588}, {.626, .388}, {.542, .286}, {.778, .603}};
  for (auto [r, r2] : rows) {
    CHECK(r * r >= r2);
    CHECK(r * r - r2 < 0.012);
  }
  // ours is the exact square
  const auto x = normals(50, 3), y = normals(50, 4);
  CHECK(r_squared(x, y) == pearson_r(x, y) * pearson_r(x, y));
}

TEST_CASE("paired test on identical residuals") {
  const auto r = normals(30, 5);
  const auto t = paired_residual_test(r, r);
  CHECK(t.p_value == 1.0);
  CHECK(t.degenerate);
}

TEST_CASE("paired test against a hand computation") {
  const auto b = normals(200, 6);
  std::vector<double> a;
  for (double v : b) a.push_back(0.5 * v);
  const auto t = paired_residual_test(a, b);
  double mean = 0, ss = 0;
  for (double v : b) mean += -0.5 * std::abs(v);
  mean /= 200.0;
  for (double v : b) ss += (-0.5 * std::abs(v) - mean) * (-0.5 * std::abs(v) - mean);
  const double tt = mean / std::sqrt(ss / 199.0 / 200.0);
  CHECK(t.t_statistic == doctest::Approx(tt).epsilon(1e-12));
  CHECK(t.mean_difference < 0);
  CHECK(t.p_value < 0.001);
  boost::math::students_t d(199.0);
  CHECK(t.p_value == doctest::Approx(2.0 * boost::math::cdf(boost::math::complement(d, std::abs(tt)))));
}

TEST_CASE("paired test is calibrated under the null") {
  int rejections = 0;
  for (std::uint64_t trial = 0; trial < 1000; ++trial) {
    const auto a = normals(40, 1000 + 2 * trial), b = normals(40, 1001 + 2 * trial);
    if (paired_residual_test(a, b).p_value < 0.05) ++rejections;
  }
  CHECK(rejections > 30);
  CHECK(rejections < 70);
}

TEST_CASE("combined p-values reduce to Fisher under independence") {
  const std::vector<double> p = {.01, .04, .20, .50};
  CHECK(std::abs(combine_dependent_pvalues(p, Eigen::MatrixXd::Identity(4, 4)) - fisher(p)) < 1e-12);
  const std::vector<double> one = {0.3};
  CHECK(std::abs(combine_dependent_pvalues(one, Eigen::MatrixXd::Identity(1, 1)) - 0.3) < 1e-12);
}

TEST_CASE("perfectly dependent tests combine to the single p") {
  for (double p : {0.01, 0.05, 0.2, 0.6}) {
    const std::vector<double> ps(4, p);
    CHECK(std::abs(combine_dependent_pvalues(ps, Eigen::MatrixXd::Ones(4, 4)) - p) < 0.02);
  }
}

TEST_CASE("positive correlation weakens the combined evidence") {
  const std::vector<double> p = {.01, .04, .20, .50};
  Eigen::MatrixXd c = Eigen::MatrixXd::Constant(4, 4, 0.3);
  c.diagonal().setOnes();
  CHECK(combine_dependent_pvalues(p, c) > fisher(p));
  CHECK(kost_mcdermott_covariance(0.0) == 0.0);
  CHECK(kost_mcdermott_covariance(1.0) == doctest::Approx(4.0));
}

TEST_CASE("invalid combination inputs") {
  const std::vector<double> p = {.1, .2};
  Eigen::MatrixXd c = Eigen::MatrixXd::Identity(2, 2);
  c(0, 1) = c(1, 0) = 1.5;
  CHECK_THROWS_AS(combine_dependent_pvalues(p, c), Error);
  c(0, 1) = 0.2;
  c(1, 0) = 0.1;
  CHECK_THROWS_AS(combine_dependent_pvalues(p, c), Error);
  CHECK_THROWS_AS(combine_dependent_pvalues(std::vector<double>{0.0, 0.5}, Eigen::MatrixXd::Identity(2, 2)), Error);
  CHECK_THROWS_AS(combine_dependent_pvalues(p, Eigen::MatrixXd::Identity(3, 3)), Error);
}

TEST_CASE("classification of a comparison") {
  CHECK(classify(0.6, 0.7, 0.01) == Direction::SignificantIncrease);
  CHECK(classify(0.6, 0.5, 0.01) == Direction::SignificantDecrease);
  CHECK(classify(0.6, 0.7, 0.2) == Direction::NotSignificant);
  CHECK(to_string(Direction::SignificantIncrease) == "+");
}

TEST_CASE("midpoint imputation") {
  const auto age = census_partition(Variable::Age);
  CHECK(imputed_midpoint(age, 0) == doctest::Approx(0.5 * (age.bins()[0].lo + age.bins()[0].hi)));
  CHECK(imputed_midpoint(age, age.size() - 1) == doctest::Approx(1.5 * age.bins().back().lo));
  const auto g = census_partition(Variable::Gender);
  CHECK(imputed_midpoint(g, 1) == doctest::Approx(0.75));
}

namespace {

std::vector<Individual> community(const std::string& c, const std::vector<double>& ages, double female_share) {
  std::vector<Individual> out;
  for (std::size_t j = 0; j < ages.size(); ++j) {
    Individual i;
    i.id = c + std::to_string(j);
    i.community = c;
    const bool female = static_cast<double>(j) < female_share * static_cast<double>(ages.size());
    i.demographics = {ages[j], female ? 1.0 : 0.0, 50000, 0.0};
    out.push_back(i);
  }
  return out;
}

MarginTable gender_margin(const std::string& c, double female) {
  MarginTable m;
  m.community = c;
  m.partition = census_partition(Variable::Gender);
  m.percentages = {1.0 - female, female};
  return m;
}

}  // namespace

TEST_CASE("bias is zero when the sample matches the census") {
  const auto people = community("c", std::vector<double>(10, 30.0), 0.5);
  const auto r = quantify_bias(people, {}, {gender_margin("c", 0.5)}, VariableSet{Variable::Gender});
  REQUIRE(r.find(Variable::Gender));
  CHECK(r.find(Variable::Gender)->bias == 0.0);
  CHECK(r.find(Variable::Gender)->communities == 1);
}

TEST_CASE("near-balanced gender shares give small bias") {
  // census 50.4 percent female, sample 53.8 percent
  std::vector<Individual> people;
  for (int j = 0; j < 1000; ++j) {
    Individual i;
    i.id = std::to_string(j);
    i.community = "c";
    i.demographics = {30, j < 538 ? 0.9 : 0.1, 50000, 0};
    people.push_back(i);
  }
  const auto r = quantify_bias(people, {}, {gender_margin("c", 0.504)}, VariableSet{Variable::Gender});
  CHECK(r.find(Variable::Gender)->bias == doctest::Approx(0.034));
}

TEST_CASE("weights that fix the share remove the bias") {
  const auto people = community("c", std::vector<double>(4, 30.0), 0.75);
  WeightAssignment w{"c", {{"c0", 1.0}, {"c1", 1.0}, {"c2", 1.0}, {"c3", 3.0}}};
  const auto before = quantify_bias(people, {}, {gender_margin("c", 0.5)}, VariableSet{Variable::Gender});
  const auto after = quantify_bias(people, {w}, {gender_margin("c", 0.5)}, VariableSet{Variable::Gender});
  CHECK(before.find(Variable::Gender)->bias == doctest::Approx(0.25));
  CHECK(after.find(Variable::Gender)->bias == doctest::Approx(0.0));
}

TEST_CASE("younger samples show positive age bias") {
  MarginTable m;
  m.community = "c";
  m.partition = census_partition(Variable::Age);
  m.percentages.assign(m.partition.size(), 1.0 / static_cast<double>(m.partition.size()));
  double cmean = 0;
  for (std::size_t l = 0; l < m.partition.size(); ++l) cmean += m.percentages[l] * imputed_midpoint(m.partition, l);
  std::vector<double> matching, young;
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0, 10);
  for (int j = 0; j < 400; ++j) {
    const double e = g(rng);
    matching.push_back(cmean + e);
    young.push_back(cmean - 10 + e);
  }
  const auto b0 = quantify_bias(community("c", matching, 0.5), {}, {m}, VariableSet{Variable::Age});
  const auto b1 = quantify_bias(community("c", young, 0.5), {}, {m}, VariableSet{Variable::Age});
  CHECK(b1.find(Variable::Age)->bias > b0.find(Variable::Age)->bias);
  CHECK(b1.find(Variable::Age)->bias > 0.3);
  CHECK(b0.find(Variable::Age)->bias >= 0.0);
}

TEST_CASE("communities without margins are skipped with a warning") {
  const auto people = community("c", {30, 40}, 0.5);
  const auto r = quantify_bias(people, {}, {}, VariableSet{Variable::Gender});
  CHECK(r.find(Variable::Gender)->skipped == 1);
  CHECK_FALSE(r.warnings.empty());
}

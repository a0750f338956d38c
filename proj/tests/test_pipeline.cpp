#include <doctest.h>

#include <algorithm>
#include <random>

#include "restrat/pipeline.hpp"

using namespace restrat;

namespace {

Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd x(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) x(i, j) = g(rng);
  return x;
}

FeatureMatrix with_ids(Eigen::MatrixXd x) {
  FeatureMatrix m;
  for (Eigen::Index i = 0; i < x.rows(); ++i) m.rows.push_back("c" + std::to_string(i));
  for (Eigen::Index j = 0; j < x.cols(); ++j) m.cols.push_back("f" + std::to_string(j));
  m.values = std::move(x);
  return m;
}

std::size_t kept(const ColumnMask& m) { return static_cast<std::size_t>(std::count(m.begin(), m.end(), true)); }

}  // namespace

TEST_CASE("feature matrix from community aggregates") {
  FeatureVocabulary v;
  v.intern("a");
  v.intern("b");
  std::vector<CommunityFeatures> cf = {{"x", {{1, 0.5}}}, {"y", {{0, 0.25}}}};
  const auto m = build_feature_matrix(cf, v);
  CHECK(m.rows == std::vector<CommunityId>{"x", "y"});
  CHECK(m.values(0, 1) == 0.5);
  CHECK(m.values(0, 0) == 0.0);
  OutcomeTable o{"t", {{"y", 3.0}}};
  const auto [x, y] = align_outcome(m, o);
  CHECK(x.rows == std::vector<CommunityId>{"y"});
  CHECK(y(0) == 3.0);
  cf[0].means = {{7, 0.1}};
  CHECK_THROWS_AS(build_feature_matrix(cf, v), Error);
}

TEST_CASE("variance filter drops constant columns") {
  Eigen::MatrixXd x = gaussian(100, 20, 1);
  x.col(2).setConstant(0.3);
  x.col(9).setZero();
  x.col(17).setConstant(-1.0);
  const auto mask = variance_filter(x);
  CHECK(kept(mask) == 17);
  CHECK_FALSE(mask[9]);
}

TEST_CASE("correlation screening keeps the signal column") {
  Eigen::MatrixXd x = gaussian(200, 1000, 2);
  const Eigen::VectorXd noise = gaussian(200, 1, 3).col(0);
  const Eigen::VectorXd y = x.col(10) + 0.5 * noise;
  const auto p = correlation_pvalues(x, y);
  CHECK(p(10) < 1e-20);
  const auto mask = correlation_filter(x, y);
  CHECK(mask[10]);
  // threshold 60/1000: roughly six percent of pure-noise columns survive
  CHECK(kept(mask) < 120);
  CHECK(kept(mask) > 20);
  CHECK_THROWS_AS(correlation_pvalues(x.topRows(2), y.head(2)), Error);
}

TEST_CASE("standardization uses population sd") {
  Eigen::MatrixXd x(3, 1);
  x << 1, 2, 3;
  const auto s = fit_standardizer(x);
  const Eigen::MatrixXd z = s.apply(x);
  CHECK(z(0, 0) == doctest::Approx(-1.224744871391589));
  CHECK(z(1, 0) == doctest::Approx(0.0));
  CHECK(z(2, 0) == doctest::Approx(1.224744871391589));
  Eigen::MatrixXd c = Eigen::MatrixXd::Constant(4, 1, 2.0);
  CHECK_THROWS_AS(fit_standardizer(c), Error);
}

TEST_CASE("randomized projection recovers the leading directions") {
  // rank-3 signal plus small noise
  const Eigen::MatrixXd u = gaussian(300, 3, 4), w = gaussian(3, 50, 5);
  Eigen::VectorXd scale(3);
  scale << 10, 5, 2;
  const Eigen::MatrixXd x = u * scale.asDiagonal() * w + 0.01 * gaussian(300, 50, 6);
  const auto p = fit_projection(x, PcaOptions{}, 7);
  REQUIRE(p.components.cols() == 5);
  const Eigen::MatrixXd gram = p.components.transpose() * p.components;
  CHECK((gram - Eigen::MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-10);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinV);
  for (int c = 0; c < 3; ++c) CHECK(std::abs(p.components.col(c).dot(svd.matrixV().col(c))) > 0.999);
  // determinism
  const auto q = fit_projection(x, PcaOptions{}, 7);
  CHECK(q.components == p.components);
  CHECK_THROWS_AS(fit_projection(x, PcaOptions{0.0}, 1), Error);
}

TEST_CASE("ridge without penalty is least squares") {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian(50, 4, 8));
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(50, 4);
  const Eigen::VectorXd y = gaussian(50, 1, 9).col(0);
  const auto m = ridge_fit(q, y, 0.0);
  const Eigen::VectorXd yc = y.array() - y.mean();
  const Eigen::VectorXd ols = q.transpose() * yc;
  CHECK((m.beta - ols).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(m.intercept == doctest::Approx(y.mean()));
  CHECK(ridge_fit(q, y, 1e12).beta.norm() < 1e-6);
  CHECK_THROWS_AS(ridge_fit(q, y, -1.0), Error);
}

TEST_CASE("fold assignment is balanced and seeded") {
  std::vector<CommunityId> rows;
  for (int i = 0; i < 103; ++i) rows.push_back("c" + std::to_string(i));
  const auto a = assign_folds(rows, 10, 1), b = assign_folds(rows, 10, 1), c = assign_folds(rows, 10, 2);
  CHECK(a.fold == b.fold);
  CHECK(a.fold != c.fold);
  std::vector<int> sizes(10, 0);
  for (auto f : a.fold) ++sizes[f];
  CHECK(*std::max_element(sizes.begin(), sizes.end()) - *std::min_element(sizes.begin(), sizes.end()) <= 1);
  // assignment depends on ids, not row order
  auto reversed = rows;
  std::reverse(reversed.begin(), reversed.end());
  const auto r = assign_folds(reversed, 10, 1);
  for (std::size_t i = 0; i < rows.size(); ++i) CHECK(r.fold[rows.size() - 1 - i] == a.fold[i]);
  CHECK_THROWS_AS(assign_folds(rows, 0, 1), Error);
}

TEST_CASE("cross-validation recovers a linear target") {
  const auto x = with_ids(gaussian(200, 30, 10));
  Eigen::VectorXd w = gaussian(30, 1, 11).col(0);
  const Eigen::VectorXd y = x.values * w;
  PipelineConfig cfg;
  cfg.lambda = 1e-3;
  cfg.reduce = false;
  const auto r = cross_validate(x, y, cfg);
  CHECK(r.pearson_r >= 0.999);
  CHECK(r.r_squared == doctest::Approx(r.pearson_r * r.pearson_r));
  CHECK(r.models.size() == 10);
}

TEST_CASE("cross-validation on noise predicts nothing") {
  const auto x = with_ids(gaussian(1000, 50, 12));
  const Eigen::VectorXd y = gaussian(1000, 1, 13).col(0);
  const auto r = cross_validate(x, y, PipelineConfig{});
  CHECK(std::abs(r.pearson_r) < 0.1);
}

TEST_CASE("cross-validation is deterministic") {
  const auto x = with_ids(gaussian(120, 200, 14));
  const Eigen::VectorXd y = x.values.col(0) + gaussian(120, 1, 15).col(0);
  PipelineConfig cfg;
  cfg.alpha_family = 1000.0;
  const auto a = cross_validate(x, y, cfg), b = cross_validate(x, y, cfg);
  CHECK(a.predicted == b.predicted);
  for (std::size_t f = 0; f < a.models.size(); ++f) CHECK(identical(a.models[f], b.models[f]));
  cfg.seed = 43;
  CHECK(cross_validate(x, y, cfg).predicted != a.predicted);
}

TEST_CASE("a fold with no surviving columns predicts the training mean") {
  const auto x = with_ids(Eigen::MatrixXd::Constant(40, 3, 1.0));
  const Eigen::VectorXd y = gaussian(40, 1, 16).col(0);
  PipelineConfig cfg;
  cfg.folds = 4;
  const auto r = cross_validate(x, y, cfg);
  for (const auto& m : r.models) CHECK(m.ridge.beta.size() == 0);
  CHECK(r.pearson_r <= 0.0);
  CHECK_THROWS_AS(cross_validate(with_ids(gaussian(5, 2, 1)), y.head(5), PipelineConfig{}), Error);
}

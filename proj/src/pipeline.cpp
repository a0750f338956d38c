#include "restrat/pipeline.hpp"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <numeric>
#include <cstring>
#include <random>
#include <sstream>

#include "restrat/evaluate.hpp"

namespace restrat {

FeatureMatrix build_feature_matrix(const std::vector<CommunityFeatures>& communities,
                                   const FeatureVocabulary& vocabulary) {
  FeatureMatrix m;
  m.cols = vocabulary.names();
  m.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(communities.size()),
                                   static_cast<Eigen::Index>(vocabulary.size()));
  for (std::size_t i = 0; i < communities.size(); ++i) {
    m.rows.push_back(communities[i].community);
    for (const auto& [f, v] : communities[i].means) {
      if (f >= vocabulary.size()) throw Error("community feature index outside the vocabulary");
      m.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f)) = v;
    }
  }
  return m;
}

std::pair<FeatureMatrix, Eigen::VectorXd> align_outcome(const FeatureMatrix& m, const OutcomeTable& outcome) {
  std::vector<Eigen::Index> keep;
  std::vector<double> y;
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    auto it = outcome.values.find(m.rows[i]);
    if (it == outcome.values.end()) continue;
    keep.push_back(static_cast<Eigen::Index>(i));
    y.push_back(it->second);
  }
  FeatureMatrix out;
  out.cols = m.cols;
  out.values.resize(static_cast<Eigen::Index>(keep.size()), m.values.cols());
  for (std::size_t r = 0; r < keep.size(); ++r) {
    out.rows.push_back(m.rows[static_cast<std::size_t>(keep[r])]);
    out.values.row(static_cast<Eigen::Index>(r)) = m.values.row(keep[r]);
  }
  return {std::move(out), Eigen::Map<Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()))};
}

ColumnMask variance_filter(const Eigen::MatrixXd& x, double min_var) {
  if (x.rows() == 0) throw Error("variance filter needs at least one row");
  ColumnMask mask(static_cast<std::size_t>(x.cols()), false);
  const double denom = x.rows() > 1 ? static_cast<double>(x.rows() - 1) : 1.0;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    if ((x.col(j).array() == x(0, j)).all()) continue;  // exact constants can leave rounding residue
    const double mean = x.col(j).mean();
    const double var = (x.col(j).array() - mean).square().sum() / denom;
    mask[static_cast<std::size_t>(j)] = var > min_var;
  }
  return mask;
}

Eigen::VectorXd correlation_pvalues(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  const Eigen::Index n = x.rows();
  if (n < 3) throw Error("correlation screening needs at least 3 rows");
  if (y.size() != n) throw Error("outcome is not aligned with the feature rows");
  const Eigen::VectorXd yc = y.array() - y.mean();
  const double syy = yc.squaredNorm();
  boost::math::students_t dist(static_cast<double>(n - 2));
  Eigen::VectorXd p(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const Eigen::VectorXd xc = x.col(j).array() - x.col(j).mean();
    const double sxx = xc.squaredNorm();
    if (sxx <= 0.0 || syy <= 0.0) {
      p(j) = 1.0;
      continue;
    }
    const double r = std::clamp(xc.dot(yc) / std::sqrt(sxx * syy), -1.0, 1.0);
    if (std::abs(r) >= 1.0) {
      p(j) = 0.0;
      continue;
    }
    const double t = r * std::sqrt(static_cast<double>(n - 2) / (1.0 - r * r));
    p(j) = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  }
  return p;
}

ColumnMask correlation_filter(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double alpha_family) {
  const auto p = correlation_pvalues(x, y);
  const double threshold = x.cols() > 0 ? alpha_family / static_cast<double>(x.cols()) : 0.0;
  ColumnMask mask(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index j = 0; j < x.cols(); ++j) mask[static_cast<std::size_t>(j)] = p(j) < threshold;
  return mask;
}

Eigen::MatrixXd select_columns(const Eigen::MatrixXd& x, const ColumnMask& mask) {
  if (mask.size() != static_cast<std::size_t>(x.cols())) throw Error("column mask size mismatch");
  const auto kept = static_cast<Eigen::Index>(std::count(mask.begin(), mask.end(), true));
  Eigen::MatrixXd out(x.rows(), kept);
  Eigen::Index c = 0;
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    if (mask[static_cast<std::size_t>(j)]) out.col(c++) = x.col(j);
  return out;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& x) const {
  if (x.cols() != mean.size()) throw Error("standardizer column count mismatch");
  return ((x.rowwise() - mean).array().rowwise() / sd.array()).matrix();
}

Standardizer fit_standardizer(const Eigen::MatrixXd& x) {
  if (x.rows() == 0) throw Error("cannot standardize an empty matrix");
  Standardizer s;
  s.mean = x.colwise().mean();
  s.sd.resize(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double var = (x.col(j).array() - s.mean(j)).square().sum() / static_cast<double>(x.rows());
    s.sd(j) = std::sqrt(var);
    if (!(s.sd(j) > 0.0)) throw Error("cannot standardize column " + std::to_string(j) + ": zero standard deviation");
  }
  return s;
}

Projection fit_projection(const Eigen::MatrixXd& x, const PcaOptions& options, std::uint64_t seed) {
  if (!(options.ratio > 0.0 && options.ratio <= 1.0)) throw Error("reduction ratio must lie in (0, 1]");
  const Eigen::Index cols = x.cols();
  Projection proj;
  if (cols == 0) {
    proj.components.resize(0, 0);
    return proj;
  }
  const auto k = std::min<Eigen::Index>(
      cols, static_cast<Eigen::Index>(std::ceil(options.ratio * static_cast<double>(cols) - 1e-12)));
  const Eigen::Index sketch = std::min<Eigen::Index>(cols, k + static_cast<Eigen::Index>(options.oversampling));

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd omega(cols, sketch);
  for (Eigen::Index j = 0; j < sketch; ++j)
    for (Eigen::Index i = 0; i < cols; ++i) omega(i, j) = normal(rng);

  // range of X^T (the column space the components live in), with power iterations
  const Eigen::MatrixXd xt = x.transpose();
  auto orthonormalize = [](const Eigen::MatrixXd& m) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
    return Eigen::MatrixXd(qr.householderQ() * Eigen::MatrixXd::Identity(m.rows(), std::min(m.rows(), m.cols())));
  };
  Eigen::MatrixXd q = orthonormalize(xt * (x * omega));
  for (std::uint32_t it = 0; it < options.power_iterations; ++it) q = orthonormalize(xt * (x * q));

  // X Q = U S W^T; components = Q W
  const Eigen::MatrixXd b = x * q;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(b, Eigen::ComputeThinV);
  const Eigen::MatrixXd w = svd.matrixV();
  const Eigen::Index kk = std::min<Eigen::Index>(k, w.cols());
  proj.components = q * w.leftCols(kk);
  // sign convention: largest-magnitude loading positive
  for (Eigen::Index c = 0; c < proj.components.cols(); ++c) {
    Eigen::Index arg = 0;
    proj.components.col(c).cwiseAbs().maxCoeff(&arg);
    if (proj.components(arg, c) < 0.0) proj.components.col(c) *= -1.0;
  }
  return proj;
}

Eigen::VectorXd RidgeModel::predict(const Eigen::MatrixXd& x) const {
  if (beta.size() == 0) return Eigen::VectorXd::Constant(x.rows(), intercept);
  return (x * beta).array() + intercept;
}

RidgeModel ridge_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda) {
  if (x.rows() != y.size()) throw Error("ridge: rows of X and y differ");
  if (!(lambda >= 0.0)) throw Error("ridge penalty must be non-negative");
  RidgeModel m;
  m.intercept = y.size() > 0 ? y.mean() : 0.0;
  if (x.cols() == 0) {
    m.beta.resize(0);
    return m;
  }
  const Eigen::VectorXd yc = y.array() - m.intercept;
  Eigen::MatrixXd gram = x.transpose() * x;
  gram.diagonal().array() += lambda;
  m.beta = gram.ldlt().solve(x.transpose() * yc);
  return m;
}

std::string PipelineConfig::describe() const {
  std::ostringstream os;
  os.precision(17);
  os << "folds=" << folds << ";seed=" << seed << ";lambda=" << lambda << ";alpha=" << alpha_family
     << ";min_var=" << min_variance << ";ratio=" << pca.ratio << ";power=" << pca.power_iterations
     << ";oversample=" << pca.oversampling << ";reduce=" << (reduce ? 1 : 0)
     << ";global_selection=" << (global_selection ? 1 : 0);
  return os.str();
}

Eigen::VectorXd FoldModel::predict(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd z = select_columns(select_columns(x, variance_mask), correlation_mask);
  if (z.cols() > 0) z = standardizer.apply(z);
  if (reduced && z.cols() > 0) z = projection.apply(z);
  return ridge.predict(z);
}

bool identical(const FoldModel& a, const FoldModel& b) {
  auto same = [](const auto& m1, const auto& m2) {
    return m1.rows() == m2.rows() && m1.cols() == m2.cols() &&
           std::equal(m1.data(), m1.data() + m1.size(), m2.data(), [](double u, double v) {
             return std::memcmp(&u, &v, sizeof(double)) == 0;
           });
  };
  return a.variance_mask == b.variance_mask && a.correlation_mask == b.correlation_mask &&
         same(a.standardizer.mean, b.standardizer.mean) && same(a.standardizer.sd, b.standardizer.sd) &&
         a.reduced == b.reduced && same(a.projection.components, b.projection.components) &&
         same(a.ridge.beta, b.ridge.beta) &&
         std::memcmp(&a.ridge.intercept, &b.ridge.intercept, sizeof(double)) == 0;
}

namespace {

FoldModel fit_with_masks(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const PipelineConfig& config,
                         std::uint64_t seed, const ColumnMask* var_mask, const ColumnMask* cor_mask) {
  FoldModel m;
  m.variance_mask = var_mask ? *var_mask : variance_filter(x, config.min_variance);
  Eigen::MatrixXd z = select_columns(x, m.variance_mask);
  m.correlation_mask = cor_mask ? *cor_mask : correlation_filter(z, y, config.alpha_family);
  z = select_columns(z, m.correlation_mask);
  if (z.cols() > 0) {
    m.standardizer = fit_standardizer(z);
    z = m.standardizer.apply(z);
    if (config.reduce) {
      m.projection = fit_projection(z, config.pca, seed);
      m.reduced = true;
      z = m.projection.apply(z);
    }
  }
  m.ridge = ridge_fit(z, y, config.lambda);
  return m;
}

std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t hash_id(const std::string& id, std::uint64_t seed) {
  std::uint64_t h = 1469598103934665603ULL ^ mix64(seed);
  for (unsigned char c : id) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return mix64(h);
}

}  // namespace

FoldModel fit_fold_model(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const PipelineConfig& config,
                         std::uint64_t seed) {
  return fit_with_masks(x, y, config, seed, nullptr, nullptr);
}

FoldAssignment assign_folds(const std::vector<CommunityId>& rows, std::uint32_t folds, std::uint64_t seed) {
  if (folds == 0) throw Error("fold count must be positive");
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::uint64_t> h(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) h[i] = hash_id(rows[i], seed);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return h[a] != h[b] ? h[a] < h[b] : rows[a] < rows[b];
  });
  FoldAssignment out;
  out.folds = folds;
  out.fold.resize(rows.size());
  for (std::size_t r = 0; r < order.size(); ++r) out.fold[order[r]] = static_cast<std::uint32_t>(r % folds);
  return out;
}

EvalResult cross_validate(const FeatureMatrix& x, const Eigen::VectorXd& y, const PipelineConfig& config) {
  const auto n = static_cast<std::size_t>(x.values.rows());
  if (static_cast<std::size_t>(y.size()) != n) throw Error("outcome is not aligned with the feature rows");
  if (n < config.folds) throw Error("cross-validation needs at least as many rows as folds");

  EvalResult r;
  r.communities = x.rows;
  r.actual = y;
  r.predicted = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  r.assignment = assign_folds(x.rows, config.folds, config.seed);

  ColumnMask global_var, global_cor;
  if (config.global_selection) {
    global_var = variance_filter(x.values, config.min_variance);
    global_cor = correlation_filter(select_columns(x.values, global_var), y, config.alpha_family);
  }

  for (std::uint32_t f = 0; f < config.folds; ++f) {
    std::vector<Eigen::Index> train, test;
    for (std::size_t i = 0; i < n; ++i) (r.assignment.fold[i] == f ? test : train).push_back(static_cast<Eigen::Index>(i));
    if (test.size() < 2 || train.size() < 2)
      throw Error("fold " + std::to_string(f) + " has fewer than 2 rows");
    Eigen::MatrixXd xtr(static_cast<Eigen::Index>(train.size()), x.values.cols());
    Eigen::VectorXd ytr(static_cast<Eigen::Index>(train.size()));
    for (std::size_t i = 0; i < train.size(); ++i) {
      xtr.row(static_cast<Eigen::Index>(i)) = x.values.row(train[i]);
      ytr(static_cast<Eigen::Index>(i)) = y(train[i]);
    }
    Eigen::MatrixXd xte(static_cast<Eigen::Index>(test.size()), x.values.cols());
    for (std::size_t i = 0; i < test.size(); ++i) xte.row(static_cast<Eigen::Index>(i)) = x.values.row(test[i]);

    const std::uint64_t fold_seed = mix64(config.seed ^ (0x5851f42d4c957f2dULL * (f + 1)));
    auto model = config.global_selection ? fit_with_masks(xtr, ytr, config, fold_seed, &global_var, &global_cor)
                                         : fit_with_masks(xtr, ytr, config, fold_seed, nullptr, nullptr);
    const Eigen::VectorXd pred = model.predict(xte);
    for (std::size_t i = 0; i < test.size(); ++i) r.predicted(test[i]) = pred(static_cast<Eigen::Index>(i));
    r.models.push_back(std::move(model));
  }

  r.residuals = r.actual - r.predicted;
  std::span<const double> p(r.predicted.data(), n), a(r.actual.data(), n);
  try {
    r.pearson_r = pearson_r(p, a);
  } catch (const Error&) {
    r.pearson_r = 0.0;  // constant predictions
  }
  r.r_squared = r.pearson_r * r.pearson_r;
  r.rmse = rmse(p, a);
  return r;
}

}  // namespace restrat

#include "restrat/weights.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace restrat {

// ---------------------------------------------------------------------------
// JointCellTable

JointCellTable::JointCellTable(std::vector<Partition> axes, double fill) : axes_(std::move(axes)) {
  std::size_t total = 1;
  shape_.reserve(axes_.size());
  for (const auto& a : axes_) {
    shape_.push_back(a.size());
    total *= a.size();
  }
  strides_.assign(axes_.size(), 1);
  for (std::size_t a = axes_.size(); a-- > 1;) strides_[a - 1] = strides_[a] * shape_[a];
  cells_.assign(total, fill);
}

std::size_t JointCellTable::flat(std::span<const std::size_t> index) const {
  if (index.size() != axes_.size()) throw Error("cell index rank mismatch");
  std::size_t f = 0;
  for (std::size_t a = 0; a < index.size(); ++a) {
    if (index[a] >= shape_[a]) throw Error("cell index out of range");
    f += index[a] * strides_[a];
  }
  return f;
}

std::vector<std::size_t> JointCellTable::unflatten(std::size_t flat_index) const {
  std::vector<std::size_t> index(axes_.size());
  for (std::size_t a = 0; a < axes_.size(); ++a) index[a] = (flat_index / strides_[a]) % shape_[a];
  return index;
}

double JointCellTable::sum() const { return std::accumulate(cells_.begin(), cells_.end(), 0.0); }

std::vector<double> JointCellTable::marginal(std::size_t axis) const {
  std::vector<double> m(shape_.at(axis), 0.0);
  for (std::size_t i = 0; i < cells_.size(); ++i) m[(i / strides_[axis]) % shape_[axis]] += cells_[i];
  return m;
}

// ---------------------------------------------------------------------------

double cell_weight(double pop_pct, double samp_pct, std::size_t cell) {
  if (!(pop_pct >= 0.0) || !std::isfinite(pop_pct))
    throw Error("population share for cell " + std::to_string(cell) + " is negative or non-finite");
  if (!(samp_pct > 0.0))
    throw UndefinedCellError(cell, "correction factor undefined: empty sample cell " + std::to_string(cell));
  return pop_pct / samp_pct;
}

JointCellTable naive_joint(const std::vector<std::pair<Partition, std::vector<double>>>& marginals) {
  std::vector<Partition> axes;
  for (const auto& [p, pct] : marginals) {
    if (pct.size() != p.size()) throw Error("marginal length does not match its partition");
    axes.push_back(p);
  }
  JointCellTable table(std::move(axes), 1.0);
  auto& cells = table.cells();
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto index = table.unflatten(i);
    double v = 1.0;
    for (std::size_t a = 0; a < index.size(); ++a) v *= marginals[a].second[index[a]];
    cells[i] = v;
  }
  return table;
}

RakeResult rake(const JointCellTable& sample_joint, const std::vector<std::vector<double>>& target_marginals,
                const RakeOptions& options) {
  const std::size_t rank = sample_joint.rank();
  if (target_marginals.size() != rank) throw Error("raking needs one target marginal per axis");
  for (std::size_t a = 0; a < rank; ++a) {
    const auto& t = target_marginals[a];
    if (t.size() != sample_joint.shape()[a]) throw Error("raking target length mismatch on axis " + std::to_string(a));
    double s = 0.0;
    for (double x : t) {
      if (!(x >= 0.0)) throw Error("raking target has a negative share on axis " + std::to_string(a));
      s += x;
    }
    if (std::abs(s - 1.0) > 1e-6) throw Error("raking target on axis " + std::to_string(a) + " does not sum to one");
  }

  RakeResult result;
  result.table = sample_joint;
  auto& cells = result.table.cells();
  const double total = result.table.sum();
  if (!(total > 0.0)) throw ConvergenceError(1.0, "raking input table is empty");
  for (double& c : cells) {
    if (!(c >= 0.0)) throw Error("raking input has a negative cell");
    c /= total;
  }

  for (std::size_t a = 0; a < rank; ++a) {
    const auto m = result.table.marginal(a);
    for (std::size_t l = 0; l < m.size(); ++l)
      if (m[l] == 0.0 && target_marginals[a][l] > 0.0)
        throw StructuralZeroError(a, l, target_marginals[a][l],
                                  "raking cannot converge: sample bin " + std::to_string(l) + " on axis " +
                                      std::to_string(a) + " is empty but its target is positive");
  }

  result.factors.resize(rank);
  for (std::size_t a = 0; a < rank; ++a) result.factors[a].assign(sample_joint.shape()[a], 1.0);

  // strides for axis lookups
  std::vector<std::size_t> strides(rank, 1);
  for (std::size_t a = rank; a-- > 1;) strides[a - 1] = strides[a] * sample_joint.shape()[a];

  double deviation = 0.0;
  for (std::uint32_t it = 1; it <= options.max_iter; ++it) {
    for (std::size_t a = 0; a < rank; ++a) {
      const auto m = result.table.marginal(a);
      std::vector<double> f(m.size(), 1.0);
      for (std::size_t l = 0; l < m.size(); ++l) {
        if (m[l] > 0.0) f[l] = target_marginals[a][l] / m[l];
        result.factors[a][l] *= f[l];
      }
      const std::size_t n = sample_joint.shape()[a];
      for (std::size_t i = 0; i < cells.size(); ++i) cells[i] *= f[(i / strides[a]) % n];
    }
    deviation = 0.0;
    for (std::size_t a = 0; a < rank; ++a) {
      const auto m = result.table.marginal(a);
      for (std::size_t l = 0; l < m.size(); ++l) deviation = std::max(deviation, std::abs(m[l] - target_marginals[a][l]));
    }
    if (deviation < options.tol) {
      result.iterations = it;
      result.max_deviation = deviation;
      return result;
    }
  }
  std::ostringstream msg;
  msg << "raking did not converge in " << options.max_iter << " iterations (max marginal deviation " << deviation
      << ")";
  throw ConvergenceError(deviation, msg.str());
}

double smooth_sample_prob(double n_s, double n_i, double pop_prob, double k) {
  if (!(k >= 0.0)) throw Error("smoothing constant must be non-negative");
  if (!(n_s >= 0.0) || n_s > n_i) throw Error("cell count must lie in [0, community size]");
  if (!(pop_prob >= 0.0 && pop_prob <= 1.0)) throw Error("population probability must lie in [0, 1]");
  if (n_i == 0.0 && k == 0.0) throw Error("smoothing an empty community requires k > 0");
  return (n_s + k * pop_prob) / (n_i + k);
}

// ---------------------------------------------------------------------------
// Per-community weights

namespace {

struct Axis {
  Variable variable;
  BinCounts merged;
  MarginTable population;        // projected onto merged bins
  std::vector<std::size_t> bin;  // merged bin per individual
};

// Sum a population joint over merged bins; axes with a single merged bin are dropped.
JointCellTable coarsen_joint(const JointCellTable& joint, const std::vector<Variable>& config_vars,
                             const std::vector<Axis>& kept, const std::vector<BinCounts>& merged_all) {
  if (joint.rank() != config_vars.size()) throw Error("population joint rank does not match configured variables");
  std::vector<Partition> axes;
  std::vector<int> keep_slot(config_vars.size(), -1);
  std::vector<std::vector<std::size_t>> maps(config_vars.size());
  for (std::size_t a = 0; a < config_vars.size(); ++a) {
    if (joint.axes()[a].variable() != config_vars[a]) throw Error("population joint axes are not in variable order");
    const auto& mb = merged_all[a];
    maps[a].assign(joint.shape()[a], 0);
    for (std::size_t m = 0; m < mb.sources.size(); ++m)
      for (std::size_t o = mb.sources[m].first; o <= mb.sources[m].second; ++o) {
        if (o >= maps[a].size()) throw Error("population joint partition does not match the margins");
        maps[a][o] = m;
      }
    for (std::size_t s = 0; s < kept.size(); ++s)
      if (kept[s].variable == config_vars[a]) {
        keep_slot[a] = static_cast<int>(axes.size());
        axes.push_back(kept[s].merged.partition);
      }
  }
  JointCellTable out(std::move(axes), 0.0);
  std::vector<std::size_t> idx(out.rank());
  for (std::size_t i = 0; i < joint.cell_count(); ++i) {
    const auto src = joint.unflatten(i);
    for (std::size_t a = 0; a < src.size(); ++a)
      if (keep_slot[a] >= 0) idx[static_cast<std::size_t>(keep_slot[a])] = maps[a][src[a]];
    out.at(idx) += joint.cells()[i];
  }
  return out;
}

}  // namespace

WeightAssignment assign_weights(std::span<const Individual> community, const CorrectionConfig& config,
                                std::span<const MarginTable> margins, const WeightOptions& options,
                                const JointCellTable* population_joint) {
  config.check();
  WeightAssignment out;
  out.community = community.empty() ? CommunityId{} : community.front().community;
  out.weights.reserve(community.size());
  const auto n = community.size();
  if (n == 0) {
    out.corrected = false;
    return out;
  }

  const auto vars = config.variables.list();
  std::vector<Axis> axes;
  std::vector<BinCounts> merged_all;
  for (auto v : vars) {
    const MarginTable* m = nullptr;
    for (const auto& t : margins)
      if (t.variable() == v) m = &t;
    if (m == nullptr) throw Error("no population margins for " + std::string(to_string(v)) + " in community " + out.community);
    if (!m->valid(1e-6)) throw Error("population margins for " + std::string(to_string(v)) + " in community " +
                                     out.community + " do not sum to one");
    std::vector<double> values;
    values.reserve(n);
    for (const auto& ind : community) values.push_back(ind.value(v));
    auto merged = adaptive_bin(count_values(values, m->partition), config.min_bin_threshold);
    merged_all.push_back(merged);
    if (merged.partition.size() < 2) continue;  // single bin: nothing to correct
    Axis axis{v, merged, project_margins(*m, merged.partition), {}};
    axis.bin.reserve(n);
    for (double x : values) axis.bin.push_back(merged.partition.bin_index(x));
    axes.push_back(std::move(axis));
  }

  std::vector<double> psi(n, 1.0);
  const double n_i = static_cast<double>(n);
  const double k = config.smoothing_k;

  if (!axes.empty()) {
    std::vector<Partition> parts;
    std::vector<std::pair<Partition, std::vector<double>>> pop_marginals;
    for (const auto& a : axes) {
      parts.push_back(a.merged.partition);
      pop_marginals.emplace_back(a.merged.partition, a.population.percentages);
    }
    JointCellTable sample(parts, 0.0);
    std::vector<std::size_t> cell_of(n);
    std::vector<std::size_t> idx(axes.size());
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t a = 0; a < axes.size(); ++a) idx[a] = axes[a].bin[j];
      cell_of[j] = sample.flat(idx);
      sample.cells()[cell_of[j]] += 1.0;
    }

    if (config.method == Method::FullPostStratification && population_joint == nullptr) {
      // census marginals only: correct each variable separately
      for (std::size_t a = 0; a < axes.size(); ++a) {
        const auto counts = sample.marginal(a);
        for (std::size_t j = 0; j < n; ++j) {
          const auto l = axes[a].bin[j];
          const double p = axes[a].population.percentages[l];
          psi[j] *= cell_weight(p, smooth_sample_prob(counts[l], n_i, p, k), l);
        }
      }
    } else if (config.method == Method::Raking) {
      const auto prior = naive_joint(pop_marginals);
      JointCellTable smoothed(parts, 0.0);
      for (std::size_t c = 0; c < sample.cell_count(); ++c)
        smoothed.cells()[c] = smooth_sample_prob(sample.cells()[c], n_i, prior.cells()[c], k);
      std::vector<std::vector<double>> targets;
      for (const auto& a : axes) targets.push_back(a.population.percentages);
      const auto raked = rake(smoothed, targets, options.rake);
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t a = 0; a < axes.size(); ++a) psi[j] *= raked.factors[a][axes[a].bin[j]];
    } else {
      const JointCellTable pop = config.method == Method::Naive
                                     ? naive_joint(pop_marginals)
                                     : coarsen_joint(*population_joint, vars, axes, merged_all);
      const double pop_total = pop.sum();
      if (!(std::abs(pop_total - 1.0) <= 1e-6)) throw Error("population joint table does not sum to one");
      std::vector<double> cell_psi(sample.cell_count(), 1.0);
      for (std::size_t c = 0; c < sample.cell_count(); ++c)
        if (sample.cells()[c] > 0.0 || k > 0.0)
          cell_psi[c] = cell_weight(pop.cells()[c], smooth_sample_prob(sample.cells()[c], n_i, pop.cells()[c], k), c);
      for (std::size_t j = 0; j < n; ++j) psi[j] = cell_psi[cell_of[j]];
    }
  }

  if (config.normalize_weights) {
    const double mean = std::accumulate(psi.begin(), psi.end(), 0.0) / n_i;
    if (mean > 0.0)
      for (double& w : psi) w /= mean;
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (!std::isfinite(psi[j]) || psi[j] < 0.0) throw Error("non-finite correction factor in community " + out.community);
    out.weights.emplace_back(community[j].id, psi[j]);
  }
  return out;
}

std::vector<Individual> redistribute_dataset(const Dataset& data, const RedistributionOptions& options) {
  std::vector<Individual> out = data.individuals;
  for (auto v : kAllVariables)
    if (const NationalTarget* target = data.target(v)) out = redistribute_all(out, v, *target, options);
  return out;
}

std::vector<WeightAssignment> assign_community_weights(const Dataset& data, const std::vector<Individual>& individuals,
                                                       const CorrectionConfig& config, const WeightOptions& options) {
  if (individuals.size() != data.individuals.size()) throw Error("individuals are not aligned with the dataset");
  std::vector<WeightAssignment> out;
  std::vector<Individual> members;
  std::vector<MarginTable> margins;
  for (const auto& [community, idx] : data.members()) {
    members.clear();
    for (auto i : idx) members.push_back(individuals[i]);
    margins.clear();
    for (auto v : config.variables.list())
      if (const auto* m = data.margin(community, v)) margins.push_back(*m);
    try {
      out.push_back(assign_weights(members, config, margins, options));
    } catch (const Error& e) {
      WeightAssignment fallback;
      fallback.community = community;
      fallback.corrected = false;
      fallback.warnings.push_back(std::string("uncorrectable, using psi = 1: ") + e.what());
      for (const auto& m : members) fallback.weights.emplace_back(m.id, 1.0);
      out.push_back(std::move(fallback));
    }
  }
  return out;
}

DatasetWeights assign_dataset_weights(const Dataset& data, const CorrectionConfig& config,
                                      const WeightOptions& options) {
  config.check();
  DatasetWeights out;
  if (config.redistribute) {
    // every variable with a national target is redistributed, not only the
    // configured ones; unconfigured variables do not affect psi
    for (auto v : config.variables.list())
      if (data.target(v) == nullptr)
        throw Error("redistribution requested but no national target for " + std::string(to_string(v)));
    out.individuals = redistribute_dataset(data, options.redistribution);
  } else {
    out.individuals = data.individuals;
  }
  out.communities = assign_community_weights(data, out.individuals, config, options);
  return out;
}

}  // namespace restrat

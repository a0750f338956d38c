// restrat: command-line front end for the reweighting toolkit.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "restrat/aggregate.hpp"
#include "restrat/evaluate.hpp"
#include "restrat/io.hpp"
#include "restrat/search.hpp"
#include "restrat/synth.hpp"
#include "restrat/weights.hpp"

namespace fs = std::filesystem;
using namespace restrat;

namespace {

struct Common {
  std::string config_file;
  std::map<std::string, std::string> flags;
  std::size_t min_community = 100;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_file, "key = value settings file")->check(CLI::ExistingFile);
  auto flag = [&](const char* name, const char* key, const char* help) {
    cmd->add_option_function<std::string>(name, [&c, key](const std::string& v) { c.flags[key] = v; }, help);
  };
  flag("--data", "data", "dataset directory");
  flag("--out", "out", "output directory");
  flag("--method", "method", "full | naive | raking");
  flag("--vars", "vars", "correction variables, e.g. income+education");
  flag("--min-bin", "min_bin", "adaptive binning minimum count");
  flag("--smooth-k", "smooth_k", "informed smoothing constant");
  flag("--redistribute", "redistribute", "redistribute estimates toward national targets (true/false)");
  flag("--normalize", "normalize", "rescale weights to mean 1 (true/false)");
  flag("--folds", "folds", "cross-validation folds");
  flag("--seed", "seed", "random seed");
  flag("--lambda", "lambda", "ridge penalty");
  flag("--alpha", "alpha", "family-wise correlation filter level");
  flag("--pca-ratio", "pca_ratio", "fraction of columns kept by the projection");
  flag("--tasks", "tasks", "comma separated outcome names");
  cmd->add_option("--min-community", c.min_community, "communities smaller than this are flagged");
}

RunConfig resolve(const Common& c, bool need_data = true) {
  RunConfig config;
  if (!c.config_file.empty()) load_config(c.config_file, config);
  for (const auto& [k, v] : c.flags) config.set(k, v);
  if (!config.seed_set) throw Error("a seed is required (--seed or 'seed' in the config file)");
  if (need_data && config.data_dir.empty()) throw Error("no dataset directory (--data)");
  if (config.output_dir.empty()) config.output_dir = ".";
  fs::create_directories(config.output_dir);
  return config;
}

LoadedDataset load(const RunConfig& config, const Common& c) {
  auto loaded = load_dataset(DatasetPaths::in(config.data_dir), c.min_community);
  for (const auto& m : loaded.report.messages()) std::cerr << "warning: " << m << "\n";
  return loaded;
}

std::ofstream open(const fs::path& path, const std::string& header) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << header << '\n';
  return out;
}

std::vector<std::string> tasks_of(const RunConfig& config, const Dataset& data) {
  if (!config.tasks.empty()) return config.tasks;
  std::vector<std::string> out;
  for (const auto& t : data.outcomes) out.push_back(t.name);
  if (out.empty()) throw Error("dataset has no outcomes");
  return out;
}

std::string fixed(double x, int digits = 3) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << x;
  return os.str();
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::uint64_t seed = 1;
  std::string out = "synth";
  SynthSpec spec;
  double shrinkage = 0.0;
  std::string selection;  // var=coef[:sd],...
};

int run_synth(SynthArgs& a) {
  a.spec.seed = a.seed;
  a.spec.shrinkage.fill(a.shrinkage);
  std::stringstream ss(a.selection);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw Error("selection term '" + item + "' is not var=coef[:sd]");
    const auto v = static_cast<std::size_t>(parse_variable(item.substr(0, eq)));
    const auto rest = item.substr(eq + 1);
    const auto colon = rest.find(':');
    a.spec.selection_coef[v] = std::stod(rest.substr(0, colon));
    if (colon != std::string::npos) a.spec.selection_coef_sd[v] = std::stod(rest.substr(colon + 1));
  }
  const auto out = generate(a.spec);
  const std::string header = "# restrat synth seed=" + std::to_string(a.seed);
  save_dataset(a.out, out.dataset, header);
  const fs::path oracle = fs::path(a.out) / "oracle";
  fs::create_directories(oracle);
  {
    auto f = open(oracle / "true_means.csv", header);
    write_community_features(f, out.oracle_means, out.dataset.vocabulary);
  }
  {
    auto f = open(oracle / "true_users.csv", header);
    write_users(f, out.true_sample);
  }
  {
    // margins of the sample's true demographics over the census bins
    std::vector<MarginTable> margins;
    Dataset truth;
    truth.individuals = out.true_sample;
    for (const auto& [c, idx] : truth.members())
      for (auto v : kAllVariables) {
        MarginTable m;
        m.community = c;
        m.partition = census_partition(v);
        m.percentages.assign(m.partition.size(), 0.0);
        for (auto i : idx) m.percentages[m.partition.bin_index(truth.individuals[i].value(v))] += 1.0 / idx.size();
        margins.push_back(std::move(m));
      }
    auto f = open(oracle / "true_margins.csv", header);
    write_margins(f, margins);
  }
  std::cout << "wrote " << out.dataset.individuals.size() << " users in " << out.oracle_means.size()
            << " communities to " << a.out << "\n";
  return 0;
}

int run_weights(const Common& c) {
  const auto config = resolve(c);
  const auto loaded = load(config, c);
  const auto w = assign_dataset_weights(loaded.data, config.correction);
  std::size_t uncorrected = 0;
  for (const auto& a : w.communities) {
    if (!a.corrected) ++uncorrected;
    for (const auto& msg : a.warnings) std::cerr << "warning: " << a.community << ": " << msg << "\n";
  }
  auto f = open(config.output_dir / "weights.csv", config.header());
  write_weights(f, w.communities);
  std::cout << "weights for " << w.communities.size() << " communities (" << uncorrected
            << " left uncorrected) -> " << (config.output_dir / "weights.csv").string() << "\n";
  return 0;
}

int run_aggregate(const Common& c, const std::string& weights_file) {
  const auto config = resolve(c);
  const auto loaded = load(config, c);
  std::vector<WeightAssignment> weights;
  if (!weights_file.empty())
    weights = read_weights(weights_file);
  else
    weights = assign_dataset_weights(loaded.data, config.correction).communities;
  const auto agg = aggregate_dataset(loaded.data, weights);
  auto f = open(config.output_dir / "community_features.csv", config.header());
  write_community_features(f, agg, loaded.data.vocabulary);
  std::cout << "aggregated " << agg.size() << " communities -> "
            << (config.output_dir / "community_features.csv").string() << "\n";
  return 0;
}

struct Comparison {
  std::vector<ComparisonResult> rows;
  std::vector<EvalResult> baseline, corrected;
  double combined_p = 1.0;
};

Comparison compare(Evaluator& ev, const CorrectionConfig& correction, const std::vector<std::string>& tasks) {
  Comparison out;
  for (const auto& t : tasks) {
    out.baseline.push_back(ev.evaluate_task(CorrectionConfig{}, t));
    out.corrected.push_back(ev.evaluate_task(correction, t));
    const auto& b = out.baseline.back();
    const auto& k = out.corrected.back();
    const std::span<const double> rb(b.residuals.data(), b.residuals.size());
    const std::span<const double> rk(k.residuals.data(), k.residuals.size());
    const auto test = paired_residual_test(rb, rk);
    ComparisonResult r;
    r.task = t;
    r.baseline_r = b.pearson_r;
    r.corrected_r = k.pearson_r;
    r.baseline_rmse = b.rmse;
    r.corrected_rmse = k.rmse;
    r.p_value = test.p_value;
    r.direction = classify(b.pearson_r, k.pearson_r, test.p_value);
    out.rows.push_back(r);
  }
  // correlation between tasks of the per-community residual differences
  const auto n = static_cast<Eigen::Index>(tasks.size());
  Eigen::MatrixXd corr = Eigen::MatrixXd::Identity(n, n);
  std::vector<std::map<CommunityId, double>> diffs(tasks.size());
  for (std::size_t t = 0; t < tasks.size(); ++t)
    for (std::size_t i = 0; i < out.baseline[t].communities.size(); ++i)
      diffs[t][out.baseline[t].communities[i]] =
          std::abs(out.baseline[t].residuals[i]) - std::abs(out.corrected[t].residuals[i]);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      std::vector<double> a, b;
      for (const auto& [c, d] : diffs[i]) {
        auto it = diffs[j].find(c);
        if (it == diffs[j].end()) continue;
        a.push_back(d);
        b.push_back(it->second);
      }
      double rho = 0.0;
      try {
        rho = std::clamp(pearson_r(a, b), -1.0, 1.0);
      } catch (const Error&) {
        rho = 0.0;
      }
      corr(i, j) = corr(j, i) = rho;
    }
  std::vector<double> ps;
  for (const auto& r : out.rows) ps.push_back(r.p_value);
  out.combined_p = combine_dependent_pvalues(ps, corr);
  return out;
}

void write_comparison(std::ostream& csv, std::ostream& text, const Comparison& cmp) {
  csv << "task,baseline_r,corrected_r,baseline_r2,corrected_r2,baseline_rmse,corrected_rmse,p_value,direction\n";
  text << std::left << std::setw(18) << "task" << std::right << std::setw(10) << "base r" << std::setw(10)
       << "corr r" << std::setw(10) << "base R2" << std::setw(10) << "corr R2" << std::setw(10) << "p"
       << std::setw(5) << "" << "\n";
  for (const auto& r : cmp.rows) {
    csv << r.task << ',' << format_number(r.baseline_r) << ',' << format_number(r.corrected_r) << ','
        << format_number(r.baseline_r * r.baseline_r) << ',' << format_number(r.corrected_r * r.corrected_r) << ','
        << format_number(r.baseline_rmse) << ',' << format_number(r.corrected_rmse) << ','
        << format_number(r.p_value) << ',' << to_string(r.direction) << '\n';
    text << std::left << std::setw(18) << r.task << std::right << std::setw(10) << fixed(r.baseline_r)
         << std::setw(10) << fixed(r.corrected_r) << std::setw(10) << fixed(r.baseline_r * r.baseline_r)
         << std::setw(10) << fixed(r.corrected_r * r.corrected_r) << std::setw(10) << fixed(r.p_value, 4)
         << std::setw(5) << to_string(r.direction) << "\n";
  }
  double mb = 0.0, mc = 0.0;
  for (const auto& r : cmp.rows) {
    mb += r.baseline_r / static_cast<double>(cmp.rows.size());
    mc += r.corrected_r / static_cast<double>(cmp.rows.size());
  }
  csv << "average," << format_number(mb) << ',' << format_number(mc) << ",,,,," << format_number(cmp.combined_p)
      << ",\n";
  text << std::left << std::setw(18) << "average" << std::right << std::setw(10) << fixed(mb) << std::setw(10)
       << fixed(mc) << std::setw(20) << "" << std::setw(10) << fixed(cmp.combined_p, 4) << "\n";
}

int run_evaluate(const Common& c) {
  const auto config = resolve(c);
  const auto loaded = load(config, c);
  Evaluator ev(loaded.data, config.pipeline);
  const auto cmp = compare(ev, config.correction, tasks_of(config, loaded.data));
  auto csv = open(config.output_dir / "evaluation.csv", config.header());
  write_comparison(csv, std::cout, cmp);
  {
    auto pred = open(config.output_dir / "predictions.csv", config.header());
    pred << "task,community_id,actual,baseline_pred,corrected_pred\n";
    for (std::size_t t = 0; t < cmp.rows.size(); ++t)
      for (std::size_t i = 0; i < cmp.baseline[t].communities.size(); ++i)
        pred << cmp.rows[t].task << ',' << cmp.baseline[t].communities[i] << ','
             << format_number(cmp.baseline[t].actual[i]) << ',' << format_number(cmp.baseline[t].predicted[i]) << ','
             << format_number(cmp.corrected[t].predicted[i]) << '\n';
  }
  return 0;
}

int run_search(const Common& c, const std::string& sets) {
  const auto config = resolve(c);
  const auto loaded = load(config, c);
  const auto tasks = tasks_of(config, loaded.data);
  Evaluator ev(loaded.data, config.pipeline);

  GridSpec grid;
  grid.methods = {config.correction.method};
  VariableSet full = config.correction.variables;
  if (full.empty())
    for (auto v : kAllVariables)
      if (loaded.data.target(v) != nullptr) full.insert(v);
  if (sets.empty()) {
    // every non-empty subset of the full set
    const auto vars = full.list();
    for (unsigned mask = 1; mask < (1u << vars.size()); ++mask) {
      VariableSet s;
      for (std::size_t i = 0; i < vars.size(); ++i)
        if (mask & (1u << i)) s.insert(vars[i]);
      grid.variable_sets.push_back(s);
    }
  } else {
    std::stringstream ss(sets);
    std::string item;
    while (std::getline(ss, item, ',')) grid.variable_sets.push_back(VariableSet::parse(item));
  }

  const auto ranked = grid_search(ev, tasks, grid);
  {
    auto f = open(config.output_dir / "search.csv", config.header());
    f << "rank,method,vars,redistribute,min_bin,smooth_k,mean_r";
    for (const auto& t : tasks) f << ',' << t << "_r";
    f << ",error\n";
    for (std::size_t i = 0; i < ranked.size(); ++i) {
      const auto& r = ranked[i];
      f << i + 1 << ',' << to_string(r.config.method) << ',' << r.config.variables.label() << ','
        << (r.config.redistribute ? 1 : 0) << ',' << r.config.min_bin_threshold << ','
        << format_number(r.config.smoothing_k) << ',' << format_number(r.mean_r);
      for (std::size_t t = 0; t < tasks.size(); ++t)
        f << ',' << (t < r.tasks.size() ? format_number(r.tasks[t].pearson_r) : std::string());
      f << ',' << r.error << '\n';
    }
  }
  std::cout << "best of " << ranked.size() << " cells: " << ranked.front().config.describe()
            << " mean r = " << fixed(ranked.front().mean_r) << "\n";

  // per-task elimination, as each outcome may prefer a different set
  auto f = open(config.output_dir / "elimination.csv", config.header());
  f << "task,step,vars,min_bin,smooth_k,r,accepted\n";
  for (const auto& t : tasks) {
    const auto res = backwards_eliminate(ev, {t}, full, grid);
    for (std::size_t s = 0; s < res.trace.size(); ++s) {
      const auto& st = res.trace[s];
      f << t << ',' << s << ',' << st.variables.label() << ',' << st.best.config.min_bin_threshold << ','
        << format_number(st.best.config.smoothing_k) << ',' << format_number(st.best.mean_r) << ','
        << (st.accepted ? 1 : 0) << '\n';
    }
    std::cout << t << ": keep " << res.variables.label() << " (min bin " << res.best.config.min_bin_threshold
              << ", k " << res.best.config.smoothing_k << ", r = " << fixed(res.best.mean_r) << ")\n";
  }
  return 0;
}

int run_report(const Common& c) {
  const auto config = resolve(c);
  const auto loaded = load(config, c);
  const auto& data = loaded.data;
  VariableSet vars = config.correction.variables;
  if (vars.empty())
    for (auto v : kAllVariables) vars.insert(v);

  const auto corrected = assign_dataset_weights(data, config.correction);
  const auto before = quantify_bias(data.individuals, {}, data.margins, vars);
  const auto after = quantify_bias(corrected.individuals, corrected.communities, data.margins, vars);

  auto csv = open(config.output_dir / "bias.csv", config.header());
  csv << "variable,uncorrected,corrected,communities\n";
  std::ostringstream text;
  text << "Residual demographic bias (standardized mean difference; share difference for binary variables)\n";
  text << std::left << std::setw(12) << "variable" << std::right << std::setw(14) << "uncorrected" << std::setw(12)
       << "corrected" << "\n";
  for (const auto& e : before.entries) {
    const auto* a = after.find(e.variable);
    const double ca = a ? a->bias : std::nan("");
    csv << to_string(e.variable) << ',' << format_number(e.bias) << ',' << format_number(ca) << ','
        << e.communities << '\n';
    text << std::left << std::setw(12) << to_string(e.variable) << std::right << std::setw(14) << fixed(e.bias)
         << std::setw(12) << fixed(ca) << "\n";
  }
  for (const auto& w : after.warnings) std::cerr << "warning: " << w << "\n";

  if (!data.outcomes.empty()) {
    Evaluator ev(data, config.pipeline);
    const auto cmp = compare(ev, config.correction, tasks_of(config, data));
    auto summary = open(config.output_dir / "summary.csv", config.header());
    text << "\nPrediction accuracy (" << config.correction.describe() << ")\n";
    write_comparison(summary, text, cmp);
  }
  {
    std::ofstream f(config.output_dir / "report.txt", std::ios::binary);
    f << config.header() << "\n" << text.str();
  }
  std::cout << text.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Selection-bias correction for community-level estimates from social media samples"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* cmd_synth = app.add_subcommand("synth", "generate a synthetic dataset with known bias");
  cmd_synth->add_option("--seed", synth.seed, "generator seed")->required();
  cmd_synth->add_option("--out", synth.out, "output directory");
  cmd_synth->add_option("--communities", synth.spec.n_communities);
  cmd_synth->add_option("--population", synth.spec.population_size, "population per community");
  cmd_synth->add_option("--sample", synth.spec.sample_size, "sampled users per community");
  cmd_synth->add_option("--features", synth.spec.n_features);
  cmd_synth->add_option("--outcomes", synth.spec.n_outcomes);
  cmd_synth->add_option("--outcome-noise", synth.spec.outcome_noise_sd);
  cmd_synth->add_option("--shrinkage", synth.shrinkage, "estimator shrinkage factor for every variable");
  cmd_synth->add_option("--selection", synth.selection, "selection terms, e.g. income=-1:0.8,age=0.5");
  cmd_synth->add_option("--selection-intercept", synth.spec.selection_intercept);

  Common common;
  std::string weights_file, sets;
  auto* cmd_weights = app.add_subcommand("weights", "compute correction factors");
  auto* cmd_aggregate = app.add_subcommand("aggregate", "weighted community feature means");
  auto* cmd_evaluate = app.add_subcommand("evaluate", "cross-validated accuracy against the uncorrected baseline");
  auto* cmd_search = app.add_subcommand("search", "grid search and backwards elimination");
  auto* cmd_report = app.add_subcommand("report", "bias report and summary tables");
  for (auto* cmd : {cmd_weights, cmd_aggregate, cmd_evaluate, cmd_search, cmd_report}) add_common(cmd, common);
  cmd_aggregate->add_option("--weights", weights_file, "weights.csv to apply (default: compute from settings)")
      ->check(CLI::ExistingFile);
  cmd_search->add_option("--sets", sets, "variable sets to search, e.g. income,income+education");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*cmd_synth) return run_synth(synth);
    if (*cmd_weights) return run_weights(common);
    if (*cmd_aggregate) return run_aggregate(common, weights_file);
    if (*cmd_evaluate) return run_evaluate(common);
    if (*cmd_search) return run_search(common, sets);
    if (*cmd_report) return run_report(common);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

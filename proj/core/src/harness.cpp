#include "vshift/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <mutex>
#include <numeric>
#include <thread>

#include <json.hpp>

#include "vshift/error.hpp"
#include "vshift/random.hpp"

namespace vshift {

namespace {

using ojson = nlohmann::ordered_json;

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

/// Sample mean and (n-1) standard deviation.
MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd out;
  if (xs.empty()) return out;
  out.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - out.mean) * (x - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return out;
}

double binomial_se(double p, std::size_t trials) {
  const double q = std::clamp(p, 0.0, 1.0);
  return trials == 0 ? 0.0 : std::sqrt(q * (1.0 - q) / static_cast<double>(trials));
}

/// Fills per-trial normalized errors and builds one summary per method for
/// the trials of a single training size.
void summarize(ExperimentReport& report, std::vector<TrialResult>& trials, const std::vector<Method>& methods,
               std::size_t n_train, Aggregation aggregation) {
  const std::string reference = to_string(Method::unweighted);
  std::map<std::size_t, double> unweighted;
  for (const auto& t : trials)
    if (t.method == reference) unweighted[t.trial] = t.error;

  for (auto& t : trials) {
    auto it = unweighted.find(t.trial);
    t.normalized = it == unweighted.end() ? std::nullopt : metric_normalized(t.error, it->second);
  }

  const bool have_reference = std::find(methods.begin(), methods.end(), Method::unweighted) != methods.end();
  MeanStd reference_raw;
  if (have_reference) {
    std::vector<double> raw;
    for (const auto& [trial, e] : unweighted) raw.push_back(e);
    reference_raw = mean_std(raw);
  }

  for (Method m : methods) {
    const std::string name = to_string(m);
    MethodSummary s;
    s.method = name;
    s.n_train = n_train;
    std::vector<double> ratios, raw;
    for (const auto& t : trials) {
      if (t.method != name) continue;
      raw.push_back(t.error);
      if (t.normalized)
        ratios.push_back(*t.normalized);
      else
        ++s.excluded;
    }
    const auto raw_stats = mean_std(raw);
    s.raw_mean = raw_stats.mean;
    s.raw_std = raw_stats.std;
    if (aggregation == Aggregation::ratio_then_mean) {
      const auto stats = mean_std(ratios);
      s.mean = stats.mean;
      s.std = stats.std;
      s.trials = ratios.size();
    } else {
      s.trials = raw.size();
      s.excluded = 0;
      if (have_reference && reference_raw.mean > 0.0) {
        s.mean = raw_stats.mean / reference_raw.mean;
        s.std = raw_stats.std / reference_raw.mean;
      } else {
        s.mean = std::numeric_limits<double>::quiet_NaN();
      }
    }
    report.methods.push_back(s);
  }
  report.trials.insert(report.trials.end(), trials.begin(), trials.end());
}

std::vector<std::size_t> choose_columns(std::size_t available, std::size_t keep, Rng& rng) {
  std::vector<std::size_t> cols(available);
  std::iota(cols.begin(), cols.end(), std::size_t{0});
  for (std::size_t i = 0; i < keep; ++i) {
    std::size_t j = i + std::uniform_int_distribution<std::size_t>(0, available - 1 - i)(rng);
    std::swap(cols[i], cols[j]);
  }
  cols.resize(keep);
  std::sort(cols.begin(), cols.end());
  return cols;
}

std::optional<BiasDirection> direction_for(DirectionPolicy policy, std::size_t trial) {
  switch (policy) {
    case DirectionPolicy::random: return std::nullopt;
    case DirectionPolicy::balanced: return trial % 2 == 0 ? BiasDirection::up : BiasDirection::down;
    case DirectionPolicy::up: return BiasDirection::up;
    case DirectionPolicy::down: return BiasDirection::down;
  }
  return std::nullopt;
}

/// One biased split per trial, shared by the bias experiment and the sweep.
struct TrialSplit {
  BiasedSplit split;
  std::uint64_t seed = 0;
};

std::optional<TrialSplit> make_trial_split(const LabeledDataset& normalized_source, BiasScheme scheme,
                                           std::size_t train_size, std::optional<std::size_t> test_size,
                                           std::optional<std::size_t> feature_subset, DirectionPolicy policy,
                                           std::uint64_t master, std::size_t trial) {
  TrialSplit out;
  out.seed = derive_seed(master, trial);
  Rng rng = make_rng(out.seed);
  const LabeledDataset* source = &normalized_source;
  LabeledDataset subset;
  if (feature_subset && *feature_subset < normalized_source.dim()) {
    const auto cols = choose_columns(normalized_source.dim(), *feature_subset, rng);
    subset = select_features(normalized_source, cols);
    source = &subset;
  }
  BiasSpec spec;
  spec.scheme = scheme;
  spec.direction = direction_for(policy, trial);
  spec.train_size = train_size;
  spec.test_size = test_size;
  spec.seed = derive_seed(out.seed, 1);
  try {
    out.split = apply_bias(*source, spec);
  } catch (const InsufficientDataError&) {
    return std::nullopt;
  }
  return out;
}

void echo(ExperimentReport& r, const std::string& key, const std::string& value) { r.config.emplace_back(key, value); }

std::string methods_string(const std::vector<Method>& methods) {
  std::string s;
  for (Method m : methods) s += (s.empty() ? "" : ",") + to_string(m);
  return s;
}

void echo_settings(ExperimentReport& r, const MethodSettings& s) {
  echo(r, "kernel", to_string(s.kernel.family));
  echo(r, "width", fmt17(s.kernel.width));
  echo(r, "gamma", fmt17(s.gamma));
  echo(r, "bandwidth", fmt17(s.bandwidth));
  echo(r, "tau", fmt17(s.tau));
}

void check_methods(const std::vector<Method>& methods) {
  if (methods.empty()) throw InvalidArgument("no methods selected");
}

}  // namespace

// ---------------------------------------------------------------- metrics

double metric_l2_probability_error(const std::function<double(const Vector&)>& predict,
                                   const std::function<double(const Vector&)>& true_conditional,
                                   const TargetSample& eval_points) {
  if (eval_points.size() == 0) throw InvalidArgument("no evaluation points");
  double ss = 0.0;
  for (Eigen::Index q = 0; q < eval_points.features.rows(); ++q) {
    const Vector t = eval_points.features.row(q).transpose();
    const double d = predict(t) - true_conditional(t);
    ss += d * d;
  }
  return std::sqrt(ss / static_cast<double>(eval_points.size()));
}

std::optional<double> metric_normalized(double method_error, double unweighted_error) {
  if (!(unweighted_error > 0.0)) return std::nullopt;
  return method_error / unweighted_error;
}

double classification_error(const std::vector<int>& predicted, const std::vector<int>& truth) {
  if (predicted.size() != truth.size() || truth.empty()) throw DimensionError("prediction and label counts differ");
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) wrong += predicted[i] != truth[i];
  return static_cast<double>(wrong) / static_cast<double>(truth.size());
}

// ---------------------------------------------------------------- methods

std::string to_string(Method m) {
  switch (m) {
    case Method::empirical_v: return "empirical_v";
    case Method::additive_v: return "additive_v";
    case Method::analytic_uniform_v: return "analytic_uniform_v";
    case Method::unweighted: return "unweighted";
    case Method::ratio: return "ratio";
    case Method::exponentiated: return "exponentiated";
  }
  return "?";
}

Method parse_method(const std::string& s) {
  for (Method m : {Method::empirical_v, Method::additive_v, Method::analytic_uniform_v, Method::unweighted,
                   Method::ratio, Method::exponentiated})
    if (to_string(m) == s) return m;
  throw InvalidArgument("unknown method '" + s + "'");
}

VsvmModel fit_method(Method method, const LabeledDataset& train, const TargetSample& v_target,
                     const MethodSettings& settings) {
  switch (method) {
    case Method::empirical_v:
      return fit(train, empirical_v(train.features, v_target), settings.kernel, settings.gamma);
    case Method::additive_v:
      return fit(train, empirical_v_additive(train.features, v_target), settings.kernel, settings.gamma);
    case Method::analytic_uniform_v: {
      const std::vector<double> c(train.dim(), 1.0);
      return fit(train, analytic_v_uniform(train.features, c), settings.kernel, settings.gamma);
    }
    case Method::unweighted: return fit(train, identity_v(train.size()), settings.kernel, settings.gamma);
    case Method::ratio:
      return fit_weighted(train, importance_weights(train.features, v_target, settings.bandwidth, WeightScheme::ratio),
                          settings.kernel, settings.gamma);
    case Method::exponentiated:
      return fit_weighted(
          train,
          importance_weights(train.features, v_target, settings.bandwidth, WeightScheme::exponentiated, settings.tau),
          settings.kernel, settings.gamma);
  }
  throw InvalidArgument("unknown method");
}

// ---------------------------------------------------------------- reports

const MethodSummary* ExperimentReport::find(const std::string& method, std::size_t n_train) const {
  for (const auto& s : methods)
    if (s.method == method && (n_train == 0 || s.n_train == n_train)) return &s;
  return nullptr;
}

void write_csv(std::ostream& os, const ExperimentReport& report) {
  os << "name,mean,std,trials,excluded,raw_mean,raw_std,n_train\n";
  for (const auto& s : report.methods)
    os << s.method << ',' << fmt17(s.mean) << ',' << fmt17(s.std) << ',' << s.trials << ',' << s.excluded << ','
       << fmt17(s.raw_mean) << ',' << fmt17(s.raw_std) << ',' << s.n_train << '\n';
}

std::string to_json(const ExperimentReport& report) {
  ojson j;
  j["experiment"] = report.name;
  ojson cfg = ojson::object();
  for (const auto& [k, v] : report.config) cfg[k] = v;
  j["config"] = cfg;
  j["trials_requested"] = report.trials_requested;
  j["trials_skipped"] = report.trials_skipped;
  auto methods = ojson::array();
  for (const auto& s : report.methods) {
    methods.push_back({{"method", s.method},
                       {"n_train", s.n_train},
                       {"mean", s.mean},
                       {"std", s.std},
                       {"trials", s.trials},
                       {"excluded", s.excluded},
                       {"raw_mean", s.raw_mean},
                       {"raw_std", s.raw_std}});
  }
  j["methods"] = methods;
  auto trials = ojson::array();
  for (const auto& t : report.trials) {
    ojson r{{"trial", t.trial}, {"seed", t.seed}, {"method", t.method}, {"n_train", t.n_train}, {"error", t.error}};
    r["classification_error"] = t.classification_error ? ojson(*t.classification_error) : ojson(nullptr);
    r["l2_error"] = t.l2_error ? ojson(*t.l2_error) : ojson(nullptr);
    r["normalized"] = t.normalized ? ojson(*t.normalized) : ojson(nullptr);
    r["feature"] = t.feature ? ojson(*t.feature) : ojson(nullptr);
    r["direction"] = t.direction ? ojson(to_string(*t.direction)) : ojson(nullptr);
    trials.push_back(std::move(r));
  }
  j["trials"] = trials;
  return j.dump(2);
}

// ---------------------------------------------------------------- experiments

SyntheticResult run_experiment_synthetic(const SyntheticConfig& config) {
  check_methods(config.methods);
  if (config.trials == 0) throw InvalidArgument("trial count must be positive");
  if (config.n_train_values.empty()) throw InvalidArgument("no training sizes given");

  SyntheticResult out;
  ExperimentReport& report = out.report;
  report.name = config.separate_v_target ? "synthetic-separate-target" : "synthetic";
  std::string sizes;
  for (auto n : config.n_train_values) sizes += (sizes.empty() ? "" : ",") + std::to_string(n);
  echo(report, "n_train", sizes);
  echo(report, "n_target", std::to_string(config.n_target));
  echo(report, "trials", std::to_string(config.trials));
  echo(report, "seed", std::to_string(config.seed));
  echo(report, "separate_v_target", config.separate_v_target ? "true" : "false");
  echo(report, "v_target_size", std::to_string(config.v_target_size));
  echo(report, "methods", methods_string(config.methods));
  echo_settings(report, config.settings);
  report.trials_requested = config.trials * config.n_train_values.size();

  const auto truth = [](const Vector& x) { return sigmoid_conditional(x[0]); };

  for (std::size_t size_index = 0; size_index < config.n_train_values.size(); ++size_index) {
    const std::size_t n_train = config.n_train_values[size_index];
    const std::uint64_t size_seed = derive_seed(config.seed, n_train);
    std::vector<std::vector<TrialResult>> per_trial(config.trials);

    parallel_for(config.trials, config.jobs, [&](std::size_t trial) {
      const std::uint64_t seed = derive_seed(size_seed, trial);
      auto data = gen_sigmoid_synthetic(n_train, config.n_target, seed);
      TargetSample v_target = data.target;
      if (config.separate_v_target) {
        Rng rng = make_rng(derive_seed(seed, 1));
        v_target = gen_sigmoid_target(config.v_target_size, rng);
      }
      for (Method m : config.methods) {
        const auto model = fit_method(m, data.train, v_target, config.settings);
        TrialResult r;
        r.method = to_string(m);
        r.trial = trial;
        r.seed = seed;
        r.n_train = n_train;
        r.error = metric_l2_probability_error([&](const Vector& x) { return predict_proba(model, x); }, truth,
                                              data.target);
        r.l2_error = r.error;
        per_trial[trial].push_back(std::move(r));
      }
    });

    std::vector<TrialResult> flat;
    for (auto& v : per_trial) flat.insert(flat.end(), v.begin(), v.end());
    summarize(report, flat, config.methods, n_train, config.aggregation);
  }

  if (config.dump_grid > 1) {
    const std::size_t n_train = config.n_train_values.front();
    const std::uint64_t seed = derive_seed(derive_seed(config.seed, n_train), 0);
    auto data = gen_sigmoid_synthetic(n_train, config.n_target, seed);
    TargetSample v_target = data.target;
    if (config.separate_v_target) {
      Rng rng = make_rng(derive_seed(seed, 1));
      v_target = gen_sigmoid_target(config.v_target_size, rng);
    }
    Matrix grid(static_cast<Eigen::Index>(config.dump_grid), 1);
    for (std::size_t g = 0; g < config.dump_grid; ++g)
      grid(static_cast<Eigen::Index>(g), 0) = -1.0 + 2.0 * static_cast<double>(g) / static_cast<double>(config.dump_grid - 1);
    for (Method m : config.methods) {
      const auto model = fit_method(m, data.train, v_target, config.settings);
      const Vector prob = predict_proba(model, grid);
      for (Eigen::Index g = 0; g < grid.rows(); ++g) out.dump.push_back({grid(g, 0), to_string(m), prob[g]});
    }
    for (Eigen::Index g = 0; g < grid.rows(); ++g)
      out.dump.push_back({grid(g, 0), "truth", sigmoid_conditional(grid(g, 0))});
  }
  return out;
}

void write_csv(std::ostream& os, const std::vector<PredictionDumpRow>& dump) {
  os << "x,method,probability\n";
  for (const auto& r : dump) os << fmt17(r.x) << ',' << r.method << ',' << fmt17(r.probability) << '\n';
}

std::string to_string(DirectionPolicy p) {
  switch (p) {
    case DirectionPolicy::random: return "random";
    case DirectionPolicy::balanced: return "balanced";
    case DirectionPolicy::up: return "up";
    case DirectionPolicy::down: return "down";
  }
  return "?";
}

DirectionPolicy parse_direction_policy(const std::string& s) {
  for (auto p : {DirectionPolicy::random, DirectionPolicy::balanced, DirectionPolicy::up, DirectionPolicy::down})
    if (to_string(p) == s) return p;
  throw InvalidArgument("unknown direction policy '" + s + "'");
}

ExperimentReport run_experiment_bias(const BiasExperimentConfig& config) {
  check_methods(config.methods);
  if (config.trials == 0) throw InvalidArgument("trial count must be positive");
  config.source.validate();

  ExperimentReport report;
  report.name = config.dataset_name + "/" + to_string(config.scheme);
  echo(report, "dataset", config.dataset_name);
  echo(report, "scheme", to_string(config.scheme));
  echo(report, "train_size", std::to_string(config.train_size));
  echo(report, "test_size", config.test_size ? std::to_string(*config.test_size) : "remaining");
  echo(report, "feature_subset", config.feature_subset ? std::to_string(*config.feature_subset) : "all");
  echo(report, "direction", to_string(config.direction));
  echo(report, "trials", std::to_string(config.trials));
  echo(report, "seed", std::to_string(config.seed));
  echo(report, "methods", methods_string(config.methods));
  echo(report, "aggregation", config.aggregation == Aggregation::ratio_then_mean ? "ratio_then_mean" : "mean_then_ratio");
  echo_settings(report, config.settings);
  report.trials_requested = config.trials;

  const LabeledDataset source = normalize_unit_cube(config.source);
  std::vector<std::vector<TrialResult>> per_trial(config.trials);
  std::vector<char> skipped(config.trials, 0);

  parallel_for(config.trials, config.jobs, [&](std::size_t trial) {
    auto made = make_trial_split(source, config.scheme, config.train_size, config.test_size, config.feature_subset,
                                 config.direction, config.seed, trial);
    if (!made) {
      skipped[trial] = 1;
      return;
    }
    const auto& split = made->split;
    for (Method m : config.methods) {
      const auto model = fit_method(m, split.train, split.target, config.settings);
      TrialResult r;
      r.method = to_string(m);
      r.trial = trial;
      r.seed = made->seed;
      r.n_train = split.train.size();
      r.error = classification_error(predict_label(model, split.target.features), split.target_labels);
      r.classification_error = r.error;
      r.feature = split.feature;
      r.direction = split.direction;
      per_trial[trial].push_back(std::move(r));
    }
  });

  std::vector<TrialResult> flat;
  for (std::size_t t = 0; t < config.trials; ++t) {
    report.trials_skipped += static_cast<std::size_t>(skipped[t]);
    flat.insert(flat.end(), per_trial[t].begin(), per_trial[t].end());
  }
  summarize(report, flat, config.methods, config.train_size, config.aggregation);
  return report;
}

BiasExperimentConfig protocol_config(Protocol p, std::string dataset_name, LabeledDataset source) {
  BiasExperimentConfig c;
  c.source = std::move(source);
  c.train_size = 100;
  switch (p) {
    case Protocol::exp3:
      c.scheme = BiasScheme::sugiyama;
      c.test_size = 500;
      c.trials = 100;
      if (dataset_name == "ringnorm") c.feature_subset = 5;
      break;
    case Protocol::exp4:
      c.scheme = BiasScheme::single_feature;
      c.trials = 100;
      break;
    case Protocol::exp5:
      c.scheme = BiasScheme::norm;
      c.trials = 50;
      break;
  }
  c.dataset_name = std::move(dataset_name);
  return c;
}

std::vector<BandwidthRow> run_bandwidth_sweep(const BandwidthSweepConfig& config) {
  if (config.bandwidths.empty()) throw InvalidArgument("no bandwidths given");
  for (double h : config.bandwidths)
    if (!(h > 0.0)) throw InvalidArgument("bandwidths must be positive");
  if (config.trials == 0) throw InvalidArgument("trial count must be positive");
  config.source.validate();

  const LabeledDataset source = normalize_unit_cube(config.source);
  const std::size_t nb = config.bandwidths.size();
  // ratios[trial][b]; nullopt marks a skipped trial or zero unweighted error
  std::vector<std::vector<std::optional<double>>> ratios(config.trials, std::vector<std::optional<double>>(nb));

  parallel_for(config.trials, config.jobs, [&](std::size_t trial) {
    auto made = make_trial_split(source, config.scheme, config.train_size, config.test_size, std::nullopt,
                                 config.direction, config.seed, trial);
    if (!made) return;
    const auto& split = made->split;
    const auto base = fit_method(Method::unweighted, split.train, split.target, config.settings);
    const double base_err = classification_error(predict_label(base, split.target.features), split.target_labels);
    for (std::size_t b = 0; b < nb; ++b) {
      MethodSettings s = config.settings;
      s.bandwidth = config.bandwidths[b];
      const auto model = fit_method(Method::ratio, split.train, split.target, s);
      const double err = classification_error(predict_label(model, split.target.features), split.target_labels);
      ratios[trial][b] = metric_normalized(err, base_err);
    }
  });

  std::vector<BandwidthRow> rows;
  for (std::size_t b = 0; b < nb; ++b) {
    BandwidthRow row;
    row.bandwidth = config.bandwidths[b];
    std::vector<double> xs;
    for (std::size_t t = 0; t < config.trials; ++t) {
      if (ratios[t][b])
        xs.push_back(*ratios[t][b]);
      else
        ++row.excluded;
    }
    const auto stats = mean_std(xs);
    row.mean = stats.mean;
    row.std = stats.std;
    row.trials = xs.size();
    rows.push_back(row);
  }
  return rows;
}

void write_csv(std::ostream& os, const std::vector<BandwidthRow>& rows) {
  os << "bandwidth,mean,std,trials,excluded\n";
  for (const auto& r : rows)
    os << fmt17(r.bandwidth) << ',' << fmt17(r.mean) << ',' << fmt17(r.std) << ',' << r.trials << ',' << r.excluded
       << '\n';
}

// ---------------------------------------------------------------- verifiers

std::string to_json(const BoundCheckResult& r) {
  ojson j{{"check", r.check},
          {"trials", r.trials},
          {"fraction_held", r.fraction_held},
          {"theoretical_min", r.theoretical_min},
          {"pass_threshold", r.pass_threshold},
          {"pass", r.pass},
          {"vacuous", r.vacuous}};
  if (r.max_deviation) j["max_deviation"] = *r.max_deviation;
  if (r.band) j["band"] = *r.band;
  return j.dump(2);
}

BoundCheckResult verify_mvue(std::size_t n_train, std::size_t dim, std::size_t n_target, std::size_t repeats,
                             std::uint64_t seed, TargetLaw law, double c) {
  if (n_train == 0 || dim == 0 || n_target == 0 || repeats == 0) throw InvalidArgument("counts must be positive");
  if (!(c > 0.0)) throw InvalidArgument("support half-width must be positive");
  const auto n = static_cast<Eigen::Index>(n_train);
  const auto k = static_cast<Eigen::Index>(dim);

  Rng train_rng = make_rng(derive_seed(seed, 0));
  std::uniform_real_distribution<double> support(-c, c);
  Matrix x(n, k);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index d = 0; d < k; ++d) x(i, d) = support(train_rng);

  const std::vector<double> widths(dim, c);
  const Matrix truth = analytic_v_uniform(x, widths).entries;
  Matrix sum = Matrix::Zero(n, n);
  const double lo = law == TargetLaw::matched ? -c : 0.0;
  for (std::size_t r = 0; r < repeats; ++r) {
    Rng rng = make_rng(derive_seed(seed, r + 1));
    std::uniform_real_distribution<double> draw(lo, c);
    TargetSample t;
    t.features.resize(static_cast<Eigen::Index>(n_target), k);
    for (Eigen::Index q = 0; q < t.features.rows(); ++q)
      for (Eigen::Index d = 0; d < k; ++d) t.features(q, d) = draw(rng);
    sum += empirical_v(x, t).entries;
  }
  const Matrix mean = sum / static_cast<double>(repeats);

  // Hoeffding-scale band: four standard deviations of a mean of R*M
  // Bernoulli draws at the worst case p = 1/2.
  const double rm = static_cast<double>(repeats) * static_cast<double>(n_target);
  const double band = 4.0 * std::sqrt(1.0 / (4.0 * rm));

  std::size_t held = 0, entries = 0;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i; j < n; ++j) {
      const double dev = std::abs(mean(i, j) - truth(i, j));
      worst = std::max(worst, dev);
      held += dev <= band;
      ++entries;
    }

  BoundCheckResult out;
  out.check = "mvue";
  out.trials = repeats;
  out.fraction_held = static_cast<double>(held) / static_cast<double>(entries);
  out.theoretical_min = std::max(0.0, 1.0 - 2.0 * std::exp(-2.0 * rm * band * band));
  out.pass_threshold = 1.0;
  out.max_deviation = worst;
  out.band = band;
  out.pass = worst <= band;
  return out;
}

BoundCheckResult verify_concentration_1d(std::size_t n_train, std::size_t n_target, std::size_t trials,
                                         std::uint64_t seed, double residual_scale) {
  if (n_train == 0 || n_target == 0 || trials == 0) throw InvalidArgument("counts must be positive");
  const auto n = static_cast<Eigen::Index>(n_train);
  std::normal_distribution<double> normal(0.0, 1.0);

  Rng train_rng = make_rng(derive_seed(seed, 0));
  Matrix x(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) x(i, 0) = normal(train_rng);
  const VMatrix truth = analytic_v_gaussian(x);

  const double m = static_cast<double>(n_target);
  const double eps = std::sqrt(std::log(m) / m);
  std::size_t held = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng = make_rng(derive_seed(seed, t + 1));
    std::uniform_real_distribution<double> resid(-1.0, 1.0);
    Vector l(n);
    for (Eigen::Index i = 0; i < n; ++i) l[i] = residual_scale * resid(rng);
    TargetSample target;
    target.features.resize(static_cast<Eigen::Index>(n_target), 1);
    for (Eigen::Index q = 0; q < target.features.rows(); ++q) target.features(q, 0) = normal(rng);
    const VMatrix est = empirical_v(x, target);
    const double gap = std::abs(rho_squared(truth, l) - rho_squared(est, l));
    const double abs_sum = l.cwiseAbs().sum();
    const double bound = eps * abs_sum * abs_sum / static_cast<double>(n * n);
    held += gap <= bound;
  }

  BoundCheckResult out;
  out.check = "theorem-1d";
  out.trials = trials;
  out.fraction_held = static_cast<double>(held) / static_cast<double>(trials);
  out.theoretical_min = 1.0 - 2.0 / (m * m);
  out.pass_threshold = out.theoretical_min - 3.0 * binomial_se(out.theoretical_min, trials);
  out.vacuous = out.theoretical_min <= 0.0;
  out.pass = out.vacuous || out.fraction_held >= out.pass_threshold;
  return out;
}

BoundCheckResult verify_concentration_nd(std::size_t n_train, std::size_t dim, std::size_t n_target, double delta,
                                         std::size_t trials, std::uint64_t seed) {
  if (n_train == 0 || dim == 0 || n_target == 0 || trials == 0) throw InvalidArgument("counts must be positive");
  if (!(delta > 0.0)) throw InvalidArgument("delta must be positive");
  const auto n = static_cast<Eigen::Index>(n_train);
  const auto k = static_cast<Eigen::Index>(dim);
  std::uniform_real_distribution<double> cube(-1.0, 1.0);

  Rng train_rng = make_rng(derive_seed(seed, 0));
  Matrix x(n, k);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index d = 0; d < k; ++d) x(i, d) = cube(train_rng);
  const std::vector<double> widths(dim, 1.0);
  const VMatrix truth = analytic_v_uniform(x, widths);

  std::size_t held = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng = make_rng(derive_seed(seed, t + 1));
    Vector l(n);
    for (Eigen::Index i = 0; i < n; ++i) l[i] = cube(rng);
    TargetSample target;
    target.features.resize(static_cast<Eigen::Index>(n_target), k);
    for (Eigen::Index q = 0; q < target.features.rows(); ++q)
      for (Eigen::Index d = 0; d < k; ++d) target.features(q, d) = cube(rng);
    const VMatrix est = empirical_v(x, target);
    const double gap = std::abs(rho_squared(truth, l) - rho_squared(est, l));
    const double max_abs = l.cwiseAbs().maxCoeff();
    held += gap <= delta * max_abs * max_abs;
  }

  const double nn = static_cast<double>(n_train);
  BoundCheckResult out;
  out.check = "theorem-nd";
  out.trials = trials;
  out.fraction_held = static_cast<double>(held) / static_cast<double>(trials);
  out.theoretical_min = 1.0 - nn * (nn + 1.0) * std::exp(-2.0 * static_cast<double>(n_target) * delta * delta);
  out.vacuous = out.theoretical_min <= 0.0;
  out.pass_threshold = out.vacuous ? 0.0 : out.theoretical_min - 3.0 * binomial_se(out.theoretical_min, trials);
  out.pass = out.vacuous || out.fraction_held >= out.pass_threshold;
  return out;
}

void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& body) {
  jobs = std::max<std::size_t>(1, std::min(jobs, count));
  std::vector<std::exception_ptr> errors(count);
  if (jobs == 1) {
    for (std::size_t i = 0; i < count; ++i) {
      try {
        body(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    workers.reserve(jobs);
    for (std::size_t w = 0; w < jobs; ++w)
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < count; i = next++) {
          try {
            body(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    for (auto& t : workers) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace vshift

#include "cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "vshift/baselines.hpp"
#include "vshift/dataset.hpp"
#include "vshift/error.hpp"
#include "vshift/harness.hpp"
#include "vshift/random.hpp"
#include "vshift/vboost.hpp"
#include "vshift/vmatrix.hpp"
#include "vshift/vsvm.hpp"

namespace vshift::cli {

namespace {

namespace fs = std::filesystem;

fs::path resolve_output(const std::string& path) {
  fs::path p(path);
  if (p.is_relative()) {
    if (const char* dir = std::getenv(kOutputDirEnv); dir && *dir) p = fs::path(dir) / p;
  }
  return p;
}

/// Writes through `body` to the named file, or to `fallback` when the path is
/// empty or "-".
void emit(const std::string& path, std::ostream& fallback, const std::function<void(std::ostream&)>& body) {
  if (path.empty() || path == "-") {
    body(fallback);
    return;
  }
  const fs::path p = resolve_output(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::binary);
  if (!os) throw DataError("cannot write " + p.string());
  body(os);
  if (!os) throw DataError("failed writing " + p.string());
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct KernelFlags {
  std::string family = "sqrt_gaussian";
  double width = 1.0;
  double gamma = 0.1;
  double bandwidth = 2.0;
  double tau = 0.5;

  void add(CLI::App* app) {
    app->add_option("--kernel", family, "Kernel family")
        ->check(CLI::IsMember({"gaussian", "sqrt_gaussian"}))
        ->capture_default_str();
    app->add_option("--width", width, "Kernel width")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--gamma", gamma, "Regularization coefficient")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--h,--bandwidth", bandwidth, "KDE bandwidth for importance weights")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app->add_option("--tau", tau, "Exponent of the exponentiated weights")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
  }

  MethodSettings settings() const {
    MethodSettings s;
    s.kernel = {parse_kernel_family(family), width};
    s.gamma = gamma;
    s.bandwidth = bandwidth;
    s.tau = tau;
    return s;
  }
};

// ------------------------------------------------------------------ gen

struct GenFlags {
  std::string kind = "sigmoid";
  std::size_t n_train = 200;
  std::size_t n_target = 1000;
  std::size_t n = 7400;
  std::uint64_t seed = 1;
  std::string out_train, out_target, out;
};

void run_gen(const GenFlags& f, std::ostream& out, std::ostream& err) {
  if (f.kind == "sigmoid") {
    if (f.out_train.empty() || f.out_target.empty()) throw InvalidArgument("gen sigmoid needs --out-train and --out-target");
    auto data = gen_sigmoid_synthetic(f.n_train, f.n_target, f.seed);
    emit(f.out_train, out, [&](std::ostream& os) { write_csv(os, data.train); });
    emit(f.out_target, out, [&](std::ostream& os) { write_csv(os, data.target); });
    err << "generated sigmoid: " << f.n_train << " train, " << f.n_target << " target rows\n";
    return;
  }
  auto data = f.kind == "twonorm" ? gen_twonorm(f.n, f.seed) : gen_ringnorm(f.n, f.seed);
  emit(f.out, out, [&](std::ostream& os) { write_csv(os, data); });
  err << "generated " << f.kind << ": " << data.size() << " rows, " << data.dim() << " features\n";
}

// ------------------------------------------------------------------ bias

struct BiasFlags {
  std::string scheme = "sugiyama";
  std::string input;
  int label_column = -1;
  std::size_t train_size = 100;
  std::optional<std::size_t> test_size;
  std::optional<std::size_t> feature;
  std::string direction = "random";
  std::uint64_t seed = 1;
  bool no_normalize = false;
  std::string out_train, out_target, out_target_labels;
};

void run_bias(const BiasFlags& f, std::ostream& out, std::ostream& err) {
  LabeledDataset source = load_csv(f.input, f.label_column);
  if (!f.no_normalize) source = normalize_unit_cube(source);
  BiasSpec spec;
  spec.scheme = parse_bias_scheme(f.scheme);
  spec.feature = f.feature;
  if (f.direction != "random") spec.direction = parse_bias_direction(f.direction);
  spec.train_size = f.train_size;
  spec.test_size = f.test_size;
  spec.seed = f.seed;
  const auto split = apply_bias(source, spec);
  emit(f.out_train, out, [&](std::ostream& os) { write_csv(os, split.train); });
  emit(f.out_target, out, [&](std::ostream& os) { write_csv(os, split.target); });
  if (!f.out_target_labels.empty()) {
    emit(f.out_target_labels, out, [&](std::ostream& os) {
      os << "label\n";
      for (int y : split.target_labels) os << y << '\n';
    });
  }
  err << "biased (" << f.scheme << "): " << split.train.size() << " train, " << split.target.size() << " target";
  if (split.feature) err << ", feature " << *split.feature;
  if (split.direction) err << ", direction " << to_string(*split.direction);
  err << '\n';
}

// ------------------------------------------------------------------ vmatrix

VMatrix build_v(const std::string& kind, const LabeledDataset& train, const std::optional<TargetSample>& target,
                double c) {
  auto need_target = [&]() -> const TargetSample& {
    if (!target) throw InvalidArgument("V kind '" + kind + "' needs --target");
    return *target;
  };
  if (kind == "empirical" || kind == "multiplicative") return empirical_v(train.features, need_target());
  if (kind == "additive") return empirical_v_additive(train.features, need_target());
  if (kind == "analytic-uniform") {
    const std::vector<double> widths(train.dim(), c);
    return analytic_v_uniform(train.features, widths);
  }
  if (kind == "analytic-gaussian") return analytic_v_gaussian(train.features);
  if (kind == "identity") return identity_v(train.size());
  throw InvalidArgument("unknown V kind '" + kind + "'");
}

const std::vector<std::string> kVKinds{"empirical", "multiplicative", "additive", "analytic-uniform",
                                       "analytic-gaussian", "identity"};

struct VmatrixFlags {
  std::string kind = "multiplicative";
  std::string train, target;
  int label_column = -1;
  double c = 1.0;
  std::string out;
};

void run_vmatrix(const VmatrixFlags& f, std::ostream& out, std::ostream& err) {
  const auto train = load_csv(f.train, f.label_column);
  std::optional<TargetSample> target;
  if (!f.target.empty()) target = load_target_csv(f.target);
  const auto v = build_v(f.kind, train, target, f.c);
  emit(f.out, out, [&](std::ostream& os) { write_csv(os, v); });
  err << "V-matrix " << to_string(v.kind) << ": " << v.size() << "x" << v.size() << '\n';
}

// ------------------------------------------------------------------ train

struct TrainFlags {
  std::string method = "vsvm";
  std::string train, target;
  int label_column = -1;
  std::string v = "empirical";
  double c = 1.0;
  KernelFlags kernel;
  std::string scheme = "ratio";
  BoostParams boost;
  std::string out;
};

void run_train(const TrainFlags& f, std::ostream& out, std::ostream& err) {
  const auto train = load_csv(f.train, f.label_column);
  std::optional<TargetSample> target;
  if (!f.target.empty()) target = load_target_csv(f.target);
  const auto settings = f.kernel.settings();

  std::string json;
  if (f.method == "vsvm") {
    const auto model = fit(train, build_v(f.v, train, target, f.c), settings.kernel, settings.gamma);
    if (model.degenerate_intercept) err << "warning: degenerate intercept, fell back to mean(Y)\n";
    json = to_json(model);
  } else if (f.method == "unweighted") {
    json = to_json(fit(train, identity_v(train.size()), settings.kernel, settings.gamma));
  } else if (f.method == "weighted") {
    if (!target) throw InvalidArgument("weighted training needs --target");
    const auto scheme = parse_weight_scheme(f.scheme);
    const auto w = importance_weights(train.features, *target, settings.bandwidth, scheme, settings.tau);
    if (w.floored) err << "note: training density floored at " << w.floored << " point(s)\n";
    json = to_json(fit_weighted(train, w, settings.kernel, settings.gamma));
  } else {
    json = to_json(fit_boost(train, build_v(f.v, train, target, f.c), f.boost));
  }
  emit(f.out, out, [&](std::ostream& os) { os << json << '\n'; });
  err << "trained " << f.method << " on " << train.size() << " rows\n";
}

// ------------------------------------------------------------------ predict

struct PredictFlags {
  std::string model, input;
  std::optional<int> label_column;
  std::string out;
};

void run_predict(const PredictFlags& f, std::ostream& out, std::ostream& err) {
  const std::string text = read_file(f.model);
  Matrix x;
  if (f.label_column) {
    x = load_csv(f.input, *f.label_column).features;
  } else {
    x = load_target_csv(f.input).features;
  }
  Vector raw(x.rows());
  if (text.find("\"vboost\"") != std::string::npos) {
    const auto model = boost_from_json(text);
    raw = predict_boost(model, x);
  } else {
    const auto model = vsvm_from_json(text);
    raw = model.raw_batch(x);
  }
  emit(f.out, out, [&](std::ostream& os) {
    char buf[32];
    os << "probability,label\n";
    for (Eigen::Index i = 0; i < raw.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", std::clamp(raw[i], 0.0, 1.0));
      os << buf << ',' << (raw[i] >= 0.5 ? 1 : 0) << '\n';
    }
  });
  err << "predicted " << raw.size() << " rows\n";
}

// ------------------------------------------------------------------ experiment

struct ExperimentFlags {
  std::string kind = "synthetic";
  std::string dataset = "twonorm";
  int label_column = -1;
  std::size_t dataset_size = 7400;
  std::optional<std::uint64_t> data_seed;
  std::optional<std::size_t> trials;
  std::uint64_t seed = 1;
  std::vector<std::string> methods;
  std::vector<std::size_t> train_sizes{200};
  std::size_t n_target = 1000;
  bool separate_target = false;
  std::size_t v_target_size = 500;
  std::string direction = "random";
  std::optional<std::size_t> test_size;
  std::optional<std::size_t> feature_subset;
  std::vector<double> bandwidths{0.1, 0.5, 2.0, 10.0};
  std::string aggregation = "ratio_then_mean";
  KernelFlags kernel;
  std::string out_csv, out_json, out_dump;
};

LabeledDataset experiment_source(const ExperimentFlags& f) {
  const std::uint64_t seed = f.data_seed.value_or(derive_seed(f.seed, 0xda7a));
  if (f.dataset == "twonorm") return gen_twonorm(f.dataset_size, seed);
  if (f.dataset == "ringnorm") return gen_ringnorm(f.dataset_size, seed);
  return load_csv(f.dataset, f.label_column);
}

std::string dataset_label(const std::string& dataset) {
  if (dataset == "twonorm" || dataset == "ringnorm") return dataset;
  return fs::path(dataset).stem().string();
}

void run_experiment(const ExperimentFlags& f, std::size_t jobs, std::ostream& out, std::ostream& err) {
  const auto settings = f.kernel.settings();
  const auto aggregation =
      f.aggregation == "mean_then_ratio" ? Aggregation::mean_then_ratio : Aggregation::ratio_then_mean;
  std::vector<Method> methods;
  for (const auto& m : f.methods) methods.push_back(parse_method(m));

  auto report_out = [&](const ExperimentReport& report) {
    emit(f.out_csv, out, [&](std::ostream& os) { write_csv(os, report); });
    if (!f.out_json.empty()) emit(f.out_json, out, [&](std::ostream& os) { os << to_json(report) << '\n'; });
    for (const auto& s : report.methods)
      err << s.method << " (N=" << s.n_train << "): " << s.mean << " (" << s.std << ") over " << s.trials
          << " trials\n";
  };

  if (f.kind == "synthetic") {
    SyntheticConfig c;
    c.n_train_values = f.train_sizes;
    c.n_target = f.n_target;
    c.trials = f.trials.value_or(50);
    c.seed = f.seed;
    c.separate_v_target = f.separate_target;
    c.v_target_size = f.v_target_size;
    if (!methods.empty()) c.methods = methods;
    c.settings = settings;
    c.jobs = jobs;
    c.aggregation = aggregation;
    c.dump_grid = f.out_dump.empty() ? 0 : 201;
    const auto result = run_experiment_synthetic(c);
    report_out(result.report);
    if (!f.out_dump.empty()) emit(f.out_dump, out, [&](std::ostream& os) { write_csv(os, result.dump); });
    return;
  }

  const std::string name = dataset_label(f.dataset);
  if (f.kind == "bandwidth-sweep") {
    BandwidthSweepConfig c;
    c.dataset_name = name;
    c.source = experiment_source(f);
    c.bandwidths = f.bandwidths;
    c.trials = f.trials.value_or(20);
    c.seed = f.seed;
    c.direction = parse_direction_policy(f.direction);
    c.test_size = f.test_size;
    c.settings = settings;
    c.jobs = jobs;
    const auto rows = run_bandwidth_sweep(c);
    emit(f.out_csv, out, [&](std::ostream& os) { write_csv(os, rows); });
    for (const auto& r : rows) err << "h=" << r.bandwidth << ": " << r.mean << " (" << r.std << ")\n";
    return;
  }

  const Protocol protocol = f.kind == "exp3" ? Protocol::exp3 : f.kind == "exp4" ? Protocol::exp4 : Protocol::exp5;
  auto c = protocol_config(protocol, name, experiment_source(f));
  if (f.trials) c.trials = *f.trials;
  if (f.test_size) c.test_size = f.test_size;
  if (f.feature_subset) c.feature_subset = f.feature_subset;
  c.direction = parse_direction_policy(f.direction);
  c.seed = f.seed;
  if (!methods.empty()) c.methods = methods;
  c.settings = settings;
  c.jobs = jobs;
  c.aggregation = aggregation;
  report_out(run_experiment_bias(c));
}

// ------------------------------------------------------------------ verify

struct VerifyFlags {
  std::string kind = "mvue";
  std::size_t n = 5;
  std::size_t dim = 2;
  std::size_t m = 500;
  std::size_t repeats = 200;
  std::size_t trials = 1000;
  double delta = 0.1;
  double residual_scale = 1.0;
  bool shifted = false;
  std::uint64_t seed = 1;
  std::string out;
};

void run_verify(const VerifyFlags& f, std::ostream& out, std::ostream& err) {
  BoundCheckResult r;
  if (f.kind == "mvue") {
    r = verify_mvue(f.n, f.dim, f.m, f.repeats, f.seed, f.shifted ? TargetLaw::shifted : TargetLaw::matched);
  } else if (f.kind == "theorem-1d") {
    r = verify_concentration_1d(f.n, f.m, f.trials, f.seed, f.residual_scale);
  } else {
    r = verify_concentration_nd(f.n, f.dim, f.m, f.delta, f.trials, f.seed);
  }
  emit(f.out, out, [&](std::ostream& os) { os << to_json(r) << '\n'; });
  err << r.check << ": held " << r.fraction_held << " (threshold " << r.pass_threshold << ") -> "
      << (r.pass ? "pass" : "fail") << '\n';
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Covariate-shift learning with empirical V-matrices", "vshift"};
  app.set_help_flag("--help", "Print this help message and exit");
  app.require_subcommand(1);
  std::size_t jobs = 1;
  app.add_option("--jobs", jobs, "Worker threads for experiment trials")->check(CLI::PositiveNumber)->capture_default_str();

  GenFlags gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a dataset");
  gen_cmd->add_option("--kind", gen.kind, "sigmoid, twonorm or ringnorm")
      ->check(CLI::IsMember({"sigmoid", "twonorm", "ringnorm"}))
      ->capture_default_str();
  gen_cmd->add_option("--n-train", gen.n_train, "Training rows (sigmoid)")->check(CLI::PositiveNumber)->capture_default_str();
  gen_cmd->add_option("--n-target", gen.n_target, "Target rows (sigmoid)")->check(CLI::PositiveNumber)->capture_default_str();
  gen_cmd->add_option("--n", gen.n, "Rows (twonorm, ringnorm)")->check(CLI::PositiveNumber)->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Random seed")->capture_default_str();
  gen_cmd->add_option("--out-train", gen.out_train, "Training CSV (sigmoid)");
  gen_cmd->add_option("--out-target", gen.out_target, "Target CSV (sigmoid)");
  gen_cmd->add_option("--out", gen.out, "Labeled CSV (twonorm, ringnorm); stdout when omitted");

  BiasFlags bias;
  auto* bias_cmd = app.add_subcommand("bias", "Manufacture covariate shift from a labeled CSV");
  bias_cmd->add_option("--scheme", bias.scheme, "sugiyama, feature or norm")
      ->check(CLI::IsMember({"sugiyama", "feature", "norm"}))
      ->capture_default_str();
  bias_cmd->add_option("--input", bias.input, "Labeled source CSV")->required();
  bias_cmd->add_option("--label-column", bias.label_column, "Label column; negative counts from the end")
      ->capture_default_str();
  bias_cmd->add_option("--train-size", bias.train_size, "Training rows")->check(CLI::PositiveNumber)->capture_default_str();
  bias_cmd->add_option("--test-size", bias.test_size, "Target rows (required for sugiyama)")->check(CLI::PositiveNumber);
  bias_cmd->add_option("--feature", bias.feature, "Biased feature; random when omitted")->check(CLI::NonNegativeNumber);
  bias_cmd->add_option("--direction", bias.direction, "up, down or random")
      ->check(CLI::IsMember({"up", "down", "random"}))
      ->capture_default_str();
  bias_cmd->add_option("--seed", bias.seed, "Random seed")->capture_default_str();
  bias_cmd->add_flag("--no-normalize", bias.no_normalize, "Skip unit-cube normalization of the source");
  bias_cmd->add_option("--out-train", bias.out_train, "Training CSV")->required();
  bias_cmd->add_option("--out-target", bias.out_target, "Target CSV (unlabeled)")->required();
  bias_cmd->add_option("--out-target-labels", bias.out_target_labels, "Held-out target labels CSV");

  VmatrixFlags vm;
  auto* vm_cmd = app.add_subcommand("vmatrix", "Compute a V-matrix and write it as CSV");
  vm_cmd->add_option("--kind", vm.kind, "multiplicative, additive, analytic-uniform, analytic-gaussian, identity")
      ->check(CLI::IsMember(kVKinds))
      ->capture_default_str();
  vm_cmd->add_option("--train", vm.train, "Labeled training CSV")->required();
  vm_cmd->add_option("--label-column", vm.label_column, "Label column; negative counts from the end")->capture_default_str();
  vm_cmd->add_option("--target", vm.target, "Unlabeled target CSV");
  vm_cmd->add_option("--c", vm.c, "Support half-width for analytic-uniform")->check(CLI::PositiveNumber)->capture_default_str();
  vm_cmd->add_option("--out", vm.out, "Output CSV; stdout when omitted");

  TrainFlags tr;
  auto* tr_cmd = app.add_subcommand("train", "Fit a model and write it as JSON");
  tr_cmd->add_option("method", tr.method, "vsvm, vboost, weighted or unweighted")
      ->required()
      ->check(CLI::IsMember({"vsvm", "vboost", "weighted", "unweighted"}));
  tr_cmd->add_option("--train", tr.train, "Labeled training CSV")->required();
  tr_cmd->add_option("--label-column", tr.label_column, "Label column; negative counts from the end")->capture_default_str();
  tr_cmd->add_option("--target", tr.target, "Unlabeled target CSV");
  tr_cmd->add_option("--v", tr.v, "V-matrix kind for vsvm and vboost")->check(CLI::IsMember(kVKinds))->capture_default_str();
  tr_cmd->add_option("--c", tr.c, "Support half-width for analytic-uniform")->check(CLI::PositiveNumber)->capture_default_str();
  tr.kernel.add(tr_cmd);
  tr_cmd->add_option("--scheme", tr.scheme, "Weighting scheme for weighted: ratio or exponentiated")
      ->check(CLI::IsMember({"ratio", "exponentiated"}))
      ->capture_default_str();
  tr_cmd->add_option("--trees", tr.boost.num_trees, "Boosting rounds")->check(CLI::PositiveNumber)->capture_default_str();
  tr_cmd->add_option("--depth", tr.boost.max_depth, "Maximum tree depth")->check(CLI::PositiveNumber)->capture_default_str();
  tr_cmd->add_option("--lambda", tr.boost.lambda, "Leaf-weight penalty")->check(CLI::NonNegativeNumber)->capture_default_str();
  tr_cmd->add_option("--gamma-tree", tr.boost.gamma_tree, "Per-leaf penalty")->check(CLI::NonNegativeNumber)->capture_default_str();
  tr_cmd->add_option("--learning-rate", tr.boost.learning_rate, "Shrinkage in (0, 1]")
      ->check(CLI::Range(0.0, 1.0) & CLI::PositiveNumber)
      ->capture_default_str();
  tr_cmd->add_option("--min-leaf", tr.boost.min_leaf_size, "Minimum rows per leaf")->check(CLI::PositiveNumber)->capture_default_str();
  tr_cmd->add_option("--out", tr.out, "Model JSON; stdout when omitted");

  PredictFlags pr;
  auto* pr_cmd = app.add_subcommand("predict", "Predict probabilities and labels with a saved model");
  pr_cmd->add_option("--model", pr.model, "Model JSON")->required();
  pr_cmd->add_option("--input", pr.input, "Feature CSV")->required();
  pr_cmd->add_option("--label-column", pr.label_column, "Drop this label column from the input");
  pr_cmd->add_option("--out", pr.out, "Output CSV; stdout when omitted");

  ExperimentFlags ex;
  auto* ex_cmd = app.add_subcommand("experiment", "Run a seeded experiment and write its report");
  ex_cmd->add_option("kind", ex.kind, "synthetic, exp3, exp4, exp5 or bandwidth-sweep")
      ->required()
      ->check(CLI::IsMember({"synthetic", "exp3", "exp4", "exp5", "bandwidth-sweep"}));
  ex_cmd->add_option("--dataset", ex.dataset, "twonorm, ringnorm or a labeled CSV path")->capture_default_str();
  ex_cmd->add_option("--label-column", ex.label_column, "Label column of a CSV dataset")->capture_default_str();
  ex_cmd->add_option("--dataset-size", ex.dataset_size, "Rows generated for twonorm/ringnorm")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  ex_cmd->add_option("--data-seed", ex.data_seed, "Seed of the generated dataset; derived from --seed when omitted");
  ex_cmd->add_option("--trials", ex.trials, "Trials (default 50 synthetic, 100 exp3/exp4, 50 exp5, 20 sweep)")
      ->check(CLI::PositiveNumber);
  ex_cmd->add_option("--seed", ex.seed, "Master seed")->capture_default_str();
  ex_cmd->add_option("--methods", ex.methods, "Methods to compare")
      ->check(CLI::IsMember({"empirical_v", "additive_v", "analytic_uniform_v", "unweighted", "ratio", "exponentiated"}))
      ->delimiter(',');
  ex_cmd->add_option("--train-sizes", ex.train_sizes, "Training sizes (synthetic)")
      ->check(CLI::PositiveNumber)
      ->delimiter(',')
      ->capture_default_str();
  ex_cmd->add_option("--n-target", ex.n_target, "Target rows (synthetic)")->check(CLI::PositiveNumber)->capture_default_str();
  ex_cmd->add_flag("--separate-target", ex.separate_target, "Build V on an independent target draw (synthetic)");
  ex_cmd->add_option("--v-target-size", ex.v_target_size, "Size of that independent draw")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  ex_cmd->add_option("--direction", ex.direction, "Bias direction policy: random, balanced, up, down")
      ->check(CLI::IsMember({"random", "balanced", "up", "down"}))
      ->capture_default_str();
  ex_cmd->add_option("--test-size", ex.test_size, "Target rows per trial")->check(CLI::PositiveNumber);
  ex_cmd->add_option("--feature-subset", ex.feature_subset, "Random features kept per trial")->check(CLI::PositiveNumber);
  ex_cmd->add_option("--bandwidths", ex.bandwidths, "KDE bandwidths (bandwidth-sweep)")
      ->check(CLI::PositiveNumber)
      ->delimiter(',')
      ->capture_default_str();
  ex_cmd->add_option("--aggregation", ex.aggregation, "ratio_then_mean or mean_then_ratio")
      ->check(CLI::IsMember({"ratio_then_mean", "mean_then_ratio"}))
      ->capture_default_str();
  ex.kernel.add(ex_cmd);
  ex_cmd->add_option("--out-csv", ex.out_csv, "Summary CSV; stdout when omitted");
  ex_cmd->add_option("--out-json", ex.out_json, "Full per-trial JSON");
  ex_cmd->add_option("--out-dump", ex.out_dump, "Prediction grid CSV (synthetic)");

  VerifyFlags vf;
  auto* vf_cmd = app.add_subcommand("verify", "Monte-Carlo checks of the estimator guarantees");
  vf_cmd->add_option("kind", vf.kind, "mvue, theorem-1d or theorem-nd")
      ->required()
      ->check(CLI::IsMember({"mvue", "theorem-1d", "theorem-nd"}));
  vf_cmd->add_option("--n", vf.n, "Training points")->check(CLI::PositiveNumber)->capture_default_str();
  vf_cmd->add_option("--dim", vf.dim, "Dimension (mvue, theorem-nd)")->check(CLI::PositiveNumber)->capture_default_str();
  vf_cmd->add_option("--m", vf.m, "Target points per draw")->check(CLI::PositiveNumber)->capture_default_str();
  vf_cmd->add_option("--repeats", vf.repeats, "Target draws (mvue)")->check(CLI::PositiveNumber)->capture_default_str();
  vf_cmd->add_option("--trials", vf.trials, "Trials (theorems)")->check(CLI::PositiveNumber)->capture_default_str();
  vf_cmd->add_option("--delta", vf.delta, "Deviation level (theorem-nd)")->check(CLI::PositiveNumber)->capture_default_str();
  vf_cmd->add_option("--residual-scale", vf.residual_scale, "Residual magnitude (theorem-1d)")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  vf_cmd->add_flag("--shifted", vf.shifted, "Draw mvue targets from U[0,c]^n to inject bias");
  vf_cmd->add_option("--seed", vf.seed, "Random seed")->capture_default_str();
  vf_cmd->add_option("--out", vf.out, "Output JSON; stdout when omitted");

  std::vector<std::string> argv_storage;
  argv_storage.reserve(args.size() + 1);
  argv_storage.emplace_back("vshift");
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_storage) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (gen_cmd->parsed()) run_gen(gen, out, err);
    else if (bias_cmd->parsed()) run_bias(bias, out, err);
    else if (vm_cmd->parsed()) run_vmatrix(vm, out, err);
    else if (tr_cmd->parsed()) run_train(tr, out, err);
    else if (pr_cmd->parsed()) run_predict(pr, out, err);
    else if (ex_cmd->parsed()) run_experiment(ex, jobs, out, err);
    else if (vf_cmd->parsed()) run_verify(vf, out, err);
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const SolverError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kNumericalFailure;
  } catch (const std::exception& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  }
  return kOk;
}

}  // namespace vshift::cli

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "vshift/baselines.hpp"
#include "vshift/dataset.hpp"
#include "vshift/vmatrix.hpp"
#include "vshift/vsvm.hpp"

namespace vshift {

// ---------------------------------------------------------------- metrics

/// Root-mean-square gap between predicted and true conditional probabilities
/// over the evaluation points (L2 error under the target measure).
double metric_l2_probability_error(const std::function<double(const Vector&)>& predict,
                                   const std::function<double(const Vector&)>& true_conditional,
                                   const TargetSample& eval_points);

/// method / unweighted; nullopt when the unweighted error is zero.
std::optional<double> metric_normalized(double method_error, double unweighted_error);

double classification_error(const std::vector<int>& predicted, const std::vector<int>& truth);

// ---------------------------------------------------------------- methods

/// Learners compared by the experiments. Every method is a V-SVM; they
/// differ only in the V-matrix handed to the closed-form fit.
enum class Method {
  empirical_v,         ///< multiplicative empirical V from the target sample
  additive_v,          ///< additive empirical V from the target sample
  analytic_uniform_v,  ///< true V of U[-1,1]^n
  unweighted,          ///< V = I
  ratio,               ///< diag(q/p) with Gaussian KDEs
  exponentiated,       ///< diag((q/p)^tau)
};

std::string to_string(Method m);
Method parse_method(const std::string& s);

struct MethodSettings {
  KernelConfig kernel{KernelFamily::sqrt_gaussian, 1.0};
  double gamma = 0.1;
  double bandwidth = 2.0;
  double tau = 0.5;
};

/// Fits `method`; `v_target` supplies the unlabeled rows used for the
/// empirical V-matrices and the target KDE.
VsvmModel fit_method(Method method, const LabeledDataset& train, const TargetSample& v_target,
                     const MethodSettings& settings);

// ---------------------------------------------------------------- reports

enum class Aggregation {
  ratio_then_mean,  ///< mean over trials of per-trial ratios
  mean_then_ratio,  ///< ratio of per-method mean errors
};

struct TrialResult {
  std::string method;
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  std::size_t n_train = 0;
  /// Error used for normalization: L2 probability error for synthetic
  /// experiments, classification error rate for biased real-data runs.
  double error = 0.0;
  std::optional<double> classification_error;
  std::optional<double> l2_error;
  /// nullopt when the unweighted error of the trial was zero.
  std::optional<double> normalized;
  std::optional<std::size_t> feature;
  std::optional<BiasDirection> direction;
};

struct MethodSummary {
  std::string method;
  std::size_t n_train = 0;
  double mean = 0.0;  ///< normalized error
  double std = 0.0;
  std::size_t trials = 0;
  std::size_t excluded = 0;
  double raw_mean = 0.0;
  double raw_std = 0.0;
};

struct ExperimentReport {
  std::string name;
  std::vector<std::pair<std::string, std::string>> config;
  std::vector<MethodSummary> methods;
  std::vector<TrialResult> trials;
  std::size_t trials_requested = 0;
  std::size_t trials_skipped = 0;

  const MethodSummary* find(const std::string& method, std::size_t n_train = 0) const;
};

/// CSV with one row per (method, training size).
void write_csv(std::ostream& os, const ExperimentReport& report);
std::string to_json(const ExperimentReport& report);

// ---------------------------------------------------------------- experiments

struct SyntheticConfig {
  std::vector<std::size_t> n_train_values{200};
  std::size_t n_target = 1000;
  std::size_t trials = 50;
  std::uint64_t seed = 1;
  /// Build the empirical V on a second, independent target draw.
  bool separate_v_target = false;
  std::size_t v_target_size = 500;
  std::vector<Method> methods{Method::empirical_v, Method::analytic_uniform_v, Method::unweighted, Method::ratio,
                              Method::exponentiated};
  MethodSettings settings;
  std::size_t jobs = 1;
  Aggregation aggregation = Aggregation::ratio_then_mean;
  /// Grid resolution of the single-run prediction dump; 0 disables it.
  std::size_t dump_grid = 201;
};

struct PredictionDumpRow {
  double x;
  std::string method;
  double probability;
};

struct SyntheticResult {
  ExperimentReport report;
  std::vector<PredictionDumpRow> dump;
};

SyntheticResult run_experiment_synthetic(const SyntheticConfig& config);

/// CSV of (x, method, probability).
void write_csv(std::ostream& os, const std::vector<PredictionDumpRow>& dump);

enum class DirectionPolicy { random, balanced, up, down };
std::string to_string(DirectionPolicy p);
DirectionPolicy parse_direction_policy(const std::string& s);

struct BiasExperimentConfig {
  std::string dataset_name;
  LabeledDataset source;
  BiasScheme scheme = BiasScheme::sugiyama;
  std::size_t train_size = 100;
  /// Rejection scheme: required. Median schemes: every remaining row when unset.
  std::optional<std::size_t> test_size;
  /// Keep this many randomly chosen features per trial.
  std::optional<std::size_t> feature_subset;
  DirectionPolicy direction = DirectionPolicy::random;
  std::size_t trials = 100;
  std::uint64_t seed = 1;
  std::vector<Method> methods{Method::additive_v, Method::unweighted, Method::ratio, Method::exponentiated};
  MethodSettings settings;
  std::size_t jobs = 1;
  Aggregation aggregation = Aggregation::ratio_then_mean;
};

ExperimentReport run_experiment_bias(const BiasExperimentConfig& config);

/// Source-data presets for the three real-data protocols.
enum class Protocol { exp3, exp4, exp5 };
BiasExperimentConfig protocol_config(Protocol p, std::string dataset_name, LabeledDataset source);

struct BandwidthRow {
  double bandwidth = 0.0;
  double mean = 0.0;
  double std = 0.0;
  std::size_t trials = 0;
  std::size_t excluded = 0;
};

struct BandwidthSweepConfig {
  std::string dataset_name;
  LabeledDataset source;
  std::vector<double> bandwidths{0.1, 0.5, 2.0, 10.0};
  std::size_t trials = 20;
  std::uint64_t seed = 1;
  BiasScheme scheme = BiasScheme::single_feature;
  DirectionPolicy direction = DirectionPolicy::random;
  std::size_t train_size = 100;
  std::optional<std::size_t> test_size;
  MethodSettings settings;
  std::size_t jobs = 1;
};

/// Ratio-weighted normalized error at each bandwidth; all bandwidths share
/// the same biased split within a trial.
std::vector<BandwidthRow> run_bandwidth_sweep(const BandwidthSweepConfig& config);
void write_csv(std::ostream& os, const std::vector<BandwidthRow>& rows);

// ---------------------------------------------------------------- verifiers

struct BoundCheckResult {
  std::string check;
  std::size_t trials = 0;
  double fraction_held = 0.0;
  double theoretical_min = 0.0;
  /// Fraction the run had to reach to pass.
  double pass_threshold = 0.0;
  bool pass = false;
  bool vacuous = false;
  /// MVUE only: largest entrywise deviation and the tolerance band.
  std::optional<double> max_deviation;
  std::optional<double> band;
};

std::string to_json(const BoundCheckResult& r);

enum class TargetLaw { matched, shifted };

/// Mean of empirical V over R target draws from U[-c,c]^n against the
/// analytic uniform V. `shifted` draws targets from U[0,c]^n instead, which
/// should fail.
BoundCheckResult verify_mvue(std::size_t n_train, std::size_t dim, std::size_t n_target, std::size_t repeats,
                             std::uint64_t seed, TargetLaw law = TargetLaw::matched, double c = 1.0);

/// 1-d coverage of |rho2(V) - rho2(Vhat)| <= sqrt(log M / M) sum|l_i l_j| / N^2
/// with a standard-normal target. Residuals are U[-scale, scale].
BoundCheckResult verify_concentration_1d(std::size_t n_train, std::size_t n_target, std::size_t trials,
                                         std::uint64_t seed, double residual_scale = 1.0);

/// n-d coverage of |rho2(V) - rho2(Vhat)| <= delta max|l_i l_j| with a
/// U[-1,1]^n target, against the floor 1 - N(N+1) exp(-2 M delta^2).
BoundCheckResult verify_concentration_nd(std::size_t n_train, std::size_t dim, std::size_t n_target, double delta,
                                         std::size_t trials, std::uint64_t seed);

/// Runs body(i) for i in [0, count) on up to `jobs` threads. The first
/// exception by index is rethrown after all workers finish.
void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& body);

}  // namespace vshift

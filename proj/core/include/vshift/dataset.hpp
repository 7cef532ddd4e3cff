#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vshift/random.hpp"

namespace vshift {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Labeled training sample: N rows of n features and a 0/1 label per row.
struct LabeledDataset {
  Matrix features;
  std::vector<int> labels;

  std::size_t size() const noexcept { return static_cast<std::size_t>(features.rows()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(features.cols()); }
  Vector label_vector() const;

  /// Throws SchemaError when the shape or label invariants do not hold.
  void validate() const;
};

/// Unlabeled sample from the target distribution.
struct TargetSample {
  Matrix features;

  std::size_t size() const noexcept { return static_cast<std::size_t>(features.rows()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(features.cols()); }
};

/// Per-feature affine map onto [0, 1].
struct NormalizationParams {
  std::vector<double> minimum;
  std::vector<double> maximum;

  /// Min/max over the rows of every matrix given.
  static NormalizationParams fit(std::span<const Matrix* const> blocks);
  Matrix apply(const Matrix& m) const;
};

LabeledDataset load_csv(const std::filesystem::path& path, int label_column);
TargetSample load_target_csv(const std::filesystem::path& path);
void write_csv(std::ostream& os, const LabeledDataset& data);
void write_csv(std::ostream& os, const TargetSample& data);

struct NormalizedPair {
  LabeledDataset train;
  TargetSample target;
  NormalizationParams params;
};

/// Statistics are taken over the union of train and target rows.
NormalizedPair normalize_unit_cube(const LabeledDataset& train, const TargetSample& target);

/// Normalizes a single labeled dataset with its own min/max.
LabeledDataset normalize_unit_cube(const LabeledDataset& data);

/// p(y=1|x) of the 1-d sigmoid problem.
double sigmoid_conditional(double x) noexcept;

struct SyntheticData {
  LabeledDataset train;
  TargetSample target;
  std::function<double(double)> true_conditional;
};

/// x ~ U[-1,1], y ~ Bernoulli(1/(1+e^{5x})), targets from 0.3 U[0,1] + 0.7 U[-1,0].
SyntheticData gen_sigmoid_synthetic(std::size_t n_train, std::size_t n_target, std::uint64_t seed);

/// Draws M points from the sigmoid problem's target mixture.
TargetSample gen_sigmoid_target(std::size_t n_target, Rng& rng);

inline constexpr std::size_t kBreimanDim = 20;

LabeledDataset gen_twonorm(std::size_t n, std::uint64_t seed);
LabeledDataset gen_ringnorm(std::size_t n, std::uint64_t seed);

LabeledDataset select_features(const LabeledDataset& data, std::span<const std::size_t> columns);
LabeledDataset select_rows(const LabeledDataset& data, std::span<const std::size_t> rows);

enum class BiasScheme { sugiyama, single_feature, norm };
enum class BiasDirection { up, down };

std::string to_string(BiasScheme s);
std::string to_string(BiasDirection d);
BiasScheme parse_bias_scheme(const std::string& s);
BiasDirection parse_bias_direction(const std::string& s);

struct BiasSpec {
  BiasScheme scheme = BiasScheme::sugiyama;
  /// Chosen at random per call when unset (sugiyama, single_feature).
  std::optional<std::size_t> feature;
  /// Chosen at random per call when unset (single_feature, norm).
  std::optional<BiasDirection> direction;
  std::size_t train_size = 100;
  /// Required for sugiyama; defaults to every remaining row otherwise.
  std::optional<std::size_t> test_size;
  std::uint64_t seed = 0;
};

/// Result of a biasing scheme. Target labels are kept apart from the
/// unlabeled target sample so that harnesses can score predictions.
struct BiasedSplit {
  LabeledDataset train;
  TargetSample target;
  std::vector<int> target_labels;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> target_rows;
  std::optional<std::size_t> feature;
  std::optional<BiasDirection> direction;
};

/// Rejection biasing: accept into target with probability min(1, 4 x_c^2).
BiasedSplit bias_sugiyama(const LabeledDataset& source, const BiasSpec& spec);
/// Rows above the feature median are 4x as likely (up) or 4x less likely (down)
/// to be drawn into the training set.
BiasedSplit bias_single_feature(const LabeledDataset& source, const BiasSpec& spec);
/// As bias_single_feature with the row's Euclidean norm as the statistic.
BiasedSplit bias_norm(const LabeledDataset& source, const BiasSpec& spec);
BiasedSplit apply_bias(const LabeledDataset& source, const BiasSpec& spec);

/// Acceptance probability of the rejection scheme for feature value v.
double sugiyama_acceptance(double v) noexcept;

}  // namespace vshift

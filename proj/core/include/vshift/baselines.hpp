#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "vshift/dataset.hpp"
#include "vshift/vsvm.hpp"

namespace vshift {

/// Isotropic Gaussian KDE with one bandwidth shared across dimensions.
struct KdeModel {
  Matrix sample;
  double bandwidth = 2.0;

  KdeModel(Matrix sample, double bandwidth);

  double density(const Eigen::Ref<const Vector>& x) const;
  /// Log density via log-sum-exp; finite wherever the density underflows.
  double log_density(const Eigen::Ref<const Vector>& x) const;
};

inline double kde_density(const KdeModel& model, const Eigen::Ref<const Vector>& x) { return model.density(x); }

enum class WeightScheme { ratio, exponentiated };

std::string to_string(WeightScheme s);
WeightScheme parse_weight_scheme(const std::string& s);

inline constexpr double kDensityFloor = 1e-300;

struct ImportanceWeights {
  std::vector<double> values;
  WeightScheme scheme = WeightScheme::ratio;
  double tau = 1.0;
  /// Number of training points whose training-density estimate hit the floor.
  std::size_t floored = 0;
};

/// w(x_i) = q(x_i) / p(x_i), or its tau-th power, with p and q Gaussian KDEs
/// of the training and target samples evaluated at the training points.
ImportanceWeights importance_weights(const Matrix& train_features, const TargetSample& target, double bandwidth,
                                     WeightScheme scheme, double tau = 1.0);

/// V-SVM with V = diag(weights).
VsvmModel fit_weighted(const LabeledDataset& train, const ImportanceWeights& weights, const KernelConfig& kernel,
                       double gamma);

/// One weight per line, aligned to training rows.
void write_csv(std::ostream& os, const ImportanceWeights& w);

}  // namespace vshift

#pragma once

#include <string>

#include "vshift/dataset.hpp"
#include "vshift/vmatrix.hpp"

namespace vshift {

enum class KernelFamily { gaussian, sqrt_gaussian };

std::string to_string(KernelFamily f);
KernelFamily parse_kernel_family(const std::string& s);

struct KernelConfig {
  KernelFamily family = KernelFamily::sqrt_gaussian;
  double width = 1.0;
};

/// gaussian: exp(-|x-x'|^2 / (2h^2)); sqrt_gaussian: exp(-|x-x'| / h).
double kernel_eval(const KernelConfig& config, const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& xp);

/// Gram matrix K_ij = k(a_i, b_j) over rows of a and b.
Matrix kernel_matrix(const KernelConfig& config, const Matrix& a, const Matrix& b);

/// f(x) = A^T k(x) + c with the training rows retained for evaluation.
struct VsvmModel {
  Vector coefficients;
  double intercept = 0.0;
  KernelConfig kernel;
  Matrix train_features;
  double gamma = 0.1;
  /// Set when the intercept denominator vanished and c fell back to mean(Y).
  bool degenerate_intercept = false;

  double raw(const Eigen::Ref<const Vector>& x) const;
  Vector raw_batch(const Matrix& x) const;
};

/// Closed-form fit: A_b = (VK + gI)^-1 V Y, A_c = (VK + gI)^-1 V 1,
/// c = 1^T V (K A_b - Y) / 1^T V (K A_c - 1), A = A_b - c A_c.
///
/// This is the exact minimiser of (1/N^2) [ r^T V r + g A^T K A ] with
/// r = K A + c 1 - Y, see vsvm_objective.
VsvmModel fit(const LabeledDataset& train, const VMatrix& v, const KernelConfig& kernel, double gamma);

/// Reported probability: raw value clamped to [0, 1].
double predict_proba(const VsvmModel& model, const Vector& x);
Vector predict_proba(const VsvmModel& model, const Matrix& x);

/// 1 iff the unclamped value is >= 0.5.
int predict_label(const VsvmModel& model, const Vector& x);
std::vector<int> predict_label(const VsvmModel& model, const Matrix& x);

/// Training objective (1/N^2) [ r^T V r + gamma A^T K A ], r = K A + c 1 - Y.
double vsvm_objective(const Matrix& gram, const VMatrix& v, const Vector& y, const Vector& coefficients,
                      double intercept, double gamma);

std::string to_json(const VsvmModel& model);
VsvmModel vsvm_from_json(const std::string& text);

}  // namespace vshift

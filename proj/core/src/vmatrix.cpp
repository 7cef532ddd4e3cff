#include "vshift/vmatrix.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <vector>

#include "vshift/error.hpp"

namespace vshift {

namespace {

void check_dims(const Matrix& x, const TargetSample& target) {
  if (x.rows() == 0) throw DimensionError("training features are empty");
  if (target.size() == 0) throw DimensionError("target sample is empty");
  if (x.cols() != target.features.cols())
    throw DimensionError("training has " + std::to_string(x.cols()) + " features, target has " +
                         std::to_string(target.features.cols()));
}

}  // namespace

std::string to_string(VKind k) {
  switch (k) {
    case VKind::empirical_multiplicative: return "empirical_multiplicative";
    case VKind::empirical_additive: return "empirical_additive";
    case VKind::analytic_uniform: return "analytic_uniform";
    case VKind::analytic_gaussian: return "analytic_gaussian";
    case VKind::identity: return "identity";
    case VKind::diagonal: return "diagonal";
  }
  return "?";
}

VMatrix empirical_v(const Matrix& train_features, const TargetSample& target) {
  check_dims(train_features, target);
  const Eigen::Index n_train = train_features.rows();
  const Eigen::Index n_target = target.features.rows();
  const Eigen::Index dim = train_features.cols();
  const std::size_t words = (static_cast<std::size_t>(n_target) + 63) / 64;

  std::vector<std::uint64_t> dominated(static_cast<std::size_t>(n_train) * words, 0);
  for (Eigen::Index i = 0; i < n_train; ++i) {
    std::uint64_t* bits = dominated.data() + static_cast<std::size_t>(i) * words;
    for (Eigen::Index q = 0; q < n_target; ++q) {
      bool all = true;
      for (Eigen::Index k = 0; k < dim && all; ++k) all = target.features(q, k) >= train_features(i, k);
      if (all) bits[static_cast<std::size_t>(q) / 64] |= std::uint64_t{1} << (static_cast<std::size_t>(q) % 64);
    }
  }

  VMatrix v{Matrix(n_train, n_train), VKind::empirical_multiplicative};
  const double m = static_cast<double>(n_target);
  for (Eigen::Index i = 0; i < n_train; ++i) {
    const std::uint64_t* a = dominated.data() + static_cast<std::size_t>(i) * words;
    for (Eigen::Index j = i; j < n_train; ++j) {
      const std::uint64_t* b = dominated.data() + static_cast<std::size_t>(j) * words;
      std::uint64_t count = 0;
      for (std::size_t w = 0; w < words; ++w) count += static_cast<std::uint64_t>(std::popcount(a[w] & b[w]));
      v.entries(i, j) = v.entries(j, i) = static_cast<double>(count) / m;
    }
  }
  return v;
}

VMatrix empirical_v_additive(const Matrix& train_features, const TargetSample& target) {
  check_dims(train_features, target);
  const Eigen::Index n_train = train_features.rows();
  const Eigen::Index n_target = target.features.rows();
  const Eigen::Index dim = train_features.cols();

  std::vector<std::uint64_t> counts(static_cast<std::size_t>(n_train * n_train), 0);
  std::vector<double> column(static_cast<std::size_t>(n_target));
  for (Eigen::Index k = 0; k < dim; ++k) {
    for (Eigen::Index q = 0; q < n_target; ++q) column[static_cast<std::size_t>(q)] = target.features(q, k);
    std::sort(column.begin(), column.end());
    for (Eigen::Index i = 0; i < n_train; ++i)
      for (Eigen::Index j = i; j < n_train; ++j) {
        const double m = std::max(train_features(i, k), train_features(j, k));
        const auto below = std::lower_bound(column.begin(), column.end(), m) - column.begin();
        counts[static_cast<std::size_t>(i * n_train + j)] += static_cast<std::uint64_t>(n_target - below);
      }
  }

  VMatrix v{Matrix(n_train, n_train), VKind::empirical_additive};
  const double denom = static_cast<double>(dim) * static_cast<double>(n_target);
  for (Eigen::Index i = 0; i < n_train; ++i)
    for (Eigen::Index j = i; j < n_train; ++j)
      v.entries(i, j) = v.entries(j, i) = static_cast<double>(counts[static_cast<std::size_t>(i * n_train + j)]) / denom;
  return v;
}

VMatrix analytic_v_uniform(const Matrix& train_features, std::span<const double> c) {
  const Eigen::Index n_train = train_features.rows();
  const Eigen::Index dim = train_features.cols();
  if (static_cast<std::size_t>(dim) != c.size())
    throw DimensionError("support half-widths must match the feature count");
  for (double ck : c)
    if (!(ck > 0.0)) throw DomainError("support half-widths must be positive");
  for (Eigen::Index i = 0; i < n_train; ++i)
    for (Eigen::Index k = 0; k < dim; ++k)
      if (std::abs(train_features(i, k)) > c[static_cast<std::size_t>(k)])
        throw DomainError("training coordinate outside [-c, c] at row " + std::to_string(i));

  VMatrix v{Matrix(n_train, n_train), VKind::analytic_uniform};
  for (Eigen::Index i = 0; i < n_train; ++i)
    for (Eigen::Index j = i; j < n_train; ++j) {
      double prod = 1.0;
      for (Eigen::Index k = 0; k < dim; ++k) {
        const double ck = c[static_cast<std::size_t>(k)];
        prod *= (ck - std::max(train_features(i, k), train_features(j, k))) / (2.0 * ck);
      }
      v.entries(i, j) = v.entries(j, i) = prod;
    }
  return v;
}

VMatrix analytic_v_gaussian(const Matrix& train_features) {
  if (train_features.cols() != 1)
    throw DimensionError("the Gaussian V-matrix is defined for one feature, got " +
                         std::to_string(train_features.cols()));
  const Eigen::Index n_train = train_features.rows();
  VMatrix v{Matrix(n_train, n_train), VKind::analytic_gaussian};
  for (Eigen::Index i = 0; i < n_train; ++i)
    for (Eigen::Index j = i; j < n_train; ++j) {
      // erfc keeps precision in the upper tail where 1 - erf cancels.
      const double m = std::max(train_features(i, 0), train_features(j, 0));
      v.entries(i, j) = v.entries(j, i) = 0.5 * std::erfc(m / std::sqrt(2.0));
    }
  return v;
}

VMatrix identity_v(std::size_t n) {
  if (n == 0) throw InvalidArgument("identity V needs N >= 1");
  const auto size = static_cast<Eigen::Index>(n);
  return {Matrix::Identity(size, size), VKind::identity};
}

VMatrix diagonal_v(std::span<const double> weights) {
  if (weights.empty()) throw InvalidArgument("diagonal V needs at least one weight");
  const auto size = static_cast<Eigen::Index>(weights.size());
  VMatrix v{Matrix::Zero(size, size), VKind::diagonal};
  for (Eigen::Index i = 0; i < size; ++i) {
    const double w = weights[static_cast<std::size_t>(i)];
    if (!(w >= 0.0) || !std::isfinite(w)) throw DomainError("weight " + std::to_string(i) + " is negative or not finite");
    v.entries(i, i) = w;
  }
  return v;
}

void write_csv(std::ostream& os, const VMatrix& v) {
  char buf[32];
  for (Eigen::Index i = 0; i < v.entries.rows(); ++i) {
    for (Eigen::Index j = 0; j < v.entries.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", v.entries(i, j));
      os << (j ? "," : "") << buf;
    }
    os << '\n';
  }
}

double rho_squared(const VMatrix& v, const Vector& residuals) {
  if (residuals.size() != v.entries.rows()) throw DimensionError("residual count does not match V");
  const double n = static_cast<double>(residuals.size());
  return residuals.dot(v.entries * residuals) / (n * n);
}

}  // namespace vshift

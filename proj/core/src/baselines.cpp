#include "vshift/baselines.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "vshift/error.hpp"
#include "vshift/vmatrix.hpp"

namespace vshift {

KdeModel::KdeModel(Matrix s, double h) : sample(std::move(s)), bandwidth(h) {
  if (sample.rows() == 0) throw InvalidArgument("KDE sample is empty");
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) throw InvalidArgument("KDE bandwidth must be positive");
}

double KdeModel::log_density(const Eigen::Ref<const Vector>& x) const {
  if (x.size() != sample.cols()) throw DimensionError("KDE query has the wrong dimension");
  const Eigen::Index m = sample.rows();
  const double inv = 1.0 / (2.0 * bandwidth * bandwidth);
  Vector expo(m);
  for (Eigen::Index p = 0; p < m; ++p) expo[p] = -(sample.row(p).transpose() - x).squaredNorm() * inv;
  const double top = expo.maxCoeff();
  const double sum = (expo.array() - top).exp().sum();
  const double n = static_cast<double>(sample.cols());
  const double log_norm = std::log(static_cast<double>(m)) + 0.5 * n * std::log(2.0 * std::numbers::pi) +
                          n * std::log(bandwidth);
  return top + std::log(sum) - log_norm;
}

double KdeModel::density(const Eigen::Ref<const Vector>& x) const { return std::exp(log_density(x)); }

std::string to_string(WeightScheme s) { return s == WeightScheme::ratio ? "ratio" : "exponentiated"; }

WeightScheme parse_weight_scheme(const std::string& s) {
  if (s == "ratio") return WeightScheme::ratio;
  if (s == "exponentiated") return WeightScheme::exponentiated;
  throw InvalidArgument("unknown weighting scheme '" + s + "'");
}

ImportanceWeights importance_weights(const Matrix& train_features, const TargetSample& target, double bandwidth,
                                     WeightScheme scheme, double tau) {
  if (target.size() == 0) throw DataError("target sample is empty");
  if (train_features.cols() != target.features.cols()) throw DimensionError("train and target differ in dimension");
  if (scheme == WeightScheme::exponentiated && !(tau >= 0.0 && tau <= 1.0))
    throw InvalidArgument("tau must lie in [0, 1]");
  const KdeModel p(train_features, bandwidth);
  const KdeModel q(target.features, bandwidth);
  const double power = scheme == WeightScheme::ratio ? 1.0 : tau;
  const double log_floor = std::log(kDensityFloor);

  ImportanceWeights w;
  w.scheme = scheme;
  w.tau = power;
  w.values.resize(static_cast<std::size_t>(train_features.rows()));
  for (Eigen::Index i = 0; i < train_features.rows(); ++i) {
    const Vector xi = train_features.row(i).transpose();
    double log_p = p.log_density(xi);
    if (log_p < log_floor) {
      log_p = log_floor;
      ++w.floored;
    }
    const double value = std::exp(power * (q.log_density(xi) - log_p));
    w.values[static_cast<std::size_t>(i)] = std::isfinite(value) ? value : std::numeric_limits<double>::max();
  }
  return w;
}

VsvmModel fit_weighted(const LabeledDataset& train, const ImportanceWeights& weights, const KernelConfig& kernel,
                       double gamma) {
  if (weights.values.size() != train.size()) throw DimensionError("weight count does not match training rows");
  return fit(train, diagonal_v(weights.values), kernel, gamma);
}

void write_csv(std::ostream& os, const ImportanceWeights& w) {
  char buf[32];
  for (double v : w.values) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    os << buf << '\n';
  }
}

}  // namespace vshift

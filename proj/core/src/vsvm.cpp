#include "vshift/vsvm.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "vshift/error.hpp"

namespace vshift {

namespace {

constexpr double kDegenerateDenominator = 1e-12;
constexpr double kMinReciprocalCondition = 1e-15;

void check_kernel(const KernelConfig& k) {
  if (!(k.width > 0.0) || !std::isfinite(k.width)) throw InvalidArgument("kernel width must be positive");
}

double kernel_from_sqdist(const KernelConfig& config, double sqdist) {
  switch (config.family) {
    case KernelFamily::gaussian: return std::exp(-sqdist / (2.0 * config.width * config.width));
    case KernelFamily::sqrt_gaussian: return std::exp(-std::sqrt(sqdist) / config.width);
  }
  return 0.0;
}

}  // namespace

std::string to_string(KernelFamily f) { return f == KernelFamily::gaussian ? "gaussian" : "sqrt_gaussian"; }

KernelFamily parse_kernel_family(const std::string& s) {
  if (s == "gaussian") return KernelFamily::gaussian;
  if (s == "sqrt_gaussian" || s == "sqrt-gaussian") return KernelFamily::sqrt_gaussian;
  throw InvalidArgument("unknown kernel family '" + s + "'");
}

double kernel_eval(const KernelConfig& config, const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& xp) {
  check_kernel(config);
  if (x.size() != xp.size()) throw DimensionError("kernel arguments differ in dimension");
  return kernel_from_sqdist(config, (x - xp).squaredNorm());
}

Matrix kernel_matrix(const KernelConfig& config, const Matrix& a, const Matrix& b) {
  check_kernel(config);
  if (a.cols() != b.cols()) throw DimensionError("kernel arguments differ in dimension");
  Matrix k(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.rows(); ++j) k(i, j) = kernel_from_sqdist(config, (a.row(i) - b.row(j)).squaredNorm());
  return k;
}

double VsvmModel::raw(const Eigen::Ref<const Vector>& x) const {
  if (x.size() != train_features.cols())
    throw DimensionError("model expects " + std::to_string(train_features.cols()) + " features, got " +
                         std::to_string(x.size()));
  double s = intercept;
  for (Eigen::Index i = 0; i < train_features.rows(); ++i)
    s += coefficients[i] * kernel_from_sqdist(kernel, (train_features.row(i).transpose() - x).squaredNorm());
  return s;
}

Vector VsvmModel::raw_batch(const Matrix& x) const {
  if (x.cols() != train_features.cols())
    throw DimensionError("model expects " + std::to_string(train_features.cols()) + " features, got " +
                         std::to_string(x.cols()));
  Vector out = kernel_matrix(kernel, x, train_features) * coefficients;
  out.array() += intercept;
  return out;
}

VsvmModel fit(const LabeledDataset& train, const VMatrix& v, const KernelConfig& kernel, double gamma) {
  train.validate();
  check_kernel(kernel);
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw InvalidArgument("gamma must be positive");
  const auto n = static_cast<Eigen::Index>(train.size());
  if (v.entries.rows() != n || v.entries.cols() != n)
    throw DimensionError("V is " + std::to_string(v.entries.rows()) + "x" + std::to_string(v.entries.cols()) +
                         " but the training set has " + std::to_string(n) + " rows");

  const Matrix gram = kernel_matrix(kernel, train.features, train.features);
  const Vector y = train.label_vector();
  const Vector ones = Vector::Ones(n);

  Matrix system = v.entries * gram;
  system.diagonal().array() += gamma;
  Eigen::FullPivLU<Matrix> lu(system);
  const double rcond = lu.rcond();
  if (!lu.isInvertible() || !(rcond > kMinReciprocalCondition))
    throw SolverError("VK + gamma I is singular (reciprocal condition estimate " + std::to_string(rcond) + ")");

  const Vector a_b = lu.solve(v.entries * y);
  const Vector a_c = lu.solve(v.entries * ones);
  const double num = ones.dot(v.entries * (gram * a_b - y));
  const double den = ones.dot(v.entries * (gram * a_c - ones));

  VsvmModel model;
  model.kernel = kernel;
  model.gamma = gamma;
  model.train_features = train.features;
  if (std::abs(den) < kDegenerateDenominator) {
    model.intercept = y.mean();
    model.degenerate_intercept = true;
  } else {
    model.intercept = num / den;
  }
  model.coefficients = a_b - model.intercept * a_c;
  return model;
}

double predict_proba(const VsvmModel& model, const Vector& x) {
  return std::clamp(model.raw(x), 0.0, 1.0);
}

Vector predict_proba(const VsvmModel& model, const Matrix& x) {
  return model.raw_batch(x).cwiseMax(0.0).cwiseMin(1.0);
}

int predict_label(const VsvmModel& model, const Vector& x) { return model.raw(x) >= 0.5 ? 1 : 0; }

std::vector<int> predict_label(const VsvmModel& model, const Matrix& x) {
  const Vector raw = model.raw_batch(x);
  std::vector<int> out(static_cast<std::size_t>(raw.size()));
  for (Eigen::Index i = 0; i < raw.size(); ++i) out[static_cast<std::size_t>(i)] = raw[i] >= 0.5 ? 1 : 0;
  return out;
}

double vsvm_objective(const Matrix& gram, const VMatrix& v, const Vector& y, const Vector& coefficients,
                      double intercept, double gamma) {
  const double n = static_cast<double>(y.size());
  Vector r = gram * coefficients;
  r.array() += intercept;
  r -= y;
  return (r.dot(v.entries * r) + gamma * coefficients.dot(gram * coefficients)) / (n * n);
}

std::string to_json(const VsvmModel& model) {
  nlohmann::ordered_json j;
  j["type"] = "vsvm";
  j["kernel"] = {{"family", to_string(model.kernel.family)}, {"width", model.kernel.width}};
  j["gamma"] = model.gamma;
  j["coefficients"] = std::vector<double>(model.coefficients.data(), model.coefficients.data() + model.coefficients.size());
  j["intercept"] = model.intercept;
  auto rows = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < model.train_features.rows(); ++i) {
    auto row = nlohmann::ordered_json::array();
    for (Eigen::Index k = 0; k < model.train_features.cols(); ++k) row.push_back(model.train_features(i, k));
    rows.push_back(std::move(row));
  }
  j["train_features"] = std::move(rows);
  j["degenerate_intercept"] = model.degenerate_intercept;
  return j.dump(2);
}

VsvmModel vsvm_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("model JSON: ") + e.what());
  }
  try {
    if (j.contains("type") && j.at("type").get<std::string>() != "vsvm") throw SchemaError("model type is not vsvm");
    VsvmModel m;
    m.kernel.family = parse_kernel_family(j.at("kernel").at("family").get<std::string>());
    m.kernel.width = j.at("kernel").at("width").get<double>();
    m.gamma = j.at("gamma").get<double>();
    auto coef = j.at("coefficients").get<std::vector<double>>();
    m.coefficients = Eigen::Map<const Vector>(coef.data(), static_cast<Eigen::Index>(coef.size()));
    m.intercept = j.at("intercept").get<double>();
    auto rows = j.at("train_features").get<std::vector<std::vector<double>>>();
    if (rows.size() != coef.size()) throw SchemaError("coefficient count does not match training rows");
    const std::size_t dim = rows.empty() ? 0 : rows.front().size();
    m.train_features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != dim) throw SchemaError("ragged train_features");
      for (std::size_t k = 0; k < dim; ++k)
        m.train_features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
    }
    m.degenerate_intercept = j.value("degenerate_intercept", false);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("model JSON: ") + e.what());
  }
}

}  // namespace vshift

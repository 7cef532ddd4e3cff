#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "vshift/error.hpp"
#include "vshift/vmatrix.hpp"
#include "vshift/vsvm.hpp"

using namespace vshift;

namespace {

LabeledDataset random_problem(std::mt19937_64& rng, int n, int d) {
  LabeledDataset data;
  data.features = oracle::uniform_matrix(rng, n, d, 0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  data.labels.resize(static_cast<std::size_t>(n));
  for (auto& y : data.labels) y = coin(rng) ? 1 : 0;
  data.labels[0] = 0;
  data.labels[1] = 1;
  return data;
}

VMatrix random_v(std::mt19937_64& rng, const Matrix& x, int which) {
  TargetSample t{oracle::uniform_matrix(rng, 40, x.cols(), 0.0, 1.0)};
  switch (which % 4) {
    case 0: return empirical_v(x, t);
    case 1: return empirical_v_additive(x, t);
    case 2: {
      const std::vector<double> c(static_cast<std::size_t>(x.cols()), 1.0);
      return analytic_v_uniform(x, c);
    }
    default: {
      std::uniform_real_distribution<double> u(0.1, 3.0);
      std::vector<double> w(static_cast<std::size_t>(x.rows()));
      for (auto& v : w) v = u(rng);
      return diagonal_v(w);
    }
  }
}

VsvmModel raw_model(double intercept) {
  VsvmModel m;
  m.train_features = Matrix::Zero(1, 1);
  m.coefficients = Vector::Zero(1);
  m.intercept = intercept;
  return m;
}

}  // namespace

TEST_CASE("kernel values") {
  const Vector x{{0.3, -0.2}};
  for (auto f : {KernelFamily::gaussian, KernelFamily::sqrt_gaussian}) CHECK(kernel_eval({f, 0.7}, x, x) == 1.0);
  const Vector a{{0.0}}, b{{1.0}};
  CHECK(kernel_eval({KernelFamily::gaussian, 1.0}, a, b) == doctest::Approx(std::exp(-0.5)));
  CHECK(kernel_eval({KernelFamily::sqrt_gaussian, 1.0}, a, b) == doctest::Approx(std::exp(-1.0)));
  CHECK(kernel_eval({KernelFamily::gaussian, 2.0}, a, b) == doctest::Approx(std::exp(-1.0 / 8.0)));
  CHECK_THROWS(kernel_eval({KernelFamily::gaussian, 0.0}, a, b));
  CHECK(parse_kernel_family(to_string(KernelFamily::sqrt_gaussian)) == KernelFamily::sqrt_gaussian);
}

TEST_CASE("kernel matrix is symmetric with unit diagonal") {
  std::mt19937_64 rng(1);
  Matrix x = oracle::uniform_matrix(rng, 6, 3, 0.0, 1.0);
  Matrix k = kernel_matrix({}, x, x);
  CHECK(k.isApprox(k.transpose()));
  CHECK(k.diagonal().isOnes());
}

TEST_CASE("all-ones labels give A = 0 and c = 1") {
  std::mt19937_64 rng(5);
  LabeledDataset d{oracle::uniform_matrix(rng, 8, 2, 0.0, 1.0), std::vector<int>(8, 1)};
  TargetSample t{oracle::uniform_matrix(rng, 30, 2, 0.0, 1.0)};
  auto m = fit(d, empirical_v_additive(d.features, t), {}, 0.1);
  CHECK(m.coefficients.cwiseAbs().maxCoeff() < 1e-10);
  CHECK(m.intercept == doctest::Approx(1.0));
  const Vector q{{0.4, 0.9}};
  CHECK(predict_proba(m, q) == doctest::Approx(1.0));
  CHECK(predict_label(m, q) == 1);
  for (int y : predict_label(m, d.features)) CHECK(y == 1);
}

TEST_CASE("V = I matches the bordered classical solve") {
  std::mt19937_64 rng(17);
  for (int rep = 0; rep < 30; ++rep) {
    auto d = random_problem(rng, 3 + rep % 8, 1 + rep % 3);
    for (auto fam : {KernelFamily::gaussian, KernelFamily::sqrt_gaussian}) {
      KernelConfig k{fam, 0.5 + 0.1 * rep};
      auto m = fit(d, identity_v(d.size()), k, 0.1);
      auto ref = oracle::classical_solve(kernel_matrix(k, d.features, d.features), d.label_vector(), 0.1);
      CHECK((m.coefficients - ref.a).norm() <= 1e-8 * std::max(1.0, ref.a.norm()));
      CHECK(std::abs(m.intercept - ref.c) <= 1e-8 * std::max(1.0, std::abs(ref.c)));
    }
  }
}

TEST_CASE("closed form is a stationary point of the objective") {
  std::mt19937_64 rng(23);
  for (int rep = 0; rep < 40; ++rep) {
    auto d = random_problem(rng, 4 + rep % 7, 1 + rep % 3);
    auto v = random_v(rng, d.features, rep);
    const KernelConfig k{rep % 2 ? KernelFamily::gaussian : KernelFamily::sqrt_gaussian, 1.0};
    const double gamma = 0.05 + 0.1 * (rep % 4);
    auto m = fit(d, v, k, gamma);
    const Matrix gram = kernel_matrix(k, d.features, d.features);
    const Vector y = d.label_vector();
    const auto n = m.coefficients.size();
    Vector p(n + 1);
    p << m.coefficients, m.intercept;
    auto f = [&](const Vector& q) { return oracle::objective(gram, v.entries, y, q.head(n), q[n], gamma); };
    CHECK(oracle::numeric_gradient(f, p).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(vsvm_objective(gram, v, y, m.coefficients, m.intercept, gamma) == doctest::Approx(f(p)));
  }
}

TEST_CASE("N = 2 fit agrees with a coordinate-descent minimizer") {
  LabeledDataset d{Matrix{{0.0}, {1.0}}, {1, 0}};
  const KernelConfig k{KernelFamily::gaussian, 1.0};
  auto m = fit(d, identity_v(2), k, 0.1);
  const Matrix gram = kernel_matrix(k, d.features, d.features);
  const Matrix eye = Matrix::Identity(2, 2);
  const Vector y = d.label_vector();
  auto f = [&](const Vector& q) { return oracle::objective(gram, eye, y, q.head(2), q[2], 0.1); };
  // Exact line minimization along each coordinate; f is quadratic.
  Vector p = Vector::Zero(3);
  for (int sweep = 0; sweep < 200000; ++sweep) {
    for (int i = 0; i < 3; ++i) {
      Vector lo = p, hi = p;
      lo[i] -= 1.0;
      hi[i] += 1.0;
      const double f0 = f(p), fl = f(lo), fh = f(hi);
      const double curv = fh + fl - 2 * f0;
      if (curv > 0) p[i] -= 0.5 * (fh - fl) / curv;
    }
  }
  CHECK(m.coefficients[0] == doctest::Approx(p[0]).epsilon(1e-3));
  CHECK(m.coefficients[1] == doctest::Approx(p[1]).epsilon(1e-3));
  CHECK(m.intercept == doctest::Approx(p[2]).epsilon(1e-3));
}

TEST_CASE("stored fields reproduce the fitted values") {
  std::mt19937_64 rng(31);
  auto d = random_problem(rng, 9, 2);
  auto m = fit(d, identity_v(9), {}, 0.1);
  const Matrix gram = kernel_matrix(m.kernel, d.features, m.train_features);
  const Vector fitted = gram * m.coefficients + Vector::Constant(9, m.intercept);
  CHECK((m.raw_batch(d.features) - fitted).cwiseAbs().maxCoeff() < 1e-12);
  for (Eigen::Index i = 0; i < 9; ++i) CHECK(m.raw(d.features.row(i).transpose()) == doctest::Approx(fitted[i]));
}

TEST_CASE("probabilities are clamped and labels threshold at one half") {
  const Vector x{{0.0}};
  CHECK(predict_proba(raw_model(1.3), x) == 1.0);
  CHECK(predict_proba(raw_model(-0.2), x) == 0.0);
  CHECK(predict_proba(raw_model(0.42), x) == doctest::Approx(0.42));
  CHECK(predict_label(raw_model(0.5), x) == 1);
  CHECK(predict_label(raw_model(0.49), x) == 0);
  const Matrix xs = Matrix::Zero(3, 1);
  CHECK(predict_proba(raw_model(1.3), xs).isOnes());
}

TEST_CASE("degenerate intercept falls back to the label mean") {
  // A V-matrix that is zero everywhere makes the intercept ratio 0/0.
  LabeledDataset d{Matrix{{0.9}, {0.95}, {0.99}}, {1, 0, 0}};
  TargetSample t{Matrix{{0.1}, {0.2}}};
  auto m = fit(d, empirical_v(d.features, t), {}, 0.1);
  CHECK(m.degenerate_intercept);
  CHECK(m.intercept == doctest::Approx(1.0 / 3.0));
  CHECK(m.coefficients.isZero());
}

TEST_CASE("invalid arguments are rejected") {
  LabeledDataset d{Matrix{{0.0}, {1.0}}, {0, 1}};
  CHECK_THROWS_AS(fit(d, identity_v(2), {}, 0.0), InvalidArgument);
  CHECK_THROWS_AS(fit(d, identity_v(3), {}, 0.1), DimensionError);
  auto m = fit(d, identity_v(2), {}, 0.1);
  const Vector wrong = Vector::Zero(2);
  CHECK_THROWS_AS(predict_proba(m, wrong), DimensionError);
}

TEST_CASE("json round trip preserves predictions") {
  std::mt19937_64 rng(41);
  auto d = random_problem(rng, 7, 3);
  auto m = fit(d, identity_v(7), {KernelFamily::gaussian, 0.8}, 0.2);
  auto back = vsvm_from_json(to_json(m));
  CHECK(back.coefficients == m.coefficients);
  CHECK(back.intercept == m.intercept);
  CHECK(back.kernel.family == KernelFamily::gaussian);
  CHECK(back.kernel.width == 0.8);
  CHECK(back.gamma == 0.2);
  CHECK(back.raw_batch(d.features) == m.raw_batch(d.features));
  CHECK_THROWS_AS(vsvm_from_json("{\"type\":\"vsvm\"}"), SchemaError);
  CHECK_THROWS_AS(vsvm_from_json("not json"), SchemaError);
}

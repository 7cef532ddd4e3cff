#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "vshift/error.hpp"
#include "vshift/vboost.hpp"
#include "vshift/vmatrix.hpp"

using namespace vshift;

namespace {

LabeledDataset noisy_stump_data(std::mt19937_64& rng, int n, int d) {
  LabeledDataset data;
  data.features = oracle::uniform_matrix(rng, n, d, 0.0, 1.0);
  data.labels.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const double p = data.features(i, 0) > 0.5 ? 0.8 : 0.2;
    data.labels[static_cast<std::size_t>(i)] = std::bernoulli_distribution(p)(rng) ? 1 : 0;
  }
  return data;
}

/// Symmetric part positive definite, plus an optional skew part.
Matrix random_pd_v(std::mt19937_64& rng, int n, bool skew) {
  Matrix b = oracle::uniform_matrix(rng, n, n, -1.0, 1.0);
  Matrix v = b * b.transpose() / n + 0.1 * Matrix::Identity(n, n);
  if (skew) {
    Matrix s = oracle::uniform_matrix(rng, n, n, -0.3, 0.3);
    v += s - s.transpose();
  }
  return v;
}

std::vector<std::size_t> leaf_assignment(const RegressionTree& tree, const Matrix& x) {
  std::vector<std::size_t> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    out[static_cast<std::size_t>(i)] = static_cast<std::size_t>(tree.leaf_for(x.row(i).transpose()).leaf);
  return out;
}

}  // namespace

TEST_CASE("leaf system for a single leaf with V = I") {
  const Vector g{{0.3, -0.1, 0.5, 0.2}};
  const std::vector<std::size_t> assign(4, 0);
  auto sys = leaf_system(assign, 1, g, Matrix::Identity(4, 4), 0.7);
  CHECK(sys.c(0, 0) == 4.0);
  CHECK(sys.d(0, 0) == doctest::Approx(8.7));
  CHECK(sys.u[0] == doctest::Approx(-2 * g.sum()));
  const Vector w = solve_leaf_weights(sys.d, sys.u);
  auto sys0 = leaf_system(assign, 1, g, Matrix::Identity(4, 4), 0.0);
  CHECK(solve_leaf_weights(sys0.d, sys0.u)[0] == doctest::Approx(-g.mean()));
  CHECK(w[0] == doctest::Approx(-2 * g.sum() / 8.7));
}

TEST_CASE("two singleton leaves, coupled V") {
  const Vector g{{1.0, -1.0}};
  const Matrix v{{1.0, 0.5}, {0.5, 1.0}};
  const std::vector<std::size_t> assign{0, 1};
  auto sys = leaf_system(assign, 2, g, v, 0.0);
  CHECK(sys.c == v);
  CHECK(sys.d == Matrix{{2.0, 1.0}, {1.0, 2.0}});
  CHECK(sys.a.isApprox(Vector{{0.5, -0.5}}));
  CHECK(sys.b.isApprox(Vector{{0.5, -0.5}}));
  CHECK(sys.u.isApprox(Vector{{-1.0, 1.0}}));
  const Vector w = solve_leaf_weights(sys.d, sys.u);
  CHECK(w[0] == doctest::Approx(-1.0));
  CHECK(w[1] == doctest::Approx(1.0));
}

TEST_CASE("symmetric V gives A = B") {
  std::mt19937_64 rng(3);
  Matrix v = random_pd_v(rng, 9, false);
  Vector g = oracle::uniform_matrix(rng, 9, 1, -1, 1).col(0);
  std::vector<std::size_t> assign{0, 1, 2, 0, 1, 2, 0, 0, 1};
  auto sys = leaf_system(assign, 3, g, v, 1.0);
  CHECK(sys.a.isApprox(sys.b));
  v(0, 3) += 0.4;
  auto asym = leaf_system(assign, 3, g, v, 1.0);
  CHECK_FALSE(asym.a.isApprox(asym.b));
}

TEST_CASE("leaf system sums match their definitions") {
  std::mt19937_64 rng(4);
  const int n = 7;
  Matrix v = oracle::uniform_matrix(rng, n, n, 0.0, 1.0);
  Vector g = oracle::uniform_matrix(rng, n, 1, -1, 1).col(0);
  std::vector<std::size_t> q{1, 0, 1, 2, 2, 0, 1};
  auto sys = leaf_system(q, 3, g, v, 0.5);
  for (std::size_t k = 0; k < 3; ++k) {
    double a = 0, b = 0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (q[static_cast<std::size_t>(j)] == k) a += g[i] * v(i, j);
        if (q[static_cast<std::size_t>(i)] == k) b += g[j] * v(i, j);
      }
    CHECK(sys.a[static_cast<Eigen::Index>(k)] == doctest::Approx(a));
    CHECK(sys.b[static_cast<Eigen::Index>(k)] == doctest::Approx(b));
    for (std::size_t m = 0; m < 3; ++m) {
      double c = 0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          if (q[static_cast<std::size_t>(i)] == k && q[static_cast<std::size_t>(j)] == m) c += v(i, j);
      CHECK(sys.c(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(m)) == doctest::Approx(c));
    }
  }
  std::vector<std::size_t> gap{0, 0, 2, 2, 0, 0, 2};
  CHECK_THROWS(leaf_system(gap, 3, g, v, 0.5));
}

TEST_CASE("leaf solver edge cases") {
  const Matrix d{{2.0, 1.0}, {1.0, 2.0}};
  CHECK(solve_leaf_weights(d, Vector::Zero(2)).isZero());
  CHECK_THROWS_AS(solve_leaf_weights(Matrix::Zero(2, 2), Vector::Ones(2)), SolverError);
}

TEST_CASE("tree objective values") {
  CHECK(tree_objective(Matrix{{3.0}}, Vector::Zero(1), 0.25, 1) == doctest::Approx(0.25));
  CHECK(tree_objective(Matrix{{2.0}}, Vector{{2.0}}, 0.0, 1) == doctest::Approx(-1.0));
  CHECK(tree_objective(Matrix{{2.0}}, Vector{{2.0}}, 0.5, 3) == doctest::Approx(0.5));
}

TEST_CASE("optimal objective equals the leaf objective at the solved weights") {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    const int n = 10;
    const bool skew = rep % 2 == 1;
    Matrix v = random_pd_v(rng, n, skew);
    Vector g = oracle::uniform_matrix(rng, n, 1, -1, 1).col(0);
    std::vector<std::size_t> q(n);
    for (int i = 0; i < n; ++i) q[static_cast<std::size_t>(i)] = static_cast<std::size_t>(i % 3);
    const double lambda = 0.3;
    auto sys = leaf_system(q, 3, g, v, lambda);
    const Vector w = solve_leaf_weights(sys.d, sys.u);
    const double direct = leaf_objective(sys, w, lambda) + 0.1 * 3;
    CHECK(tree_objective_general(sys, lambda, 0.1, 3) == doctest::Approx(direct));
    if (!skew) CHECK(tree_objective(sys.d, sys.u, 0.1, 3) == doctest::Approx(direct));
    // w is a minimizer: finite-difference gradient vanishes.
    auto f = [&](const Vector& x) { return leaf_objective(sys, x, lambda); };
    CHECK(oracle::numeric_gradient(f, w).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("splitting a leaf with non-proportional gradients lowers the objective") {
  std::mt19937_64 rng(6);
  for (int rep = 0; rep < 20; ++rep) {
    const int n = 8;
    Matrix v = random_pd_v(rng, n, false);
    Vector g = oracle::uniform_matrix(rng, n, 1, -1, 1).col(0);
    std::vector<std::size_t> one(n, 0), two(n, 0);
    for (int i = n / 2; i < n; ++i) two[static_cast<std::size_t>(i)] = 1;
    auto s1 = leaf_system(one, 1, g, v, 0.0);
    auto s2 = leaf_system(two, 2, g, v, 0.0);
    CHECK(tree_objective(s2.d, s2.u, 0.0, 2) < tree_objective(s1.d, s1.u, 0.0, 1));
  }
}

TEST_CASE("V = I boosting equals the classical squared-loss booster") {
  std::mt19937_64 rng(7);
  std::vector<BoostParams> configs(4);
  configs[0] = {1, 1, 0.0, 0.0, 1.0, 1};
  configs[1] = {5, 3, 1.0, 0.0, 0.3, 2};
  configs[2] = {4, 2, 0.5, 0.05, 0.7, 3};
  configs[3] = {3, 4, 2.0, 0.0, 1.0, 1};
  for (int rep = 0; rep < 12; ++rep) {
    const auto& p = configs[static_cast<std::size_t>(rep % 4)];
    auto data = noisy_stump_data(rng, 30 + rep, 1 + rep % 3);
    auto model = fit_boost(data, identity_v(data.size()), p);
    oracle::ClassicalBooster ref(p);
    ref.fit(data.features, data.label_vector());
    Matrix probe = oracle::uniform_matrix(rng, 40, data.features.cols(), 0.0, 1.0);
    for (const Matrix* m : {&data.features, &probe})
      for (Eigen::Index i = 0; i < m->rows(); ++i) {
        const Vector x = m->row(i).transpose();
        const double want = ref.predict(x);
        CHECK(std::abs(predict_boost(model, x) - want) <= 1e-8 * std::max(1.0, std::abs(want)));
      }
  }
}

TEST_CASE("one stump with V = I predicts per-leaf mean labels") {
  std::mt19937_64 rng(8);
  auto data = noisy_stump_data(rng, 40, 2);
  auto model = fit_boost(data, identity_v(40), {1, 1, 0.0, 0.0, 1.0, 1});
  REQUIRE(model.trees.size() == 1);
  const auto q = leaf_assignment(model.trees[0], data.features);
  for (std::size_t leaf = 0; leaf < model.trees[0].leaf_count(); ++leaf) {
    double sum = 0;
    int count = 0;
    for (std::size_t i = 0; i < q.size(); ++i)
      if (q[i] == leaf) {
        sum += data.labels[i];
        ++count;
      }
    for (std::size_t i = 0; i < q.size(); ++i)
      if (q[i] == leaf)
        CHECK(predict_boost(model, Vector(data.features.row(static_cast<Eigen::Index>(i)).transpose())) ==
              doctest::Approx(sum / count));
  }
}

TEST_CASE("first split matches an exhaustive search under a general V") {
  std::mt19937_64 rng(9);
  for (int rep = 0; rep < 10; ++rep) {
    const int n = 16;
    auto data = noisy_stump_data(rng, n, 2);
    Matrix v = random_pd_v(rng, n, rep % 2 == 1);
    BoostParams p{1, 1, 0.5, 0.0, 1.0, 2};
    auto model = fit_boost(data, VMatrix{v, VKind::diagonal}, p);

    const Vector y = data.label_vector();
    const Vector g = Vector::Constant(n, y.mean()) - y;
    auto obj = [&](const std::vector<std::size_t>& q, std::size_t leaves) {
      return tree_objective_general(leaf_system(q, leaves, g, v, p.lambda), p.lambda, 0.0, leaves);
    };
    double best = obj(std::vector<std::size_t>(n, 0), 1);
    const double root = best;
    int bf = -1;
    double bt = 0;
    for (int k = 0; k < 2; ++k) {
      std::vector<double> vals(data.features.col(k).data(), data.features.col(k).data() + n);
      std::sort(vals.begin(), vals.end());
      for (int s = 0; s + 1 < n; ++s) {
        if (!(vals[static_cast<std::size_t>(s)] < vals[static_cast<std::size_t>(s) + 1])) continue;
        const double thr = 0.5 * (vals[static_cast<std::size_t>(s)] + vals[static_cast<std::size_t>(s) + 1]);
        std::vector<std::size_t> q(n);
        std::size_t left = 0;
        for (int i = 0; i < n; ++i) {
          q[static_cast<std::size_t>(i)] = data.features(i, k) < thr ? 0 : 1;
          left += q[static_cast<std::size_t>(i)] == 0;
        }
        if (left < p.min_leaf_size || n - left < p.min_leaf_size) continue;
        const double o = obj(q, 2);
        if (o < best) {
          best = o;
          bf = k;
          bt = thr;
        }
      }
    }
    const auto& rootnode = model.trees[0].nodes[0];
    if (bf < 0 || !(best < root - 1e-12 * std::max(1.0, std::abs(root)))) {
      CHECK(rootnode.is_leaf());
    } else {
      CHECK(rootnode.feature == bf);
      CHECK(rootnode.threshold == doctest::Approx(bt));
    }
  }
}

TEST_CASE("fitted leaf weights are stationary for the coupled loss") {
  std::mt19937_64 rng(10);
  for (int rep = 0; rep < 10; ++rep) {
    const int n = 20;
    auto data = noisy_stump_data(rng, n, 2);
    Matrix v = random_pd_v(rng, n, rep % 2 == 1);
    const double lambda = 0.4;
    auto model = fit_boost(data, VMatrix{v, VKind::diagonal}, {1, 2, lambda, 0.0, 1.0, 3});
    const auto& tree = model.trees[0];
    const auto q = leaf_assignment(tree, data.features);
    const Vector y = data.label_vector();
    Vector w(static_cast<Eigen::Index>(tree.leaf_count()));
    for (const auto& node : tree.nodes)
      if (node.is_leaf()) w[node.leaf] = node.weight;
    auto loss = [&](const Vector& ww) {
      Vector yhat(n);
      for (int i = 0; i < n; ++i) yhat[i] = model.base_score + ww[static_cast<Eigen::Index>(q[static_cast<std::size_t>(i)])];
      return coupled_loss(y, yhat, v) + 0.5 * lambda * ww.dot(ww);
    };
    CHECK(oracle::numeric_gradient(loss, w).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("coupled training loss does not increase across rounds") {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 8; ++rep) {
    const int n = 25;
    auto data = noisy_stump_data(rng, n, 3);
    Matrix v = random_pd_v(rng, n, false);
    auto model = fit_boost(data, VMatrix{v, VKind::diagonal}, {6, 2, 0.0, 0.0, 1.0, 2});
    const Vector y = data.label_vector();
    double prev = coupled_loss(y, Vector::Constant(n, model.base_score), v);
    BoostModel partial = model;
    for (std::size_t k = 1; k <= model.trees.size(); ++k) {
      partial.trees.assign(model.trees.begin(), model.trees.begin() + static_cast<long>(k));
      const double cur = coupled_loss(y, predict_boost(partial, data.features), v);
      CHECK(cur <= prev + 1e-10);
      prev = cur;
    }
  }
}

TEST_CASE("pure labels give a constant model") {
  LabeledDataset d{Matrix{{0.1}, {0.5}, {0.9}, {0.3}}, {1, 1, 1, 1}};
  auto m = fit_boost(d, identity_v(4), {1, 2, 0.0, 0.0, 1.0, 1});
  CHECK(m.base_score == 1.0);
  for (Eigen::Index i = 0; i < 4; ++i) CHECK(predict_boost(m, Vector(d.features.row(i).transpose())) == doctest::Approx(1.0));
  CHECK(predict_boost_proba(m, Vector{{0.7}}) == doctest::Approx(1.0));
}

TEST_CASE("prediction adds scaled leaf weights to the base score") {
  BoostModel m;
  m.base_score = 0.3;
  m.dim = 1;
  m.params.learning_rate = 0.5;
  RegressionTree t;
  t.nodes.resize(1);
  t.nodes[0].weight = 0.4;
  t.nodes[0].leaf = 0;
  m.trees.push_back(t);
  CHECK(predict_boost(m, Vector{{0.0}}) == doctest::Approx(0.5));
  m.trees[0].nodes[0].weight = 0.0;
  m.trees.push_back(m.trees[0]);
  CHECK(predict_boost(m, Vector{{2.0}}) == doctest::Approx(0.3));
  CHECK_THROWS_AS(predict_boost(m, Vector{{1.0, 2.0}}), DimensionError);
}

TEST_CASE("parameter validation") {
  LabeledDataset d{Matrix{{0.1}, {0.9}}, {0, 1}};
  CHECK_THROWS_AS(fit_boost(d, identity_v(2), {0, 1, 1.0, 0.0, 1.0, 1}), InvalidArgument);
  CHECK_THROWS_AS(fit_boost(d, identity_v(2), {1, 0, 1.0, 0.0, 1.0, 1}), InvalidArgument);
  CHECK_THROWS_AS(fit_boost(d, identity_v(2), {1, 1, 1.0, 0.0, 0.0, 1}), InvalidArgument);
  CHECK_THROWS_AS(fit_boost(d, identity_v(2), {1, 1, 1.0, 0.0, 1.5, 1}), InvalidArgument);
  CHECK_THROWS_AS(fit_boost(d, identity_v(2), {1, 1, -1.0, 0.0, 1.0, 1}), InvalidArgument);
  CHECK_THROWS_AS(fit_boost(d, identity_v(3), {}), DimensionError);
  VMatrix zero{Matrix::Zero(2, 2), VKind::diagonal};
  CHECK_THROWS_AS(fit_boost(d, zero, {1, 1, 0.0, 0.0, 1.0, 1}), SolverError);
}

TEST_CASE("json round trip") {
  std::mt19937_64 rng(12);
  auto data = noisy_stump_data(rng, 30, 2);
  auto m = fit_boost(data, identity_v(30), {3, 2, 1.0, 0.0, 0.5, 2});
  auto back = boost_from_json(to_json(m));
  CHECK(back.trees.size() == 3);
  CHECK(back.base_score == m.base_score);
  CHECK(back.params.learning_rate == 0.5);
  CHECK(predict_boost(back, data.features) == predict_boost(m, data.features));
  CHECK_THROWS_AS(boost_from_json("{\"type\":\"vsvm\"}"), SchemaError);
}

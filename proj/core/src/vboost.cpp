#include "vshift/vboost.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <optional>

#include <json.hpp>

#include "vshift/error.hpp"

namespace vshift {

namespace {

std::optional<Eigen::LLT<Matrix>> factor_pd(const Matrix& d) {
  Eigen::LLT<Matrix> llt(d);
  if (llt.info() != Eigen::Success) return std::nullopt;
  const Vector diag = llt.matrixLLT().diagonal();
  const double scale = std::max(1.0, d.diagonal().cwiseAbs().maxCoeff());
  if (diag.minCoeff() <= 0.0 || diag.minCoeff() * diag.minCoeff() < 1e-13 * scale) return std::nullopt;
  return llt;
}

std::optional<double> symmetric_objective(const Matrix& d, const Vector& u, double gamma_tree, std::size_t leaves) {
  auto llt = factor_pd(d);
  if (!llt) return std::nullopt;
  return -0.5 * u.dot(llt->solve(u)) + gamma_tree * static_cast<double>(leaves);
}

std::optional<double> general_objective(const Matrix& c, const Matrix& d, const Vector& u, double lambda,
                                        double gamma_tree, std::size_t leaves) {
  auto llt = factor_pd(d);
  if (!llt) return std::nullopt;
  const Vector w = llt->solve(u);
  return -u.dot(w) + w.dot(c.transpose() * w) + 0.5 * lambda * w.dot(w) + gamma_tree * static_cast<double>(leaves);
}

/// Grows one tree greedily. Candidate splits of a leaf are scored by the
/// optimal round objective of the whole resulting partition; the leaf block
/// sums are updated incrementally as rows cross the threshold.
constexpr double kTieMargin = 1e-12;

class TreeGrower {
 public:
  TreeGrower(const Matrix& x, const Matrix& v, const Vector& g, const BoostParams& params)
      : x_(x), v_(v), g_(g), params_(params), n_(static_cast<std::size_t>(x.rows())) {
    symmetric_ = v_ == v_.transpose();
    vg_ = v_ * g_;
    vtg_ = v_.transpose() * g_;
  }

  RegressionTree grow() {
    tree_.nodes.assign(1, TreeNode{});
    leaf_rows_.assign(1, std::vector<std::size_t>(n_));
    std::iota(leaf_rows_[0].begin(), leaf_rows_[0].end(), std::size_t{0});
    leaf_node_.assign(1, 0);
    assignment_.assign(n_, 0);
    refresh();

    std::deque<std::pair<std::size_t, std::size_t>> frontier;  // (leaf, depth)
    frontier.emplace_back(0, 0);
    while (!frontier.empty()) {
      auto [leaf, depth] = frontier.front();
      frontier.pop_front();
      if (depth >= params_.max_depth) continue;
      if (leaf_rows_[leaf].size() < 2 * params_.min_leaf_size) continue;
      auto split = best_split(leaf);
      if (!split) continue;
      const std::size_t right = apply_split(leaf, *split);
      frontier.emplace_back(leaf, depth + 1);
      frontier.emplace_back(right, depth + 1);
    }

    const std::size_t leaves = leaf_rows_.size();
    auto sys = leaf_system(assignment_, leaves, g_, v_, params_.lambda);
    const Vector w = solve_leaf_weights(sys.d, sys.u);
    for (std::size_t l = 0; l < leaves; ++l) {
      TreeNode& node = tree_.nodes[static_cast<std::size_t>(leaf_node_[l])];
      node.weight = w[static_cast<Eigen::Index>(l)];
      node.leaf = static_cast<int>(l);
    }
    return tree_;
  }

  const std::vector<std::size_t>& assignment() const { return assignment_; }

 private:
  struct Split {
    Eigen::Index feature;
    double threshold;
  };

  std::optional<double> score(const Matrix& c, const Vector& a, const Vector& b, std::size_t leaves) const {
    Matrix d = c + c.transpose();
    d.diagonal().array() += params_.lambda;
    const Vector u = -(a + b);
    return symmetric_ ? symmetric_objective(d, u, params_.gamma_tree, leaves)
                      : general_objective(c, d, u, params_.lambda, params_.gamma_tree, leaves);
  }

  /// Recomputes per-row leaf sums and the block matrices for the current partition.
  void refresh() {
    const auto leaves = static_cast<Eigen::Index>(leaf_rows_.size());
    const auto n = static_cast<Eigen::Index>(n_);
    row_to_leaf_ = Matrix::Zero(n, leaves);
    leaf_to_col_ = Matrix::Zero(n, leaves);
    for (Eigen::Index m = 0; m < leaves; ++m)
      for (std::size_t r : leaf_rows_[static_cast<std::size_t>(m)]) {
        const auto rr = static_cast<Eigen::Index>(r);
        row_to_leaf_.col(m) += v_.col(rr);
        leaf_to_col_.col(m) += v_.row(rr).transpose();
      }
    c_ = Matrix::Zero(leaves, leaves);
    a_ = Vector::Zero(leaves);
    b_ = Vector::Zero(leaves);
    for (Eigen::Index l = 0; l < leaves; ++l)
      for (std::size_t r : leaf_rows_[static_cast<std::size_t>(l)]) {
        const auto rr = static_cast<Eigen::Index>(r);
        c_.row(l) += row_to_leaf_.row(rr);
        a_[l] += vtg_[rr];
        b_[l] += vg_[rr];
      }
    current_ = score(c_, a_, b_, static_cast<std::size_t>(leaves));
  }

  std::optional<Split> best_split(std::size_t leaf) {
    if (!current_) return std::nullopt;
    const auto& rows = leaf_rows_[leaf];
    const auto s = static_cast<Eigen::Index>(leaf);
    const auto leaves = static_cast<Eigen::Index>(leaf_rows_.size());
    const Eigen::Index fresh = leaves;

    std::optional<Split> best;
    double best_obj = std::numeric_limits<double>::infinity();

    Matrix cand_c(leaves + 1, leaves + 1);
    Vector cand_a(leaves + 1), cand_b(leaves + 1);
    std::vector<double> in_left_row(n_), in_left_col(n_);
    std::vector<std::size_t> order(rows);

    for (Eigen::Index k = 0; k < x_.cols(); ++k) {
      std::stable_sort(order.begin(), order.end(), [&](std::size_t p, std::size_t q) {
        return x_(static_cast<Eigen::Index>(p), k) < x_(static_cast<Eigen::Index>(q), k);
      });
      for (std::size_t r : rows) in_left_row[r] = in_left_col[r] = 0.0;
      double c_ll = 0.0, c_lr = 0.0, c_rl = 0.0, a_l = 0.0, b_l = 0.0;
      Vector left_to_other = Vector::Zero(leaves);  // sum_{i in L} row_to_leaf(i, m)
      Vector other_to_left = Vector::Zero(leaves);  // sum_{j in L} leaf_to_col(j, m)

      for (std::size_t pos = 0; pos + 1 < order.size(); ++pos) {
        const std::size_t p = order[pos];
        const auto pp = static_cast<Eigen::Index>(p);
        const double vpp = v_(pp, pp);
        const double row_s = row_to_leaf_(pp, s);
        const double col_s = leaf_to_col_(pp, s);
        c_ll += in_left_row[p] + in_left_col[p] + vpp;
        c_lr += -in_left_col[p] + (row_s - in_left_row[p] - vpp);
        c_rl += -in_left_row[p] + (col_s - in_left_col[p] - vpp);
        for (std::size_t r : rows) {
          const auto rr = static_cast<Eigen::Index>(r);
          in_left_row[r] += v_(rr, pp);
          in_left_col[r] += v_(pp, rr);
        }
        a_l += vtg_[pp];
        b_l += vg_[pp];
        left_to_other += row_to_leaf_.row(pp).transpose();
        other_to_left += leaf_to_col_.row(pp).transpose();

        const double here = x_(pp, k);
        const double next = x_(static_cast<Eigen::Index>(order[pos + 1]), k);
        if (!(here < next)) continue;
        const std::size_t n_left = pos + 1;
        const std::size_t n_right = order.size() - n_left;
        if (n_left < params_.min_leaf_size || n_right < params_.min_leaf_size) continue;

        cand_c.topLeftCorner(leaves, leaves) = c_;
        for (Eigen::Index m = 0; m < leaves; ++m) {
          if (m == s) continue;
          cand_c(s, m) = left_to_other[m];
          cand_c(fresh, m) = c_(s, m) - left_to_other[m];
          cand_c(m, s) = other_to_left[m];
          cand_c(m, fresh) = c_(m, s) - other_to_left[m];
        }
        cand_c(s, s) = c_ll;
        cand_c(s, fresh) = c_lr;
        cand_c(fresh, s) = c_rl;
        cand_c(fresh, fresh) = c_(s, s) - c_ll - c_lr - c_rl;
        cand_a.head(leaves) = a_;
        cand_b.head(leaves) = b_;
        cand_a[s] = a_l;
        cand_a[fresh] = a_[s] - a_l;
        cand_b[s] = b_l;
        cand_b[fresh] = b_[s] - b_l;

        auto obj = score(cand_c, cand_a, cand_b, static_cast<std::size_t>(leaves + 1));
        // Near-equal candidates count as ties so the earliest one wins.
        if (obj && (!best || *obj < best_obj - kTieMargin * std::max(1.0, std::abs(best_obj)))) {
          best_obj = *obj;
          best = Split{k, 0.5 * (here + next)};
        }
      }
    }
    const double margin = kTieMargin * std::max(1.0, std::abs(*current_));
    if (!best || !(best_obj < *current_ - margin)) return std::nullopt;
    return best;
  }

  /// Returns the leaf id of the new right child; the left child keeps `leaf`.
  std::size_t apply_split(std::size_t leaf, const Split& split) {
    const int parent = leaf_node_[leaf];
    const int left_node = static_cast<int>(tree_.nodes.size());
    const int right_node = left_node + 1;
    tree_.nodes.emplace_back();
    tree_.nodes.emplace_back();
    TreeNode& node = tree_.nodes[static_cast<std::size_t>(parent)];
    node.feature = static_cast<int>(split.feature);
    node.threshold = split.threshold;
    node.left = left_node;
    node.right = right_node;

    const std::size_t right_leaf = leaf_rows_.size();
    std::vector<std::size_t> left_rows, right_rows;
    for (std::size_t r : leaf_rows_[leaf]) {
      if (x_(static_cast<Eigen::Index>(r), split.feature) < split.threshold) {
        left_rows.push_back(r);
      } else {
        right_rows.push_back(r);
        assignment_[r] = right_leaf;
      }
    }
    leaf_rows_[leaf] = std::move(left_rows);
    leaf_rows_.push_back(std::move(right_rows));
    leaf_node_[leaf] = left_node;
    leaf_node_.push_back(right_node);
    refresh();
    return right_leaf;
  }

  const Matrix& x_;
  const Matrix& v_;
  const Vector& g_;
  const BoostParams& params_;
  std::size_t n_;
  bool symmetric_ = true;
  Vector vg_, vtg_;

  RegressionTree tree_;
  std::vector<std::vector<std::size_t>> leaf_rows_;
  std::vector<int> leaf_node_;
  std::vector<std::size_t> assignment_;
  Matrix row_to_leaf_;  ///< (i, m) -> sum_{j in I_m} V_ij
  Matrix leaf_to_col_;  ///< (j, m) -> sum_{i in I_m} V_ij
  Matrix c_;
  Vector a_, b_;
  std::optional<double> current_;
};

}  // namespace

void BoostParams::validate() const {
  if (num_trees < 1) throw InvalidArgument("num_trees must be >= 1");
  if (max_depth < 1) throw InvalidArgument("max_depth must be >= 1");
  if (min_leaf_size < 1) throw InvalidArgument("min_leaf_size must be >= 1");
  if (!(lambda >= 0.0)) throw InvalidArgument("lambda must be nonnegative");
  if (!(gamma_tree >= 0.0)) throw InvalidArgument("gamma_tree must be nonnegative");
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) throw InvalidArgument("learning_rate must lie in (0, 1]");
}

std::size_t RegressionTree::leaf_count() const {
  return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

const TreeNode& RegressionTree::leaf_for(const Eigen::Ref<const Vector>& x) const {
  std::size_t at = 0;
  while (!nodes[at].is_leaf()) {
    const TreeNode& n = nodes[at];
    at = static_cast<std::size_t>(x[n.feature] < n.threshold ? n.left : n.right);
  }
  return nodes[at];
}

double BoostModel::raw(const Eigen::Ref<const Vector>& x) const {
  if (static_cast<std::size_t>(x.size()) != dim)
    throw DimensionError("model expects " + std::to_string(dim) + " features, got " + std::to_string(x.size()));
  double sum = 0.0;
  for (const auto& t : trees) sum += t.value(x);
  return base_score + params.learning_rate * sum;
}

LeafSystem leaf_system(std::span<const std::size_t> assignment, std::size_t leaves, const Vector& g, const Matrix& v,
                       double lambda) {
  const auto n = static_cast<Eigen::Index>(assignment.size());
  if (g.size() != n || v.rows() != n || v.cols() != n) throw DimensionError("leaf system inputs disagree in size");
  const auto t = static_cast<Eigen::Index>(leaves);
  std::vector<std::size_t> counts(leaves, 0);
  for (std::size_t l : assignment) {
    if (l >= leaves) throw InvalidArgument("leaf index out of range");
    ++counts[l];
  }
  for (std::size_t l = 0; l < leaves; ++l)
    if (counts[l] == 0) throw InvalidArgument("leaf " + std::to_string(l) + " is empty");

  LeafSystem s;
  s.c = Matrix::Zero(t, t);
  s.a = Vector::Zero(t);
  s.b = Vector::Zero(t);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto li = static_cast<Eigen::Index>(assignment[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto lj = static_cast<Eigen::Index>(assignment[static_cast<std::size_t>(j)]);
      const double vij = v(i, j);
      s.c(li, lj) += vij;
      s.a[lj] += g[i] * vij;
      s.b[li] += g[j] * vij;
    }
  }
  s.d = s.c + s.c.transpose();
  s.d.diagonal().array() += lambda;
  s.u = -(s.a + s.b);
  return s;
}

Vector solve_leaf_weights(const Matrix& d, const Vector& u) {
  if (d.rows() != d.cols() || d.rows() != u.size()) throw DimensionError("leaf system is not square");
  auto llt = factor_pd(d);
  if (!llt) throw SolverError("leaf system D is not positive definite; use lambda > 0");
  return llt->solve(u);
}

double tree_objective(const Matrix& d, const Vector& u, double gamma_tree, std::size_t leaves) {
  auto obj = symmetric_objective(d, u, gamma_tree, leaves);
  if (!obj) throw SolverError("leaf system D is not positive definite; use lambda > 0");
  return *obj;
}

double tree_objective_general(const LeafSystem& sys, double lambda, double gamma_tree, std::size_t leaves) {
  auto obj = general_objective(sys.c, sys.d, sys.u, lambda, gamma_tree, leaves);
  if (!obj) throw SolverError("leaf system D is not positive definite; use lambda > 0");
  return *obj;
}

double leaf_objective(const LeafSystem& sys, const Vector& w, double lambda) {
  return w.dot(sys.a + sys.b) + w.dot(sys.c * w) + 0.5 * lambda * w.dot(w);
}

double coupled_loss(const Vector& y, const Vector& yhat, const Matrix& v) {
  const Vector r = y - yhat;
  return r.dot(v * r);
}

BoostModel fit_boost(const LabeledDataset& train, const VMatrix& v, const BoostParams& params) {
  train.validate();
  params.validate();
  const auto n = static_cast<Eigen::Index>(train.size());
  if (v.entries.rows() != n || v.entries.cols() != n) throw DimensionError("V does not match the training set");

  BoostModel model;
  model.params = params;
  model.dim = train.dim();
  const Vector y = train.label_vector();
  model.base_score = y.mean();
  Vector yhat = Vector::Constant(n, model.base_score);

  for (std::size_t t = 0; t < params.num_trees; ++t) {
    const Vector g = yhat - y;
    TreeGrower grower(train.features, v.entries, g, params);
    RegressionTree tree = grower.grow();
    for (Eigen::Index i = 0; i < n; ++i) yhat[i] += params.learning_rate * tree.value(train.features.row(i).transpose());
    model.trees.push_back(std::move(tree));
  }
  return model;
}

double predict_boost(const BoostModel& model, const Vector& x) { return model.raw(x); }

Vector predict_boost(const BoostModel& model, const Matrix& x) {
  Vector out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) out[i] = model.raw(x.row(i).transpose());
  return out;
}

double predict_boost_proba(const BoostModel& model, const Eigen::Ref<const Vector>& x) {
  return std::clamp(model.raw(x), 0.0, 1.0);
}

std::string to_json(const BoostModel& model) {
  nlohmann::ordered_json j;
  j["type"] = "vboost";
  j["params"] = {{"num_trees", model.params.num_trees},         {"max_depth", model.params.max_depth},
                 {"lambda", model.params.lambda},               {"gamma_tree", model.params.gamma_tree},
                 {"learning_rate", model.params.learning_rate}, {"min_leaf_size", model.params.min_leaf_size}};
  j["base_score"] = model.base_score;
  j["dim"] = model.dim;
  auto trees = nlohmann::ordered_json::array();
  for (const auto& tree : model.trees) {
    auto nodes = nlohmann::ordered_json::array();
    for (const auto& node : tree.nodes) {
      if (node.is_leaf()) {
        nodes.push_back({{"weight", node.weight}});
      } else {
        nodes.push_back(
            {{"feature", node.feature}, {"threshold", node.threshold}, {"left", node.left}, {"right", node.right}});
      }
    }
    trees.push_back(std::move(nodes));
  }
  j["trees"] = std::move(trees);
  return j.dump(2);
}

BoostModel boost_from_json(const std::string& text) {
  try {
    auto j = nlohmann::json::parse(text);
    if (j.contains("type") && j.at("type").get<std::string>() != "vboost") throw SchemaError("model type is not vboost");
    BoostModel m;
    const auto& p = j.at("params");
    m.params.num_trees = p.at("num_trees").get<std::size_t>();
    m.params.max_depth = p.at("max_depth").get<std::size_t>();
    m.params.lambda = p.at("lambda").get<double>();
    m.params.gamma_tree = p.at("gamma_tree").get<double>();
    m.params.learning_rate = p.at("learning_rate").get<double>();
    m.params.min_leaf_size = p.at("min_leaf_size").get<std::size_t>();
    m.base_score = j.at("base_score").get<double>();
    m.dim = j.at("dim").get<std::size_t>();
    for (const auto& jt : j.at("trees")) {
      RegressionTree tree;
      int leaf = 0;
      for (const auto& jn : jt) {
        TreeNode node;
        if (jn.contains("feature")) {
          node.feature = jn.at("feature").get<int>();
          node.threshold = jn.at("threshold").get<double>();
          node.left = jn.at("left").get<int>();
          node.right = jn.at("right").get<int>();
        } else {
          node.weight = jn.at("weight").get<double>();
          node.leaf = leaf++;
        }
        tree.nodes.push_back(node);
      }
      const auto count = static_cast<int>(tree.nodes.size());
      for (const auto& node : tree.nodes) {
        if (node.is_leaf()) continue;
        if (node.left <= 0 || node.left >= count || node.right <= 0 || node.right >= count ||
            node.feature >= static_cast<int>(m.dim))
          throw SchemaError("malformed tree node");
      }
      if (tree.nodes.empty()) throw SchemaError("empty tree");
      m.trees.push_back(std::move(tree));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("model JSON: ") + e.what());
  }
}

}  // namespace vshift

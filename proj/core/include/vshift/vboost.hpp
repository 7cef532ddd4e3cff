#pragma once

#include <span>
#include <string>
#include <vector>

#include "vshift/dataset.hpp"
#include "vshift/vmatrix.hpp"

namespace vshift {

struct BoostParams {
  std::size_t num_trees = 10;
  std::size_t max_depth = 3;
  /// Penalty on squared leaf weights, (lambda/2) sum w^2.
  double lambda = 1.0;
  /// Penalty per leaf.
  double gamma_tree = 0.0;
  double learning_rate = 1.0;
  std::size_t min_leaf_size = 5;

  void validate() const;
};

struct TreeNode {
  /// -1 on leaves.
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double weight = 0.0;
  /// Position of the leaf in the tree's leaf numbering; -1 on internal nodes.
  int leaf = -1;

  bool is_leaf() const noexcept { return feature < 0; }
};

/// Binary tree; a row goes left when x[feature] < threshold.
struct RegressionTree {
  std::vector<TreeNode> nodes;

  std::size_t leaf_count() const;
  const TreeNode& leaf_for(const Eigen::Ref<const Vector>& x) const;
  double value(const Eigen::Ref<const Vector>& x) const { return leaf_for(x).weight; }
};

struct BoostModel {
  std::vector<RegressionTree> trees;
  BoostParams params;
  double base_score = 0.0;
  std::size_t dim = 0;

  double raw(const Eigen::Ref<const Vector>& x) const;
};

/// Quantities of the V-coupled leaf problem for a fixed partition of the
/// training rows into T leaves.
struct LeafSystem {
  Matrix c;  ///< C_lm = sum_{i in I_l} sum_{j in I_m} V_ij
  Vector a;  ///< A_k = sum_i g_i sum_{j in I_k} V_ij
  Vector b;  ///< B_k = sum_j g_j sum_{i in I_k} V_ij
  Matrix d;  ///< C + C^T + lambda I
  Vector u;  ///< -(A + B)
};

/// `assignment[i]` is the leaf of training row i, in [0, leaves).
/// `g` holds residuals yhat - y.
LeafSystem leaf_system(std::span<const std::size_t> assignment, std::size_t leaves, const Vector& g,
                       const Matrix& v, double lambda);

/// Solves D w = U by Cholesky; throws SolverError when D is not positive definite.
Vector solve_leaf_weights(const Matrix& d, const Vector& u);

/// -1/2 U^T D^-1 U + gamma_tree T, valid when V is symmetric.
double tree_objective(const Matrix& d, const Vector& u, double gamma_tree, std::size_t leaves);

/// -U^T D^-1 U + U^T D^-1 C^T D^-1 U + lambda/2 U^T D^-1 D^-1 U + gamma_tree T, for any V.
double tree_objective_general(const LeafSystem& sys, double lambda, double gamma_tree, std::size_t leaves);

/// Round objective at leaf weights w, up to constants:
/// w^T (A + B) + w^T C w + lambda/2 w^T w.
double leaf_objective(const LeafSystem& sys, const Vector& w, double lambda);

/// Sum_ij (y_i - yhat_i)(y_j - yhat_j) V_ij.
double coupled_loss(const Vector& y, const Vector& yhat, const Matrix& v);

BoostModel fit_boost(const LabeledDataset& train, const VMatrix& v, const BoostParams& params);

/// base_score + learning_rate * sum of leaf weights.
double predict_boost(const BoostModel& model, const Vector& x);
Vector predict_boost(const BoostModel& model, const Matrix& x);
/// predict_boost clamped to [0, 1].
double predict_boost_proba(const BoostModel& model, const Eigen::Ref<const Vector>& x);

std::string to_json(const BoostModel& model);
BoostModel boost_from_json(const std::string& text);

}  // namespace vshift

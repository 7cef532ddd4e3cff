#pragma once

#include <ostream>
#include <span>
#include <string>

#include "vshift/dataset.hpp"

namespace vshift {

enum class VKind { empirical_multiplicative, empirical_additive, analytic_uniform, analytic_gaussian, identity, diagonal };

std::string to_string(VKind k);

/// Symmetric N x N loss-coupling matrix. The weight function phi is fixed at 1.
struct VMatrix {
  Matrix entries;
  VKind kind = VKind::identity;

  std::size_t size() const noexcept { return static_cast<std::size_t>(entries.rows()); }
};

/// V(i,j) = (1/M) sum_q prod_k [t_q^k >= max(x_i^k, x_j^k)].
///
/// Each training row is turned into a bitset over target rows marking the
/// targets that dominate it; an entry is the popcount of the intersection of
/// two bitsets divided once by M, so results are exact integer ratios.
VMatrix empirical_v(const Matrix& train_features, const TargetSample& target);

/// V(i,j) = (1/(nM)) sum_q sum_k [t_q^k >= max(x_i^k, x_j^k)].
VMatrix empirical_v_additive(const Matrix& train_features, const TargetSample& target);

/// True V under a product of U[-c^k, c^k] marginals.
VMatrix analytic_v_uniform(const Matrix& train_features, std::span<const double> c);

/// True V under a 1-d standard normal: (1 - erf(max(x_i, x_j)/sqrt 2)) / 2.
VMatrix analytic_v_gaussian(const Matrix& train_features);

VMatrix identity_v(std::size_t n);
VMatrix diagonal_v(std::span<const double> weights);

/// Row-major CSV of the entries, 17 significant digits.
void write_csv(std::ostream& os, const VMatrix& v);

/// (1/N^2) l^T V l, the V-weighted squared distance for residuals l.
double rho_squared(const VMatrix& v, const Vector& residuals);

}  // namespace vshift

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace ppou {

enum class BasisFamily { kMonomial, kChebyshev };

/// Number of multivariate polynomials of total degree <= degree in
/// latent_dim variables: binomial(latent_dim + degree, degree).
std::int64_t basis_size(int latent_dim, int degree);

/// Multivariate polynomial basis of fixed total degree over latent
/// coordinates. Each basis function is a product of per-coordinate
/// univariate factors (plain powers or Chebyshev polynomials of the first
/// kind). The exponent table is graded-lexicographic with the constant
/// term first, so serialized coefficient vectors are portable.
///
/// Immutable after construction; evaluation is pure and safe to call from
/// any number of threads.
class PolyBasis {
 public:
  PolyBasis() : PolyBasis(1, 0, BasisFamily::kChebyshev) {}
  PolyBasis(int latent_dim, int degree, BasisFamily family);

  int latent_dim() const { return latent_dim_; }
  int degree() const { return degree_; }
  BasisFamily family() const { return family_; }
  int size() const { return static_cast<int>(exponents_.size()); }
  const std::vector<std::vector<int>>& exponent_table() const { return exponents_; }

  /// Values p_k(point) for all k. Chebyshev coordinates outside [-1, 1]
  /// are evaluated by the same recurrence (the polynomials are global)
  /// but counted in out_of_range_count().
  Eigen::VectorXd eval(const Eigen::VectorXd& point) const;
  void eval(const Eigen::VectorXd& point, Eigen::VectorXd& out) const;

  /// Values plus the size() x latent_dim Jacobian d p_k / d point_i.
  void eval_with_grad(const Eigen::VectorXd& point, Eigen::VectorXd& values,
                      Eigen::MatrixXd& jacobian) const;

  /// Scratch buffers for the per-coordinate factor tables; passing one in
  /// keeps repeated evaluation allocation-free.
  struct Workspace {
    Eigen::MatrixXd factors;
    Eigen::MatrixXd derivs;
  };
  void eval(const Eigen::VectorXd& point, Eigen::VectorXd& out, Workspace& ws) const;
  void eval_with_grad(const Eigen::VectorXd& point, Eigen::VectorXd& values,
                      Eigen::MatrixXd& jacobian, Workspace& ws) const;

  /// Row n = eval(points.row(n)).
  Eigen::MatrixXd design_matrix(const Eigen::MatrixXd& points) const;

  /// Diagnostic: how many Chebyshev coordinate evaluations fell outside
  /// [-1, 1] since the last reset. Process-wide.
  static std::uint64_t out_of_range_count();
  static void reset_out_of_range_count();

  bool operator==(const PolyBasis& other) const {
    return latent_dim_ == other.latent_dim_ && degree_ == other.degree_ &&
           family_ == other.family_;
  }

 private:
  // Fills per-coordinate factor values factors(i, e) for e = 0..degree
  // (and optionally derivatives) at the given point.
  void factor_table(const Eigen::VectorXd& point, Eigen::MatrixXd& factors,
                    Eigen::MatrixXd* derivs) const;

  int latent_dim_;
  int degree_;
  BasisFamily family_;
  std::vector<std::vector<int>> exponents_;
};

}  // namespace ppou

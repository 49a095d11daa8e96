// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

namespace ppou {

/// Per-coordinate affine map z = (x - center) / half taking the training
/// inputs onto [-1, 1]^d. Stored with the model so predictions reuse the
/// exact training-time map. Default state is the identity.
struct Standardizer {
  Eigen::VectorXd center;  // empty => identity
  Eigen::VectorXd half;

  bool is_identity() const { return center.size() == 0; }

  /// Per-coordinate fit: each column lands exactly on [-1, 1].
  static Standardizer fit(const Eigen::MatrixXd& x) {
    Standardizer s;
    const Eigen::VectorXd lo = x.colwise().minCoeff();
    const Eigen::VectorXd hi = x.colwise().maxCoeff();
    s.center = 0.5 * (hi + lo);
    s.half = 0.5 * (hi - lo);
    for (Eigen::Index i = 0; i < s.half.size(); ++i) {
      if (s.half(i) == 0.0) s.half(i) = 1.0;  // constant column: shift only
    }
    return s;
  }

  /// Isotropic fit: centered per coordinate but scaled by one shared
  /// factor, so the data's geometry (distance ratios) is preserved and the
  /// image still lies inside [-1, 1]^d. Preferred for manifold-structured
  /// inputs where relative scale carries signal.
  static Standardizer fit_isotropic(const Eigen::MatrixXd& x) {
    Standardizer s;
    const Eigen::VectorXd lo = x.colwise().minCoeff();
    const Eigen::VectorXd hi = x.colwise().maxCoeff();
    s.center = 0.5 * (hi + lo);
    const double h = 0.5 * (hi - lo).maxCoeff();
    s.half = Eigen::VectorXd::Constant(x.cols(), h > 0.0 ? h : 1.0);
    return s;
  }

  Eigen::VectorXd apply(const Eigen::VectorXd& x) const {
    if (is_identity()) return x;
    return (x - center).cwiseQuotient(half);
  }

  Eigen::VectorXd invert(const Eigen::VectorXd& z) const {
    if (is_identity()) return z;
    return z.cwiseProduct(half) + center;
  }

  Eigen::MatrixXd apply_rows(const Eigen::MatrixXd& x) const {
    if (is_identity()) return x;
    return (x.rowwise() - center.transpose()) * half.cwiseInverse().asDiagonal();
  }
};

}  // namespace ppou

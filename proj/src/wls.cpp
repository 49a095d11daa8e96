// SPDX-License-Identifier: Apache-2.0
#include "ppou/wls.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "ppou/common.hpp"

namespace ppou {

WlsResult solve_wls(const Eigen::MatrixXd& design, const Eigen::VectorXd& weights,
                    const Eigen::VectorXd& targets, const WlsOptions& options) {
  const Eigen::Index n = design.rows();
  const Eigen::Index k = design.cols();
  if (n < 1 || k < 1) throw std::invalid_argument("solve_wls: need N >= 1 and K >= 1");
  if (weights.size() != n || targets.size() != n) {
    throw std::invalid_argument("solve_wls: weights/targets length must match design rows");
  }
  if (!design.allFinite() || !weights.allFinite() || !targets.allFinite()) {
    throw NumericError("solve_wls: non-finite entries in the problem");
  }
  if ((weights.array() < 0.0).any()) {
    throw std::invalid_argument("solve_wls: weights must be nonnegative");
  }
  if (options.ridge < 0.0) throw std::invalid_argument("solve_wls: ridge must be >= 0");

  WlsResult result;
  const double eps_cluster =
      options.epsilon_cluster >= 0.0 ? options.epsilon_cluster : 1e-10 * static_cast<double>(n);
  if (weights.sum() < eps_cluster) {
    result.empty_cluster = true;
    return result;
  }

  const Eigen::VectorXd sw = weights.cwiseSqrt();
  const Eigen::MatrixXd a = sw.asDiagonal() * design;
  const Eigen::VectorXd b = sw.cwiseProduct(targets);

  auto solve_with_ridge = [&](double lambda) {
    if (lambda == 0.0) {
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
      result.effective_rank = static_cast<int>(qr.rank());
      result.coeffs = qr.solve(b);
      return;
    }
    Eigen::MatrixXd aug(n + k, k);
    aug.topRows(n) = a;
    aug.bottomRows(k) = std::sqrt(lambda) * Eigen::MatrixXd::Identity(k, k);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + k);
    rhs.head(n) = b;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(aug);
    result.coeffs = qr.solve(rhs);
  };

  solve_with_ridge(options.ridge);
  if (options.ridge > 0.0) {
    // Rank reported for the unregularized scaled design.
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    result.effective_rank = static_cast<int>(qr.rank());
    result.used_ridge = true;
    result.ridge_value = options.ridge;
  } else if (result.effective_rank < k) {
    // Deficient and unregularized: fall back to an automatic ridge scaled
    // by the largest squared singular value.
    Eigen::BDCSVD<Eigen::MatrixXd> svd(a);
    const double smax = svd.singularValues().size() > 0 ? svd.singularValues()(0) : 0.0;
    const double lambda = 1e-10 * smax * smax;
    if (lambda > 0.0) {
      solve_with_ridge(lambda);
    } else {
      result.coeffs.setZero(k);
    }
    result.used_ridge = true;
    result.ridge_value = lambda;
  }

  result.residual_norm = (a * result.coeffs - b).norm();
  return result;
}

}  // namespace ppou

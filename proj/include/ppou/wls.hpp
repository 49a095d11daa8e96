// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

namespace ppou {

struct WlsOptions {
  double ridge = 0.0;
  // Clusters whose total weight falls below this are reported empty so the
  // caller can keep its previous coefficients. Negative means 1e-10 * N.
  double epsilon_cluster = -1.0;
};

struct WlsResult {
  Eigen::VectorXd coeffs;
  int effective_rank = 0;
  double residual_norm = 0.0;  // sqrt(sum_n w_n (y_n - P[n].c)^2)
  bool used_ridge = false;
  double ridge_value = 0.0;
  bool empty_cluster = false;
};

/// Minimizes sum_n w_n (y_n - design[n].c)^2 + ridge*|c|^2 by scaling rows
/// with sqrt(w) and factorizing with a rank-revealing column-pivoted QR.
/// When the scaled design is rank-deficient and no ridge was requested, an
/// automatic ridge of 1e-10 times the largest squared singular value is
/// applied and reported via used_ridge/ridge_value.
///
/// Pure function; safe to run for different clusters concurrently.
WlsResult solve_wls(const Eigen::MatrixXd& design, const Eigen::VectorXd& weights,
                    const Eigen::VectorXd& targets, const WlsOptions& options = {});

}  // namespace ppou

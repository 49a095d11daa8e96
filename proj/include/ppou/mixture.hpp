// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "ppou/dense_net.hpp"
#include "ppou/poly_basis.hpp"
#include "ppou/standardizer.hpp"

namespace ppou {

enum class Architecture { kBasic, kSerial, kParallel };

/// Mixture-of-polynomial-experts model: a softmax classifier produces a
/// partition of unity over `clusters()` components, each carrying a
/// polynomial mean in the latent coordinates and a variance. The encoder
/// maps inputs to the latent space (identity for kBasic). sigma0_2 is a
/// fixed background-noise variance, not trained.
struct PPOUModel {
  Architecture architecture = Architecture::kBasic;
  DenseNet encoder;     // ignored for kBasic
  DenseNet classifier;  // softmax head over clusters()
  PolyBasis basis;
  Eigen::MatrixXd coeffs;  // J x K, row j = expert j's coefficients
  Eigen::VectorXd sigma2;  // J, clamped at sigma_floor2
  double sigma0_2 = 0.0;
  double sigma_floor2 = 1e-30;
  int input_dim = 0;
  Standardizer standardizer;

  int clusters() const { return static_cast<int>(coeffs.rows()); }
  int latent_dim() const { return basis.latent_dim(); }
  bool has_encoder() const { return architecture != Architecture::kBasic; }
};

/// Posterior responsibilities from an E-step. Rows of `w` are nonnegative
/// and sum to one. The background-noise variant also carries the per-sample
/// conditional means b and the per-cluster conditional variances B (or a
/// per-sample matrix of them when the dataset provides sample-specific
/// noise floors).
struct Responsibilities {
  Eigen::MatrixXd w;                  // N x J
  Eigen::MatrixXd b_means;            // N x J; empty for the plain E-step
  Eigen::VectorXd b_vars;             // J; empty for the plain E-step
  Eigen::MatrixXd b_vars_per_sample;  // N x J; only with per-sample floors
  long underflow_fallbacks = 0;

  bool has_noise_fields() const { return b_means.size() > 0; }
};

/// Latent coordinates psi(x) after input standardization (the input itself
/// for the basic architecture).
Eigen::VectorXd latent(const PPOUModel& model, const Eigen::VectorXd& x);

/// Classifier input for a sample: latent coordinates for the serial
/// architecture, standardized input otherwise.
Eigen::VectorXd classifier_input(const PPOUModel& model, const Eigen::VectorXd& x);

/// Partition weights phi(x): softmax classifier output, length J.
Eigen::VectorXd partition_weights(const PPOUModel& model, const Eigen::VectorXd& x);

/// Expert means mu_j(psi(x)) = c_j . p(psi(x)), length J.
Eigen::VectorXd cluster_means(const PPOUModel& model, const Eigen::VectorXd& x);

/// E[Y(x)] = sum_j phi_j mu_j.
double predict_mean(const PPOUModel& model, const Eigen::VectorXd& x);

/// Var[Y(x)] = sum_j phi_j (sigma_j^2 + sigma0^2 + mu_j^2) - E[Y]^2.
double predict_var(const PPOUModel& model, const Eigen::VectorXd& x);

struct Moments {
  double mean = 0.0;
  double var = 0.0;
  int argmax_partition = 0;
};
Moments predict_moments(const PPOUModel& model, const Eigen::VectorXd& x);

/// Batched helpers used by the trainer and the E-step: partition weights
/// and expert means for every row of X (raw inputs).
void compute_phi_mu(const PPOUModel& model, const Eigen::MatrixXd& x, Eigen::MatrixXd& phi,
                    Eigen::MatrixXd& mu, int workers = 1);

/// Posterior responsibilities, computed in log space with per-row max
/// subtraction. A row whose unnormalized weights all degenerate falls back
/// to phi(x) and increments underflow_fallbacks.
Responsibilities e_step(const PPOUModel& model, const Eigen::MatrixXd& x,
                        const Eigen::VectorXd& y, int workers = 1);

struct NoiseEStepOptions {
  // Density evaluated with sigma_j (as printed) unless convolved is set,
  // in which case sigma_j^2 + sigma0^2 enters the exponent and prefactor.
  bool convolved_responsibilities = false;
  // Optional per-sample noise floor sigma0^2(x); empty means the model's
  // constant sigma0_2.
  Eigen::VectorXd noise_floor;
};

/// E-step of the background-noise variant: responsibilities as above plus
/// b_j^(n) = mu_j + sigma_j^2/(sigma_j^2 + sigma0^2) (y - mu_j) and
/// B_j = sigma_j^2 - sigma_j^4/(sigma_j^2 + sigma0^2). With sigma0^2 = 0
/// this reduces exactly (bitwise) to e_step with b = y, B = 0.
Responsibilities e_step_noise(const PPOUModel& model, const Eigen::MatrixXd& x,
                              const Eigen::VectorXd& y, const NoiseEStepOptions& options = {},
                              int workers = 1);

struct SigmaUpdate {
  Eigen::VectorXd sigma2;
  std::vector<int> empty_clusters;  // clusters left unchanged
};

/// Weighted mean squared residual per cluster, clamped at the model's
/// sigma_floor2. Clusters with total weight below epsilon_cluster keep
/// their previous variance and are flagged.
SigmaUpdate update_sigma(const PPOUModel& model, const Responsibilities& resp,
                         const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                         double epsilon_cluster = -1.0);

/// Background-noise variant: weighted mean of (b - mu)^2 + B per cluster.
SigmaUpdate update_sigma_noise(const PPOUModel& model, const Responsibilities& resp,
                               const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                               double epsilon_cluster = -1.0);

// Core routines on precomputed phi/mu matrices. The public operations
// above and the trainer both route through these, so cached and uncached
// paths agree bitwise.
Responsibilities e_step_core(const Eigen::MatrixXd& phi, const Eigen::MatrixXd& mu,
                             const Eigen::VectorXd& sigma2, const Eigen::VectorXd& y,
                             int workers);
Responsibilities e_step_noise_core(const Eigen::MatrixXd& phi, const Eigen::MatrixXd& mu,
                                   const Eigen::VectorXd& sigma2, double sigma0_2,
                                   const Eigen::VectorXd& y, const NoiseEStepOptions& options,
                                   int workers);
SigmaUpdate update_sigma_core(const Eigen::MatrixXd& mu, const Responsibilities& resp,
                              const Eigen::VectorXd& y, const Eigen::VectorXd& sigma2_prev,
                              double sigma_floor2, double epsilon_cluster);
SigmaUpdate update_sigma_noise_core(const Eigen::MatrixXd& mu, const Responsibilities& resp,
                                    const Eigen::VectorXd& y, const Eigen::VectorXd& sigma2_prev,
                                    double sigma_floor2, double epsilon_cluster);

}  // namespace ppou

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "ppou/adam.hpp"
#include "ppou/data.hpp"
#include "ppou/mixture.hpp"

namespace ppou {

enum class LossKind { kEm, kAlternative };

struct NetSpec {
  int depth = 4;  // number of affine layers
  int width = 8;
  bool residual = false;
  Activation activation = Activation::kTanh;
};

enum class StandardizeMode { kIsotropic, kPerCoordinate };

/// Everything needed to build a fresh PPOUModel for a dataset.
struct ModelSpec {
  Architecture architecture = Architecture::kBasic;
  NetSpec encoder{4, 16, false, Activation::kTanh};
  int latent_dim = 0;  // 0 means "input dimension" (basic architecture)
  NetSpec classifier{4, 8, true, Activation::kTanh};
  int clusters = 4;
  BasisFamily family = BasisFamily::kChebyshev;
  int degree = 2;
  // Isotropic scaling preserves distance ratios, which matters for
  // manifold-structured inputs; per-coordinate stretches every column to
  // exactly [-1, 1]. Identical for one-dimensional data.
  StandardizeMode standardize = StandardizeMode::kIsotropic;
};

enum class PretrainInput { kAuto, kRaw, kLatent };

struct PretrainConfig {
  int clusters = 0;  // 0 disables pretraining; otherwise must equal J
  int epochs = 0;
  PretrainInput input = PretrainInput::kAuto;
};

struct TrainConfig {
  LossKind loss = LossKind::kEm;
  int max_em_iters = 500;
  int grad_steps_per_m = 10;
  AdamParams adam{1e-2, 0.9, 0.999, 1e-8};
  long batch_size = 0;  // 0 = full batch; otherwise minibatch per gradient step
  PretrainConfig pretrain;
  double rel_elbo_tol = 1e-8;
  int patience = 20;
  std::uint64_t seed = 0;
  bool noise_model = false;
  double sigma0_2 = 0.0;
  bool convolved_responsibilities = false;
  int workers = 1;
  double epsilon_cluster = -1.0;   // <0 -> 1e-10 * N
  double sigma_floor_rel = 1e-8;   // sigma_floor^2 = rel * Var(y)
};

struct LossGrads {
  double value = 0.0;
  NetGrads encoder;
  NetGrads classifier;
};

struct IterationMetrics {
  int iter = 0;
  double elbo = 0.0;
  double loss = 0.0;
  double rel_l2_train = 0.0;
  double rel_l2_test = std::numeric_limits<double>::quiet_NaN();
  Eigen::VectorXd occupancy;  // sum_n w_j^(n), length J
  Eigen::VectorXd sigma2;
  int empty_clusters = 0;
};

struct EvalMetrics {
  double rel_l2 = 0.0;
  double abs_l2 = 0.0;
  bool l2_normalized = true;  // false when |y| = 0 and rel_l2 is meaningless
  double mae = 0.0;
  double coverage95 = 0.0;
};

struct TrainResult {
  int iterations = 0;
  bool converged = false;
  double wall_seconds = 0.0;
  EvalMetrics train;
  EvalMetrics test;
  bool has_test = false;
};

struct TrainState {
  Responsibilities resp;
  AdamState opt_encoder;
  AdamState opt_classifier;
  int iter = 0;
  std::vector<double> elbo_history;
  std::vector<double> loss_history;
  long estep_fallbacks = 0;
  long empty_cluster_events = 0;
  std::mt19937_64 rng;
};

/// Builds a box-initialized model for `spec` over the given input
/// dimension. Coefficients start at zero, variances at one (the trainer
/// resets them to Var(y) before the first iteration). data_lo/data_hi
/// describe the standardized data's bounding box (the anchor region for
/// box initialization); empty vectors mean [-1, 1]^d.
PPOUModel build_model(const ModelSpec& spec, int input_dim, const Standardizer& standardizer,
                      std::uint64_t seed, const Eigen::VectorXd& data_lo = {},
                      const Eigen::VectorXd& data_hi = {});

/// Fits the standardizer named by the spec and builds the model with the
/// anchor box taken from the standardized training inputs.
PPOUModel build_model_for_data(const ModelSpec& spec, const Eigen::MatrixXd& x,
                               std::uint64_t seed);

/// EM loss L = L1 + L2: cross entropy between responsibilities and the
/// classifier output, plus the variance-weighted squared residuals.
/// Gradients cover the classifier and (for serial/parallel) the encoder.
LossGrads em_loss(const PPOUModel& model, const Responsibilities& resp, const Eigen::MatrixXd& x,
                  const Eigen::VectorXd& y, int workers = 1);

/// Alternative loss: L1 plus the squared error of the overall prediction
/// sum_j phi_j mu_j.
LossGrads alt_loss(const PPOUModel& model, const Responsibilities& resp, const Eigen::MatrixXd& x,
                   const Eigen::VectorXd& y, int workers = 1);

/// Evidence lower bound, including the -sum w log w entropy term so that
/// the bound is tight (equals the marginal log-likelihood) at posterior
/// responsibilities.
double elbo(const PPOUModel& model, const Responsibilities& resp, const Eigen::MatrixXd& x,
            const Eigen::VectorXd& y, int workers = 1);

/// One EM iteration: E-step, grad_steps_per_m Adam steps on the configured
/// loss, per-cluster weighted least-squares coefficient solves, variance
/// update. Returns the post-iteration metrics.
IterationMetrics em_iteration(PPOUModel& model, TrainState& state, const Dataset& data,
                              const Dataset* test_data, const TrainConfig& config);

/// K-means pretraining of the classifier (and encoder for the serial
/// architecture) against hard cluster labels.
void kmeans_pretrain(PPOUModel& model, const Eigen::MatrixXd& x, const TrainConfig& config,
                     TrainState& state);

/// Relative l2 error, MAE and 95%-interval coverage of the model on (x, y).
EvalMetrics evaluate(const PPOUModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                     int workers = 1);

using MetricsSink = std::function<void(const IterationMetrics&)>;

/// Full training run: initialization, optional pretraining, EM loop with
/// ELBO-based convergence control.
TrainResult train(PPOUModel& model, const Dataset& train_data, const Dataset* test_data,
                  const TrainConfig& config, const MetricsSink& sink = {});

struct FoldMetrics {
  EvalMetrics test;
  double train_rel_l2 = 0.0;
  int iterations = 0;
};

struct CrossValResult {
  std::vector<FoldMetrics> folds;
  std::vector<std::vector<long>> fold_test_rows;  // original row indices per fold
  double mean_rel_l2 = 0.0;
  double ci95_half_width = 0.0;
};

/// Seeded k-fold cross-validation: shuffle once, take k contiguous folds,
/// train on k-1 and test on the held-out fold.
CrossValResult cross_validate(const Dataset& data, const ModelSpec& spec,
                              const TrainConfig& config, int k, std::uint64_t seed);

struct GlobalPolyFit {
  Eigen::VectorXd coeffs;  // Chebyshev coefficients on [-1, 1]
  double x_lo = 0.0;
  double x_hi = 1.0;
  int degree = 0;
  double rel_l2 = 0.0;  // fit error against the training targets
};

/// Unweighted global Chebyshev fit on 1D inputs mapped affinely to [-1,1];
/// the comparison baseline for the heterogeneous-noise benchmark.
GlobalPolyFit fit_global_poly(const Eigen::VectorXd& x, const Eigen::VectorXd& y, int degree);
double eval_global_poly(const GlobalPolyFit& fit, double x);
Eigen::VectorXd eval_global_poly(const GlobalPolyFit& fit, const Eigen::VectorXd& x);

/// Splitmix-style mixing for deriving independent sub-seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

}  // namespace ppou

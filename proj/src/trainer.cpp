// SPDX-License-Identifier: Apache-2.0
#include "ppou/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "ppou/common.hpp"
#include "ppou/kmeans.hpp"
#include "ppou/parallel.hpp"
#include "ppou/wls.hpp"

namespace ppou {

namespace {

constexpr double kLogFloorArg = 1e-300;
constexpr double kTwoPi = 6.28318530717958647692;

double safe_log(double v) { return std::log(v < kLogFloorArg ? kLogFloorArg : v); }

double variance_of(const Eigen::VectorXd& y) {
  if (y.size() < 1) return 0.0;
  const double mean = y.mean();
  return (y.array() - mean).square().sum() / static_cast<double>(y.size());
}

double effective_epsilon_cluster(const TrainConfig& cfg, long n) {
  return cfg.epsilon_cluster >= 0.0 ? cfg.epsilon_cluster : 1e-10 * static_cast<double>(n);
}

// Shared value+gradient pass for both loss functions. `rows` restricts the
// sum to a minibatch; responsibilities are always indexed by original row.
LossGrads loss_impl(const PPOUModel& model, const Responsibilities& resp,
                    const Eigen::MatrixXd& x, const Eigen::VectorXd& y, LossKind kind,
                    int workers, const std::vector<long>* rows) {
  const long n_all = x.rows();
  const long n = rows != nullptr ? static_cast<long>(rows->size()) : n_all;
  const int j = model.clusters();
  if (resp.w.rows() != n_all || resp.w.cols() != j) {
    throw std::invalid_argument("loss: responsibilities shape does not match data/model");
  }
  const bool has_enc = model.has_encoder();
  const bool serial = model.architecture == Architecture::kSerial;

  const int nchunks = static_cast<int>(std::max<long>(1, std::min<long>(workers, n)));
  std::vector<double> partial_loss(static_cast<std::size_t>(nchunks), 0.0);
  std::vector<NetGrads> partial_clf(static_cast<std::size_t>(nchunks));
  std::vector<NetGrads> partial_enc(static_cast<std::size_t>(nchunks));
  for (int c = 0; c < nchunks; ++c) {
    partial_clf[static_cast<std::size_t>(c)].set_zero_like(model.classifier);
    if (has_enc) partial_enc[static_cast<std::size_t>(c)].set_zero_like(model.encoder);
  }

  parallel_chunks(n, nchunks, [&](int chunk, std::int64_t b, std::int64_t e) {
    Tape enc_tape, clf_tape;
    PolyBasis::Workspace pws;
    Eigen::VectorXd basis_vals;
    Eigen::MatrixXd basis_jac;
    Eigen::VectorXd dphi(j), dmu(j);
    auto& clf_acc = partial_clf[static_cast<std::size_t>(chunk)];
    auto* enc_acc = has_enc ? &partial_enc[static_cast<std::size_t>(chunk)] : nullptr;
    double local = 0.0;

    for (std::int64_t i = b; i < e; ++i) {
      const long r = rows != nullptr ? (*rows)[static_cast<std::size_t>(i)] : i;
      const Eigen::VectorXd z = model.standardizer.apply(x.row(r).transpose());
      const Eigen::VectorXd t = has_enc ? forward(model.encoder, z, enc_tape) : z;
      const Eigen::VectorXd clf_in = serial ? t : z;
      const Eigen::VectorXd phi = forward(model.classifier, clf_in, clf_tape);
      if (has_enc) {
        model.basis.eval_with_grad(t, basis_vals, basis_jac, pws);
      } else {
        model.basis.eval(t, basis_vals, pws);
      }
      const Eigen::VectorXd mu = model.coeffs * basis_vals;

      // L1: cross entropy against the responsibilities, log clamped.
      double l1 = 0.0;
      for (int c = 0; c < j; ++c) {
        const double w = resp.w(r, c);
        l1 -= w * safe_log(phi(c));
        dphi(c) = phi(c) >= kLogFloorArg ? -w / phi(c) : 0.0;
      }

      double l2 = 0.0;
      if (kind == LossKind::kEm) {
        for (int c = 0; c < j; ++c) {
          const double res = y(r) - mu(c);
          l2 += resp.w(r, c) * res * res / (2.0 * model.sigma2(c));
          dmu(c) = -resp.w(r, c) * res / model.sigma2(c);
        }
      } else {
        const double yhat = phi.dot(mu);
        const double err = y(r) - yhat;
        l2 = err * err;
        for (int c = 0; c < j; ++c) {
          dphi(c) += -2.0 * err * mu(c);
          dmu(c) = -2.0 * err * phi(c);
        }
      }
      local += l1 + l2;

      const Eigen::VectorXd g_clf_in = backward(model.classifier, clf_tape, dphi, clf_acc);
      if (has_enc) {
        Eigen::VectorXd g_t = basis_jac.transpose() * (model.coeffs.transpose() * dmu);
        if (serial) g_t += g_clf_in;
        backward(model.encoder, enc_tape, g_t, *enc_acc);
      }
    }
    partial_loss[static_cast<std::size_t>(chunk)] = local;
  });

  LossGrads out;
  out.classifier.set_zero_like(model.classifier);
  if (has_enc) out.encoder.set_zero_like(model.encoder);
  for (int c = 0; c < nchunks; ++c) {
    out.value += partial_loss[static_cast<std::size_t>(c)];
    out.classifier.add_scaled(partial_clf[static_cast<std::size_t>(c)], 1.0);
    if (has_enc) out.encoder.add_scaled(partial_enc[static_cast<std::size_t>(c)], 1.0);
  }
  if (!std::isfinite(out.value)) {
    throw NumericError("loss: non-finite value " + std::to_string(out.value) +
                       " (sigma2 min " + std::to_string(model.sigma2.minCoeff()) + ")");
  }
  return out;
}

double loss_value_core(const Eigen::MatrixXd& phi, const Eigen::MatrixXd& mu,
                       const Eigen::VectorXd& sigma2, const Eigen::VectorXd& y,
                       const Eigen::MatrixXd& w, LossKind kind) {
  const Eigen::Index n = y.size();
  const Eigen::Index j = sigma2.size();
  double l = 0.0;
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < j; ++c) l -= w(r, c) * safe_log(phi(r, c));
    if (kind == LossKind::kEm) {
      for (Eigen::Index c = 0; c < j; ++c) {
        const double res = y(r) - mu(r, c);
        l += w(r, c) * res * res / (2.0 * sigma2(c));
      }
    } else {
      const double err = y(r) - phi.row(r).dot(mu.row(r));
      l += err * err;
    }
  }
  return l;
}

double elbo_core(const Eigen::MatrixXd& phi, const Eigen::MatrixXd& mu,
                 const Eigen::VectorXd& sigma2, const Eigen::VectorXd& y,
                 const Eigen::MatrixXd& w, int workers) {
  const Eigen::Index n = y.size();
  const Eigen::Index j = sigma2.size();
  const int nchunks = static_cast<int>(std::max<Eigen::Index>(1, std::min<Eigen::Index>(workers, n)));
  std::vector<double> partial(static_cast<std::size_t>(nchunks), 0.0);
  Eigen::VectorXd log_norm(j);
  for (Eigen::Index c = 0; c < j; ++c) log_norm(c) = -0.5 * std::log(kTwoPi * sigma2(c));

  parallel_chunks(n, nchunks, [&](int chunk, std::int64_t b, std::int64_t e) {
    double local = 0.0;
    for (std::int64_t r = b; r < e; ++r) {
      for (Eigen::Index c = 0; c < j; ++c) {
        const double wv = w(r, c);
        if (wv <= 0.0) continue;  // 0 log 0 = 0
        const double res = y(r) - mu(r, c);
        const double log_joint =
            safe_log(phi(r, c)) + log_norm(c) - res * res / (2.0 * sigma2(c));
        local += wv * (log_joint - std::log(wv));
      }
    }
    partial[static_cast<std::size_t>(chunk)] = local;
  });
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

// phi rows for the current classifier given precomputed latents.
void classifier_phi(const PPOUModel& model, const Eigen::MatrixXd& x,
                    const Eigen::MatrixXd& latents, Eigen::MatrixXd& phi, int workers) {
  const Eigen::Index n = x.rows();
  phi.resize(n, model.clusters());
  const bool serial = model.architecture == Architecture::kSerial;
  parallel_chunks(n, workers, [&](int, std::int64_t b, std::int64_t e) {
    Tape tape;
    for (std::int64_t r = b; r < e; ++r) {
      const Eigen::VectorXd in = serial
                                     ? Eigen::VectorXd(latents.row(r).transpose())
                                     : model.standardizer.apply(x.row(r).transpose());
      phi.row(r) = forward(model.classifier, in, tape).transpose();
    }
  });
}

void compute_latents(const PPOUModel& model, const Eigen::MatrixXd& x, Eigen::MatrixXd& latents,
                     int workers) {
  const Eigen::Index n = x.rows();
  latents.resize(n, model.latent_dim());
  parallel_chunks(n, workers, [&](int, std::int64_t b, std::int64_t e) {
    Tape tape;
    for (std::int64_t r = b; r < e; ++r) {
      const Eigen::VectorXd z = model.standardizer.apply(x.row(r).transpose());
      latents.row(r) =
          model.has_encoder() ? forward(model.encoder, z, tape).transpose() : z.transpose();
    }
  });
}

void design_from_latents(const PolyBasis& basis, const Eigen::MatrixXd& latents,
                         Eigen::MatrixXd& design, int workers) {
  const Eigen::Index n = latents.rows();
  design.resize(n, basis.size());
  parallel_chunks(n, workers, [&](int, std::int64_t b, std::int64_t e) {
    PolyBasis::Workspace ws;
    Eigen::VectorXd row;
    for (std::int64_t r = b; r < e; ++r) {
      basis.eval(latents.row(r).transpose(), row, ws);
      design.row(r) = row.transpose();
    }
  });
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + salt * 0x9E3779B97F4A7C15ULL + 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

PPOUModel build_model(const ModelSpec& spec, int input_dim, const Standardizer& standardizer,
                      std::uint64_t seed, const Eigen::VectorXd& data_lo,
                      const Eigen::VectorXd& data_hi) {
  if (input_dim < 1) throw std::invalid_argument("build_model: input_dim must be >= 1");
  if (spec.clusters < 1) throw std::invalid_argument("build_model: clusters must be >= 1");
  const bool has_enc = spec.architecture != Architecture::kBasic;
  const int latent = has_enc ? spec.latent_dim : input_dim;
  if (latent < 1) {
    throw std::invalid_argument("build_model: latent_dim must be >= 1 for encoder architectures");
  }

  PPOUModel model;
  model.architecture = spec.architecture;
  model.input_dim = input_dim;
  model.standardizer = standardizer;
  model.basis = PolyBasis(latent, spec.degree, spec.family);

  const Eigen::VectorXd lo_d =
      data_lo.size() == input_dim ? data_lo : Eigen::VectorXd::Constant(input_dim, -1.0);
  const Eigen::VectorXd hi_d =
      data_hi.size() == input_dim ? data_hi : Eigen::VectorXd::Constant(input_dim, 1.0);
  if (has_enc) {
    model.encoder = box_init(net_widths(input_dim, spec.encoder.width, spec.encoder.depth, latent),
                             lo_d, hi_d, spec.encoder.activation, spec.encoder.residual,
                             OutputTransform::kTanh, mix_seed(seed, 0xE5C0DE))
                        .net;
  }
  const int clf_in = spec.architecture == Architecture::kSerial ? latent : input_dim;
  const Eigen::VectorXd lo_c = spec.architecture == Architecture::kSerial
                                   ? Eigen::VectorXd::Constant(clf_in, -1.0)
                                   : lo_d;
  const Eigen::VectorXd hi_c = spec.architecture == Architecture::kSerial
                                   ? Eigen::VectorXd::Constant(clf_in, 1.0)
                                   : hi_d;
  model.classifier =
      box_init(net_widths(clf_in, spec.classifier.width, spec.classifier.depth, spec.clusters),
               lo_c, hi_c, spec.classifier.activation, spec.classifier.residual,
               OutputTransform::kSoftmax, mix_seed(seed, 0xC1A55))
          .net;

  model.coeffs = Eigen::MatrixXd::Zero(spec.clusters, model.basis.size());
  model.sigma2 = Eigen::VectorXd::Ones(spec.clusters);
  return model;
}

PPOUModel build_model_for_data(const ModelSpec& spec, const Eigen::MatrixXd& x,
                               std::uint64_t seed) {
  const Standardizer standardizer = spec.standardize == StandardizeMode::kIsotropic
                                        ? Standardizer::fit_isotropic(x)
                                        : Standardizer::fit(x);
  const Eigen::MatrixXd z = standardizer.apply_rows(x);
  Eigen::VectorXd lo = z.colwise().minCoeff();
  Eigen::VectorXd hi = z.colwise().maxCoeff();
  // Degenerate (constant) coordinates get a sliver of width so the anchor
  // box stays nondegenerate.
  for (Eigen::Index i = 0; i < lo.size(); ++i) {
    if (!(hi(i) > lo(i))) {
      lo(i) -= 1e-6;
      hi(i) += 1e-6;
    }
  }
  return build_model(spec, static_cast<int>(x.cols()), standardizer, seed, lo, hi);
}

LossGrads em_loss(const PPOUModel& model, const Responsibilities& resp, const Eigen::MatrixXd& x,
                  const Eigen::VectorXd& y, int workers) {
  return loss_impl(model, resp, x, y, LossKind::kEm, workers, nullptr);
}

LossGrads alt_loss(const PPOUModel& model, const Responsibilities& resp, const Eigen::MatrixXd& x,
                   const Eigen::VectorXd& y, int workers) {
  return loss_impl(model, resp, x, y, LossKind::kAlternative, workers, nullptr);
}

double elbo(const PPOUModel& model, const Responsibilities& resp, const Eigen::MatrixXd& x,
            const Eigen::VectorXd& y, int workers) {
  Eigen::MatrixXd phi, mu;
  compute_phi_mu(model, x, phi, mu, workers);
  return elbo_core(phi, mu, model.sigma2, y, resp.w, workers);
}

EvalMetrics evaluate(const PPOUModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                     int workers) {
  const Eigen::Index n = x.rows();
  Eigen::VectorXd yhat(n), var(n);
  parallel_chunks(n, workers, [&](int, std::int64_t b, std::int64_t e) {
    for (std::int64_t r = b; r < e; ++r) {
      const Moments m = predict_moments(model, x.row(r).transpose());
      yhat(r) = m.mean;
      var(r) = m.var;
    }
  });
  EvalMetrics out;
  const double err_norm = (yhat - y).norm();
  const double y_norm = y.norm();
  out.abs_l2 = err_norm;
  out.l2_normalized = y_norm > 0.0;
  out.rel_l2 = out.l2_normalized ? err_norm / y_norm : err_norm;
  out.mae = (yhat - y).cwiseAbs().mean();
  long covered = 0;
  for (Eigen::Index r = 0; r < n; ++r) {
    const double half = 1.96 * std::sqrt(std::max(var(r), 0.0));
    if (std::abs(y(r) - yhat(r)) <= half) ++covered;
  }
  out.coverage95 = n > 0 ? static_cast<double>(covered) / static_cast<double>(n) : 0.0;
  return out;
}

IterationMetrics em_iteration(PPOUModel& model, TrainState& state, const Dataset& data,
                              const Dataset* test_data, const TrainConfig& config) {
  const long n = data.n();
  const int workers = std::max(1, config.workers);
  const double eps_cluster = effective_epsilon_cluster(config, n);

  // (1) E-step.
  if (config.noise_model) {
    NoiseEStepOptions opt;
    opt.convolved_responsibilities = config.convolved_responsibilities;
    opt.noise_floor = data.noise_floor;
    state.resp = e_step_noise(model, data.x, data.y, opt, workers);
  } else {
    state.resp = e_step(model, data.x, data.y, workers);
  }
  state.estep_fallbacks += state.resp.underflow_fallbacks;

  // (2) Gradient sub-steps on the configured loss, responsibilities fixed.
  for (int s = 0; s < config.grad_steps_per_m; ++s) {
    std::vector<long> batch;
    const std::vector<long>* rows = nullptr;
    if (config.batch_size > 0 && config.batch_size < n) {
      batch.resize(static_cast<std::size_t>(n));
      std::iota(batch.begin(), batch.end(), 0L);
      std::shuffle(batch.begin(), batch.end(), state.rng);
      batch.resize(static_cast<std::size_t>(config.batch_size));
      rows = &batch;
    }
    const LossGrads lg = loss_impl(model, state.resp, data.x, data.y, config.loss, workers, rows);
    adam_step(model.classifier, lg.classifier, state.opt_classifier, "classifier");
    if (model.has_encoder()) {
      adam_step(model.encoder, lg.encoder, state.opt_encoder, "encoder");
    }
  }

  // (3) Per-cluster weighted least-squares coefficient solves.
  Eigen::MatrixXd latents, design;
  compute_latents(model, data.x, latents, workers);
  design_from_latents(model.basis, latents, design, workers);
  const int j = model.clusters();
  std::vector<int> empty_flags(static_cast<std::size_t>(j), 0);
  WlsOptions wopt;
  wopt.epsilon_cluster = eps_cluster;
  parallel_chunks(j, workers, [&](int, std::int64_t b, std::int64_t e) {
    for (std::int64_t c = b; c < e; ++c) {
      const WlsResult res = solve_wls(design, state.resp.w.col(c), data.y, wopt);
      if (res.empty_cluster) {
        empty_flags[static_cast<std::size_t>(c)] = 1;  // coefficients frozen
      } else {
        model.coeffs.row(c) = res.coeffs.transpose();
      }
    }
  });

  // (4) Variance update with the new coefficients.
  Eigen::MatrixXd mu = design * model.coeffs.transpose();
  const SigmaUpdate upd =
      config.noise_model
          ? update_sigma_noise_core(mu, state.resp, data.y, model.sigma2, model.sigma_floor2,
                                    eps_cluster)
          : update_sigma_core(mu, state.resp, data.y, model.sigma2, model.sigma_floor2,
                              eps_cluster);
  model.sigma2 = upd.sigma2;

  // (5) Metrics for the completed iteration.
  IterationMetrics metrics;
  metrics.iter = ++state.iter;
  Eigen::MatrixXd phi;
  classifier_phi(model, data.x, latents, phi, workers);
  metrics.elbo = elbo_core(phi, mu, model.sigma2, data.y, state.resp.w, workers);
  metrics.loss = loss_value_core(phi, mu, model.sigma2, data.y, state.resp.w, config.loss);
  const Eigen::VectorXd yhat = (phi.array() * mu.array()).rowwise().sum();
  const double y_norm = data.y.norm();
  metrics.rel_l2_train =
      y_norm > 0.0 ? (yhat - data.y).norm() / y_norm : (yhat - data.y).norm();
  if (test_data != nullptr) {
    metrics.rel_l2_test = evaluate(model, test_data->x, test_data->y, workers).rel_l2;
  }
  metrics.occupancy = state.resp.w.colwise().sum().transpose();
  metrics.sigma2 = model.sigma2;
  // WLS and the sigma update share the weight totals, so flagging the WLS
  // side counts each empty cluster exactly once.
  int empties = 0;
  for (int f : empty_flags) empties += f;
  metrics.empty_clusters = empties;
  state.empty_cluster_events += empties;
  state.elbo_history.push_back(metrics.elbo);
  state.loss_history.push_back(metrics.loss);
  return metrics;
}

void kmeans_pretrain(PPOUModel& model, const Eigen::MatrixXd& x, const TrainConfig& config,
                     TrainState& state) {
  const int j = model.clusters();
  if (config.pretrain.clusters != j) {
    throw std::invalid_argument("kmeans_pretrain: kmeans_clusters (" +
                                std::to_string(config.pretrain.clusters) +
                                ") must equal the cluster count J (" + std::to_string(j) + ")");
  }
  if (x.rows() < j) {
    throw std::invalid_argument("kmeans_pretrain: more clusters than samples");
  }
  const int workers = std::max(1, config.workers);
  const bool serial = model.architecture == Architecture::kSerial;
  const bool on_latent = config.pretrain.input == PretrainInput::kLatent ||
                         (config.pretrain.input == PretrainInput::kAuto && serial);
  const std::uint64_t km_seed = mix_seed(config.seed, 0x6B6D65616E73ULL);

  Eigen::MatrixXd coords;
  if (on_latent && model.has_encoder()) {
    compute_latents(model, x, coords, workers);
  } else {
    coords = model.standardizer.apply_rows(x);
  }
  KMeansResult km = kmeans(coords, j, km_seed);
  if (j == 1) return;  // single partition: softmax output is constant 1

  const long n = x.rows();
  for (int epoch = 0; epoch < config.pretrain.epochs; ++epoch) {
    if (epoch > 0 && on_latent && model.has_encoder()) {
      // Latents drift as the encoder trains; refresh the clustering but
      // warm-start from the previous centroids so labels stay aligned.
      compute_latents(model, x, coords, workers);
      km = kmeans(coords, j, km_seed, 100, &km.centroids);
    }
    // One full-batch cross-entropy step against the hard labels.
    const int nchunks = static_cast<int>(std::max<long>(1, std::min<long>(workers, n)));
    std::vector<NetGrads> partial_clf(static_cast<std::size_t>(nchunks));
    std::vector<NetGrads> partial_enc(static_cast<std::size_t>(nchunks));
    for (int c = 0; c < nchunks; ++c) {
      partial_clf[static_cast<std::size_t>(c)].set_zero_like(model.classifier);
      if (model.has_encoder()) {
        partial_enc[static_cast<std::size_t>(c)].set_zero_like(model.encoder);
      }
    }
    const bool train_encoder = serial && model.has_encoder();
    parallel_chunks(n, nchunks, [&](int chunk, std::int64_t b, std::int64_t e) {
      Tape enc_tape, clf_tape;
      Eigen::VectorXd dphi(j);
      for (std::int64_t r = b; r < e; ++r) {
        const Eigen::VectorXd z = model.standardizer.apply(x.row(r).transpose());
        const Eigen::VectorXd t =
            model.has_encoder() ? forward(model.encoder, z, enc_tape) : z;
        const Eigen::VectorXd clf_in = serial ? t : z;
        const Eigen::VectorXd phi = forward(model.classifier, clf_in, clf_tape);
        dphi.setZero();
        const int lbl = km.labels[static_cast<std::size_t>(r)];
        dphi(lbl) = -1.0 / std::max(phi(lbl), kLogFloorArg);
        const Eigen::VectorXd g_in =
            backward(model.classifier, clf_tape, dphi, partial_clf[static_cast<std::size_t>(chunk)]);
        if (train_encoder) {
          backward(model.encoder, enc_tape, g_in, partial_enc[static_cast<std::size_t>(chunk)]);
        }
      }
    });
    NetGrads clf_grads;
    clf_grads.set_zero_like(model.classifier);
    for (const auto& p : partial_clf) clf_grads.add_scaled(p, 1.0);
    adam_step(model.classifier, clf_grads, state.opt_classifier, "classifier");
    if (train_encoder) {
      NetGrads enc_grads;
      enc_grads.set_zero_like(model.encoder);
      for (const auto& p : partial_enc) enc_grads.add_scaled(p, 1.0);
      adam_step(model.encoder, enc_grads, state.opt_encoder, "encoder");
    }
  }
}

TrainResult train(PPOUModel& model, const Dataset& train_data, const Dataset* test_data,
                  const TrainConfig& config, const MetricsSink& sink) {
  const auto t0 = std::chrono::steady_clock::now();
  const double var_y = variance_of(train_data.y);
  model.sigma_floor2 = std::max(config.sigma_floor_rel * var_y, 1e-30);
  model.sigma2.setConstant(std::max(var_y, model.sigma_floor2));
  model.sigma0_2 = config.noise_model ? config.sigma0_2 : 0.0;

  TrainState state;
  state.rng.seed(mix_seed(config.seed, 0x7EA1A));
  state.opt_classifier.init_like(model.classifier, config.adam);
  if (model.has_encoder()) state.opt_encoder.init_like(model.encoder, config.adam);

  if (config.pretrain.clusters > 0 && config.pretrain.epochs > 0) {
    kmeans_pretrain(model, train_data.x, config, state);
    // Fresh optimizer moments for the EM phase.
    state.opt_classifier.init_like(model.classifier, config.adam);
    if (model.has_encoder()) state.opt_encoder.init_like(model.encoder, config.adam);
  }

  TrainResult result;
  int streak = 0;
  for (int it = 0; it < config.max_em_iters; ++it) {
    const IterationMetrics m = em_iteration(model, state, train_data, test_data, config);
    if (sink) sink(m);
    const std::size_t h = state.elbo_history.size();
    if (h >= 2) {
      const double prev = state.elbo_history[h - 2];
      const double delta = std::abs(state.elbo_history[h - 1] - prev);
      if (delta <= config.rel_elbo_tol * std::max(1.0, std::abs(prev))) {
        if (++streak >= config.patience) {
          result.converged = true;
          result.iterations = it + 1;
          break;
        }
      } else {
        streak = 0;
      }
    }
    result.iterations = it + 1;
  }

  result.train = evaluate(model, train_data.x, train_data.y, std::max(1, config.workers));
  if (test_data != nullptr) {
    result.test = evaluate(model, test_data->x, test_data->y, std::max(1, config.workers));
    result.has_test = true;
  }
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

CrossValResult cross_validate(const Dataset& data, const ModelSpec& spec,
                              const TrainConfig& config, int k, std::uint64_t seed) {
  const long n = data.n();
  if (k < 2) throw std::invalid_argument("cross_validate: k must be >= 2");
  if (n < k) throw std::invalid_argument("cross_validate: fewer samples than folds");

  std::vector<long> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0L);
  std::mt19937_64 rng(mix_seed(seed, 0xF01D5));
  std::shuffle(idx.begin(), idx.end(), rng);

  CrossValResult result;
  for (int f = 0; f < k; ++f) {
    const long begin = (static_cast<long>(f) * n) / k;
    const long end = (static_cast<long>(f) + 1) * n / k;
    if (end <= begin) throw std::invalid_argument("cross_validate: empty fold");
    std::vector<long> test_rows(idx.begin() + begin, idx.begin() + end);
    std::vector<long> train_rows;
    train_rows.reserve(static_cast<std::size_t>(n - (end - begin)));
    train_rows.insert(train_rows.end(), idx.begin(), idx.begin() + begin);
    train_rows.insert(train_rows.end(), idx.begin() + end, idx.end());

    const Dataset fold_train = take_rows(data, train_rows);
    const Dataset fold_test = take_rows(data, test_rows);
    PPOUModel model = build_model_for_data(spec, fold_train.x,
                                           mix_seed(seed, 0xB0D1 + static_cast<std::uint64_t>(f)));
    TrainConfig fold_cfg = config;
    fold_cfg.seed = mix_seed(config.seed, 0x5EED + static_cast<std::uint64_t>(f));
    const TrainResult tr = train(model, fold_train, &fold_test, fold_cfg);

    FoldMetrics fm;
    fm.test = tr.test;
    fm.train_rel_l2 = tr.train.rel_l2;
    fm.iterations = tr.iterations;
    result.folds.push_back(fm);
    result.fold_test_rows.push_back(std::move(test_rows));
  }

  const auto kf = static_cast<double>(k);
  double mean = 0.0;
  for (const auto& f : result.folds) mean += f.test.rel_l2;
  mean /= kf;
  double ss = 0.0;
  for (const auto& f : result.folds) {
    ss += (f.test.rel_l2 - mean) * (f.test.rel_l2 - mean);
  }
  const double sd = k > 1 ? std::sqrt(ss / (kf - 1.0)) : 0.0;
  result.mean_rel_l2 = mean;
  result.ci95_half_width = 1.96 * sd / std::sqrt(kf);
  return result;
}

GlobalPolyFit fit_global_poly(const Eigen::VectorXd& x, const Eigen::VectorXd& y, int degree) {
  if (x.size() != y.size() || x.size() < 1) {
    throw std::invalid_argument("fit_global_poly: x and y must be equal-length and nonempty");
  }
  GlobalPolyFit fit;
  fit.degree = degree;
  fit.x_lo = x.minCoeff();
  fit.x_hi = x.maxCoeff();
  const double span = fit.x_hi > fit.x_lo ? fit.x_hi - fit.x_lo : 1.0;

  Eigen::MatrixXd z(x.size(), 1);
  z.col(0) = (2.0 * (x.array() - fit.x_lo) / span - 1.0).matrix();
  const PolyBasis basis(1, degree, BasisFamily::kChebyshev);
  const Eigen::MatrixXd design = basis.design_matrix(z);
  const WlsResult res =
      solve_wls(design, Eigen::VectorXd::Ones(x.size()), y, WlsOptions{});
  fit.coeffs = res.coeffs;
  const double y_norm = y.norm();
  fit.rel_l2 = y_norm > 0.0 ? res.residual_norm / y_norm : res.residual_norm;
  return fit;
}

double eval_global_poly(const GlobalPolyFit& fit, double x) {
  const double span = fit.x_hi > fit.x_lo ? fit.x_hi - fit.x_lo : 1.0;
  const double z = 2.0 * (x - fit.x_lo) / span - 1.0;
  // Chebyshev recurrence in z.
  double acc = fit.coeffs(0);
  double t_prev = 1.0, t_cur = z;
  for (int e = 1; e <= fit.degree; ++e) {
    acc += fit.coeffs(e) * t_cur;
    const double t_next = 2.0 * z * t_cur - t_prev;
    t_prev = t_cur;
    t_cur = t_next;
  }
  return acc;
}

Eigen::VectorXd eval_global_poly(const GlobalPolyFit& fit, const Eigen::VectorXd& x) {
  Eigen::VectorXd out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) out(i) = eval_global_poly(fit, x(i));
  return out;
}

}  // namespace ppou

// SPDX-License-Identifier: Apache-2.0
#include "ppou/mixture.hpp"

#include <cmath>
#include <stdexcept>

#include "ppou/parallel.hpp"

namespace ppou {

namespace {

constexpr double kLogFloorArg = 1e-300;

double safe_log(double v) { return std::log(v < kLogFloorArg ? kLogFloorArg : v); }

void check_input(const PPOUModel& model, const Eigen::VectorXd& x) {
  if (x.size() != model.input_dim) {
    throw std::invalid_argument("model expects input dimension " +
                                std::to_string(model.input_dim) + ", got " +
                                std::to_string(x.size()));
  }
}

}  // namespace

Eigen::VectorXd latent(const PPOUModel& model, const Eigen::VectorXd& x) {
  check_input(model, x);
  const Eigen::VectorXd z = model.standardizer.apply(x);
  if (!model.has_encoder()) return z;
  return forward(model.encoder, z);
}

Eigen::VectorXd classifier_input(const PPOUModel& model, const Eigen::VectorXd& x) {
  if (model.architecture == Architecture::kSerial) return latent(model, x);
  check_input(model, x);
  return model.standardizer.apply(x);
}

Eigen::VectorXd partition_weights(const PPOUModel& model, const Eigen::VectorXd& x) {
  return forward(model.classifier, classifier_input(model, x));
}

Eigen::VectorXd cluster_means(const PPOUModel& model, const Eigen::VectorXd& x) {
  return model.coeffs * model.basis.eval(latent(model, x));
}

Moments predict_moments(const PPOUModel& model, const Eigen::VectorXd& x) {
  check_input(model, x);
  const Eigen::VectorXd z = model.standardizer.apply(x);
  const Eigen::VectorXd t = model.has_encoder() ? forward(model.encoder, z) : z;
  const Eigen::VectorXd clf_in = model.architecture == Architecture::kSerial ? t : z;
  const Eigen::VectorXd phi = forward(model.classifier, clf_in);
  const Eigen::VectorXd mu = model.coeffs * model.basis.eval(t);

  Moments m;
  m.mean = phi.dot(mu);
  m.var = phi.dot((model.sigma2.array() + model.sigma0_2 + mu.array().square()).matrix()) -
          m.mean * m.mean;
  phi.maxCoeff(&m.argmax_partition);
  return m;
}

double predict_mean(const PPOUModel& model, const Eigen::VectorXd& x) {
  return predict_moments(model, x).mean;
}

double predict_var(const PPOUModel& model, const Eigen::VectorXd& x) {
  return predict_moments(model, x).var;
}

void compute_phi_mu(const PPOUModel& model, const Eigen::MatrixXd& x, Eigen::MatrixXd& phi,
                    Eigen::MatrixXd& mu, int workers) {
  if (x.cols() != model.input_dim) {
    throw std::invalid_argument("compute_phi_mu: X has " + std::to_string(x.cols()) +
                                " columns, model expects " + std::to_string(model.input_dim));
  }
  const Eigen::Index n = x.rows();
  const int j = model.clusters();
  phi.resize(n, j);
  mu.resize(n, j);
  parallel_chunks(n, workers, [&](int, std::int64_t b, std::int64_t e) {
    Eigen::VectorXd basis_vals;
    PolyBasis::Workspace ws;
    Tape enc_tape, clf_tape;
    for (std::int64_t r = b; r < e; ++r) {
      const Eigen::VectorXd z = model.standardizer.apply(x.row(r).transpose());
      const Eigen::VectorXd t = model.has_encoder() ? forward(model.encoder, z, enc_tape) : z;
      const Eigen::VectorXd clf_in = model.architecture == Architecture::kSerial ? t : z;
      phi.row(r) = forward(model.classifier, clf_in, clf_tape).transpose();
      model.basis.eval(t, basis_vals, ws);
      mu.row(r) = (model.coeffs * basis_vals).transpose();
    }
  });
}

Responsibilities e_step_core(const Eigen::MatrixXd& phi, const Eigen::MatrixXd& mu,
                             const Eigen::VectorXd& sigma2, const Eigen::VectorXd& y,
                             int workers) {
  const Eigen::Index n = y.size();
  const Eigen::Index j = sigma2.size();
  if (n < 1) throw std::invalid_argument("e_step: need at least one sample");
  Responsibilities resp;
  resp.w.resize(n, j);
  std::vector<long> fallbacks(static_cast<std::size_t>(std::max(1, workers)), 0);

  const Eigen::VectorXd log_sigma = sigma2.array().sqrt().log().matrix();
  parallel_chunks(n, workers, [&](int chunk, std::int64_t b, std::int64_t e) {
    Eigen::VectorXd logw(j);
    for (std::int64_t r = b; r < e; ++r) {
      for (Eigen::Index c = 0; c < j; ++c) {
        const double res = y(r) - mu(r, c);
        logw(c) = safe_log(phi(r, c)) - log_sigma(c) - res * res / (2.0 * sigma2(c));
      }
      const double m = logw.maxCoeff();
      Eigen::VectorXd w = (logw.array() - m).exp();
      const double s = w.sum();
      if (!std::isfinite(s) || s <= 0.0) {
        resp.w.row(r) = phi.row(r);
        fallbacks[static_cast<std::size_t>(chunk)]++;
      } else {
        resp.w.row(r) = (w / s).transpose();
      }
    }
  });
  for (long f : fallbacks) resp.underflow_fallbacks += f;
  return resp;
}

Responsibilities e_step(const PPOUModel& model, const Eigen::MatrixXd& x,
                        const Eigen::VectorXd& y, int workers) {
  Eigen::MatrixXd phi, mu;
  compute_phi_mu(model, x, phi, mu, workers);
  return e_step_core(phi, mu, model.sigma2, y, workers);
}

Responsibilities e_step_noise_core(const Eigen::MatrixXd& phi, const Eigen::MatrixXd& mu,
                                   const Eigen::VectorXd& sigma2, double sigma0_2,
                                   const Eigen::VectorXd& y, const NoiseEStepOptions& options,
                                   int workers) {
  if (sigma0_2 < 0.0) throw std::invalid_argument("e_step_noise: sigma0_2 must be >= 0");
  const Eigen::Index n = y.size();
  const Eigen::Index j = sigma2.size();
  const bool per_sample = options.noise_floor.size() > 0;
  if (per_sample && options.noise_floor.size() != n) {
    throw std::invalid_argument("e_step_noise: noise_floor length must match sample count");
  }

  Responsibilities resp;
  if (!options.convolved_responsibilities) {
    // Responsibility density uses sigma_j exactly as printed, identical to
    // the plain E-step.
    resp = e_step_core(phi, mu, sigma2, y, workers);
  } else {
    const Eigen::VectorXd conv = per_sample
                                     ? Eigen::VectorXd()  // handled per sample below
                                     : (sigma2.array() + sigma0_2).matrix();
    if (!per_sample) {
      resp = e_step_core(phi, mu, conv, y, workers);
    } else {
      resp.w.resize(n, j);
      parallel_chunks(n, workers, [&](int, std::int64_t b, std::int64_t e) {
        Eigen::VectorXd logw(j);
        for (std::int64_t r = b; r < e; ++r) {
          for (Eigen::Index c = 0; c < j; ++c) {
            const double s2 = sigma2(c) + options.noise_floor(r);
            const double res = y(r) - mu(r, c);
            logw(c) = safe_log(phi(r, c)) - 0.5 * std::log(s2) - res * res / (2.0 * s2);
          }
          const double m = logw.maxCoeff();
          Eigen::VectorXd w = (logw.array() - m).exp();
          resp.w.row(r) = (w / w.sum()).transpose();
        }
      });
    }
  }

  resp.b_means.resize(n, j);
  if (!per_sample) {
    resp.b_vars.resize(j);
    if (sigma0_2 == 0.0) {
      // Exact analytic limit: shrinkage factor 1, conditional variance 0.
      resp.b_means = y.replicate(1, j);
      resp.b_vars.setZero();
    } else {
      for (Eigen::Index c = 0; c < j; ++c) {
        const double gamma = sigma2(c) / (sigma2(c) + sigma0_2);
        resp.b_vars(c) = sigma2(c) - sigma2(c) * sigma2(c) / (sigma2(c) + sigma0_2);
        for (Eigen::Index r = 0; r < n; ++r) {
          resp.b_means(r, c) = mu(r, c) + gamma * (y(r) - mu(r, c));
        }
      }
    }
  } else {
    resp.b_vars_per_sample.resize(n, j);
    for (Eigen::Index r = 0; r < n; ++r) {
      const double s0 = options.noise_floor(r);
      for (Eigen::Index c = 0; c < j; ++c) {
        if (s0 == 0.0) {
          resp.b_means(r, c) = y(r);
          resp.b_vars_per_sample(r, c) = 0.0;
        } else {
          const double gamma = sigma2(c) / (sigma2(c) + s0);
          resp.b_means(r, c) = mu(r, c) + gamma * (y(r) - mu(r, c));
          resp.b_vars_per_sample(r, c) = sigma2(c) - sigma2(c) * sigma2(c) / (sigma2(c) + s0);
        }
      }
    }
  }
  return resp;
}

Responsibilities e_step_noise(const PPOUModel& model, const Eigen::MatrixXd& x,
                              const Eigen::VectorXd& y, const NoiseEStepOptions& options,
                              int workers) {
  Eigen::MatrixXd phi, mu;
  compute_phi_mu(model, x, phi, mu, workers);
  return e_step_noise_core(phi, mu, model.sigma2, model.sigma0_2, y, options, workers);
}

SigmaUpdate update_sigma_core(const Eigen::MatrixXd& mu, const Responsibilities& resp,
                              const Eigen::VectorXd& y, const Eigen::VectorXd& sigma2_prev,
                              double sigma_floor2, double epsilon_cluster) {
  const Eigen::Index n = y.size();
  const Eigen::Index j = sigma2_prev.size();
  const double eps =
      epsilon_cluster >= 0.0 ? epsilon_cluster : 1e-10 * static_cast<double>(n);
  SigmaUpdate out;
  out.sigma2 = sigma2_prev;
  for (Eigen::Index c = 0; c < j; ++c) {
    double total = 0.0;
    for (Eigen::Index r = 0; r < n; ++r) total += resp.w(r, c);
    if (total < eps) {
      out.empty_clusters.push_back(static_cast<int>(c));
      continue;
    }
    double rss = 0.0;
    for (Eigen::Index r = 0; r < n; ++r) {
      const double res = y(r) - mu(r, c);
      rss += resp.w(r, c) * (res * res);
    }
    out.sigma2(c) = std::max(rss / total, sigma_floor2);
  }
  return out;
}

SigmaUpdate update_sigma(const PPOUModel& model, const Responsibilities& resp,
                         const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                         double epsilon_cluster) {
  Eigen::MatrixXd phi, mu;
  compute_phi_mu(model, x, phi, mu, 1);
  return update_sigma_core(mu, resp, y, model.sigma2, model.sigma_floor2, epsilon_cluster);
}

SigmaUpdate update_sigma_noise_core(const Eigen::MatrixXd& mu, const Responsibilities& resp,
                                    const Eigen::VectorXd& y, const Eigen::VectorXd& sigma2_prev,
                                    double sigma_floor2, double epsilon_cluster) {
  if (!resp.has_noise_fields()) {
    throw std::invalid_argument("update_sigma_noise: responsibilities lack b/B fields");
  }
  const Eigen::Index n = y.size();
  const Eigen::Index j = sigma2_prev.size();
  const double eps =
      epsilon_cluster >= 0.0 ? epsilon_cluster : 1e-10 * static_cast<double>(n);
  const bool per_sample = resp.b_vars_per_sample.size() > 0;
  SigmaUpdate out;
  out.sigma2 = sigma2_prev;
  for (Eigen::Index c = 0; c < j; ++c) {
    double total = 0.0;
    for (Eigen::Index r = 0; r < n; ++r) total += resp.w(r, c);
    if (total < eps) {
      out.empty_clusters.push_back(static_cast<int>(c));
      continue;
    }
    double acc = 0.0;
    for (Eigen::Index r = 0; r < n; ++r) {
      const double dev = resp.b_means(r, c) - mu(r, c);
      const double bvar = per_sample ? resp.b_vars_per_sample(r, c) : resp.b_vars(c);
      acc += resp.w(r, c) * (dev * dev + bvar);
    }
    out.sigma2(c) = std::max(acc / total, sigma_floor2);
  }
  return out;
}

SigmaUpdate update_sigma_noise(const PPOUModel& model, const Responsibilities& resp,
                               const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                               double epsilon_cluster) {
  Eigen::MatrixXd phi, mu;
  compute_phi_mu(model, x, phi, mu, 1);
  return update_sigma_noise_core(mu, resp, y, model.sigma2, model.sigma_floor2, epsilon_cluster);
}

}  // namespace ppou

// SPDX-License-Identifier: Apache-2.0
#include "ppou/poly_basis.hpp"

#include <atomic>
#include <stdexcept>

namespace ppou {

namespace {

std::atomic<std::uint64_t> g_cheb_out_of_range{0};

// Appends all multi-indices of exact total degree `remaining` over
// `coords` coordinates, highest leading exponent first, so that within a
// degree block the table reads (p,0,..), (p-1,1,..), ..., (0,..,p).
void enumerate_degree(int coords, int remaining, std::vector<int>& prefix,
                      std::vector<std::vector<int>>& out) {
  if (coords == 1) {
    prefix.push_back(remaining);
    out.push_back(prefix);
    prefix.pop_back();
    return;
  }
  for (int e = remaining; e >= 0; --e) {
    prefix.push_back(e);
    enumerate_degree(coords - 1, remaining - e, prefix, out);
    prefix.pop_back();
  }
}

}  // namespace

std::int64_t basis_size(int latent_dim, int degree) {
  if (latent_dim < 1) throw std::invalid_argument("basis_size: latent_dim must be >= 1");
  if (degree < 0) throw std::invalid_argument("basis_size: degree must be >= 0");
  // binomial(latent_dim + degree, degree), multiplicative form.
  std::int64_t k = 1;
  for (int i = 1; i <= degree; ++i) {
    k = k * (latent_dim + i) / i;
  }
  return k;
}

PolyBasis::PolyBasis(int latent_dim, int degree, BasisFamily family)
    : latent_dim_(latent_dim), degree_(degree), family_(family) {
  const std::int64_t k = basis_size(latent_dim, degree);
  exponents_.reserve(static_cast<std::size_t>(k));
  std::vector<int> prefix;
  for (int g = 0; g <= degree; ++g) {
    enumerate_degree(latent_dim, g, prefix, exponents_);
  }
}

void PolyBasis::factor_table(const Eigen::VectorXd& point, Eigen::MatrixXd& values,
                             Eigen::MatrixXd* derivs) const {
  values.resize(latent_dim_, degree_ + 1);
  if (derivs) derivs->resize(latent_dim_, degree_ + 1);
  for (int i = 0; i < latent_dim_; ++i) {
    const double x = point(i);
    if (family_ == BasisFamily::kMonomial) {
      double v = 1.0;
      for (int e = 0; e <= degree_; ++e) {
        values(i, e) = v;
        if (derivs) (*derivs)(i, e) = (e == 0) ? 0.0 : e * values(i, e - 1);
        v *= x;
      }
    } else {
      if (x < -1.0 || x > 1.0) {
        g_cheb_out_of_range.fetch_add(1, std::memory_order_relaxed);
      }
      // T_0 = 1, T_1 = x, T_{e+1} = 2x T_e - T_{e-1}; same recurrence for
      // the derivatives: T'_{e+1} = 2 T_e + 2x T'_e - T'_{e-1}.
      values(i, 0) = 1.0;
      if (derivs) (*derivs)(i, 0) = 0.0;
      if (degree_ >= 1) {
        values(i, 1) = x;
        if (derivs) (*derivs)(i, 1) = 1.0;
      }
      for (int e = 2; e <= degree_; ++e) {
        values(i, e) = 2.0 * x * values(i, e - 1) - values(i, e - 2);
        if (derivs) {
          (*derivs)(i, e) =
              2.0 * values(i, e - 1) + 2.0 * x * (*derivs)(i, e - 1) - (*derivs)(i, e - 2);
        }
      }
    }
  }
}

void PolyBasis::eval(const Eigen::VectorXd& point, Eigen::VectorXd& out, Workspace& ws) const {
  if (point.size() != latent_dim_) {
    throw std::invalid_argument("PolyBasis::eval: point has dimension " +
                                std::to_string(point.size()) + ", basis expects " +
                                std::to_string(latent_dim_));
  }
  factor_table(point, ws.factors, nullptr);
  out.resize(size());
  for (int k = 0; k < size(); ++k) {
    const auto& alpha = exponents_[static_cast<std::size_t>(k)];
    double v = 1.0;
    for (int i = 0; i < latent_dim_; ++i) v *= ws.factors(i, alpha[static_cast<std::size_t>(i)]);
    out(k) = v;
  }
}

void PolyBasis::eval(const Eigen::VectorXd& point, Eigen::VectorXd& out) const {
  Workspace ws;
  eval(point, out, ws);
}

Eigen::VectorXd PolyBasis::eval(const Eigen::VectorXd& point) const {
  Eigen::VectorXd out;
  eval(point, out);
  return out;
}

void PolyBasis::eval_with_grad(const Eigen::VectorXd& point, Eigen::VectorXd& values,
                               Eigen::MatrixXd& jacobian) const {
  Workspace ws;
  eval_with_grad(point, values, jacobian, ws);
}

void PolyBasis::eval_with_grad(const Eigen::VectorXd& point, Eigen::VectorXd& values,
                               Eigen::MatrixXd& jacobian, Workspace& ws) const {
  if (point.size() != latent_dim_) {
    throw std::invalid_argument("PolyBasis::eval_with_grad: dimension mismatch");
  }
  Eigen::MatrixXd& factors = ws.factors;
  Eigen::MatrixXd& derivs = ws.derivs;
  factor_table(point, factors, &derivs);
  values.resize(size());
  jacobian.resize(size(), latent_dim_);
  for (int k = 0; k < size(); ++k) {
    const auto& alpha = exponents_[static_cast<std::size_t>(k)];
    double v = 1.0;
    for (int i = 0; i < latent_dim_; ++i) v *= factors(i, alpha[static_cast<std::size_t>(i)]);
    values(k) = v;
    for (int i = 0; i < latent_dim_; ++i) {
      // Product rule: replace factor i by its derivative.
      double g = derivs(i, alpha[static_cast<std::size_t>(i)]);
      for (int l = 0; l < latent_dim_; ++l) {
        if (l == i) continue;
        g *= factors(l, alpha[static_cast<std::size_t>(l)]);
      }
      jacobian(k, i) = g;
    }
  }
}

Eigen::MatrixXd PolyBasis::design_matrix(const Eigen::MatrixXd& points) const {
  if (points.cols() != latent_dim_) {
    throw std::invalid_argument("PolyBasis::design_matrix: points have " +
                                std::to_string(points.cols()) + " columns, basis expects " +
                                std::to_string(latent_dim_));
  }
  Eigen::MatrixXd design(points.rows(), size());
  Eigen::VectorXd row;
  for (Eigen::Index n = 0; n < points.rows(); ++n) {
    eval(points.row(n).transpose(), row);
    design.row(n) = row.transpose();
  }
  return design;
}

std::uint64_t PolyBasis::out_of_range_count() {
  return g_cheb_out_of_range.load(std::memory_order_relaxed);
}

void PolyBasis::reset_out_of_range_count() {
  g_cheb_out_of_range.store(0, std::memory_order_relaxed);
}

}  // namespace ppou

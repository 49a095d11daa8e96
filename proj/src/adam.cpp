// SPDX-License-Identifier: Apache-2.0
#include "ppou/adam.hpp"

#include <cmath>
#include <stdexcept>

#include "ppou/common.hpp"

namespace ppou {

void AdamState::init_like(const DenseNet& net, const AdamParams& params) {
  hyper = params;
  step_count = 0;
  const std::size_t n = net.layers.size();
  m_weight.resize(n);
  v_weight.resize(n);
  m_bias.resize(n);
  v_bias.resize(n);
  for (std::size_t l = 0; l < n; ++l) {
    m_weight[l].setZero(net.layers[l].weight.rows(), net.layers[l].weight.cols());
    v_weight[l].setZero(net.layers[l].weight.rows(), net.layers[l].weight.cols());
    m_bias[l].setZero(net.layers[l].bias.size());
    v_bias[l].setZero(net.layers[l].bias.size());
  }
}

bool AdamState::matches(const DenseNet& net) const {
  if (m_weight.size() != net.layers.size()) return false;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    if (m_weight[l].rows() != net.layers[l].weight.rows() ||
        m_weight[l].cols() != net.layers[l].weight.cols() ||
        m_bias[l].size() != net.layers[l].bias.size()) {
      return false;
    }
  }
  return true;
}

namespace {

void check_finite(const std::string& name, std::size_t layer, const char* kind,
                  const Eigen::MatrixXd& g) {
  if (g.allFinite()) return;
  for (Eigen::Index r = 0; r < g.rows(); ++r) {
    for (Eigen::Index c = 0; c < g.cols(); ++c) {
      if (!std::isfinite(g(r, c))) {
        throw NumericError("adam_step: non-finite gradient at " + name + ".layers[" +
                           std::to_string(layer) + "]." + kind + "(" + std::to_string(r) + "," +
                           std::to_string(c) + ")");
      }
    }
  }
}

}  // namespace

void adam_step(DenseNet& net, const NetGrads& grads, AdamState& state, const std::string& name) {
  if (!state.matches(net)) {
    throw std::invalid_argument("adam_step: state shape does not match network");
  }
  if (grads.weight.size() != net.layers.size()) {
    throw std::invalid_argument("adam_step: gradient shape does not match network");
  }
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    check_finite(name, l, "weight", grads.weight[l]);
    check_finite(name, l, "bias", grads.bias[l]);
  }

  state.step_count += 1;
  const auto& hp = state.hyper;
  const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.step_count));

  auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
    m.array() = hp.beta1 * m.array() + (1.0 - hp.beta1) * g.array();
    v.array() = hp.beta2 * v.array() + (1.0 - hp.beta2) * g.array().square();
    p.array() -= hp.learning_rate * (m.array() / bc1) / ((v.array() / bc2).sqrt() + hp.epsilon);
  };

  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    update(net.layers[l].weight, grads.weight[l], state.m_weight[l], state.v_weight[l]);
    update(net.layers[l].bias, grads.bias[l], state.m_bias[l], state.v_bias[l]);
  }
  net.version += 1;
}

}  // namespace ppou

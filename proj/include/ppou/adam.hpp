// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "ppou/dense_net.hpp"

namespace ppou {

struct AdamParams {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First/second moment buffers mirroring a DenseNet's parameters.
struct AdamState {
  std::vector<Eigen::MatrixXd> m_weight, v_weight;
  std::vector<Eigen::VectorXd> m_bias, v_bias;
  long step_count = 0;
  AdamParams hyper;

  void init_like(const DenseNet& net, const AdamParams& params);
  bool matches(const DenseNet& net) const;
};

/// One bias-corrected Adam update in place. `name` labels the network in
/// error messages. Throws NumericError naming the offending parameter if
/// any gradient entry is non-finite.
void adam_step(DenseNet& net, const NetGrads& grads, AdamState& state,
               const std::string& name = "net");

}  // namespace ppou

// SPDX-License-Identifier: Apache-2.0
#include "ppou/dense_net.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "ppou/common.hpp"

namespace ppou {

namespace {

enum class Role { kActivated, kBlockFirst, kBlockSecond, kSingleSkip, kOutput };

// Assigns a structural role to every affine layer. Plain nets are a chain
// of activated layers plus the readout. Residual nets keep layer 0 as an
// activated stem and pair the in-between layers into two-layer blocks,
// with an unpaired trailing layer falling back to a single-layer skip.
std::vector<Role> layer_roles(const DenseNet& net) {
  const std::size_t n = net.layers.size();
  std::vector<Role> roles(n, Role::kActivated);
  roles[n - 1] = Role::kOutput;
  if (!net.residual || n < 3) return roles;
  std::size_t l = 1;
  while (l + 1 < n) {
    if (l + 2 < n) {
      roles[l] = Role::kBlockFirst;
      roles[l + 1] = Role::kBlockSecond;
      l += 2;
    } else {
      roles[l] = Role::kSingleSkip;
      l += 1;
    }
  }
  return roles;
}

inline double act_value(Activation a, double z) {
  return a == Activation::kTanh ? std::tanh(z) : (z > 0.0 ? z : 0.0);
}

inline double act_deriv(Activation a, double z) {
  if (a == Activation::kTanh) {
    const double t = std::tanh(z);
    return 1.0 - t * t;
  }
  return z > 0.0 ? 1.0 : 0.0;
}

Eigen::VectorXd apply_activation(Activation a, const Eigen::VectorXd& z) {
  return z.unaryExpr([a](double v) { return act_value(a, v); });
}

Eigen::VectorXd softmax_stable(const Eigen::VectorXd& z) {
  const double m = z.maxCoeff();
  Eigen::VectorXd e = (z.array() - m).exp();
  return e / e.sum();
}

}  // namespace

std::size_t DenseNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) {
    n += static_cast<std::size_t>(l.weight.size()) + static_cast<std::size_t>(l.bias.size());
  }
  return n;
}

void NetGrads::set_zero_like(const DenseNet& net) {
  weight.resize(net.layers.size());
  bias.resize(net.layers.size());
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    weight[l].setZero(net.layers[l].weight.rows(), net.layers[l].weight.cols());
    bias[l].setZero(net.layers[l].bias.size());
  }
}

void NetGrads::add_scaled(const NetGrads& other, double scale) {
  for (std::size_t l = 0; l < weight.size(); ++l) {
    weight[l] += scale * other.weight[l];
    bias[l] += scale * other.bias[l];
  }
}

bool NetGrads::all_finite() const {
  for (const auto& w : weight) {
    if (!w.allFinite()) return false;
  }
  for (const auto& b : bias) {
    if (!b.allFinite()) return false;
  }
  return true;
}

const Eigen::VectorXd& forward(const DenseNet& net, const Eigen::VectorXd& x, Tape& tape) {
  if (net.layers.empty()) throw std::invalid_argument("forward: network has no layers");
  if (x.size() != net.input_dim()) {
    throw std::invalid_argument("forward: input has dimension " + std::to_string(x.size()) +
                                ", network expects " + std::to_string(net.input_dim()));
  }
  const auto roles = layer_roles(net);
  const std::size_t n = net.layers.size();
  tape.net = &net;
  tape.version = net.version;
  tape.inputs.resize(n);
  tape.preacts.resize(n);

  Eigen::VectorXd h = x;
  for (std::size_t l = 0; l < n; ++l) {
    const auto& layer = net.layers[l];
    if (h.size() != layer.weight.cols()) {
      throw std::invalid_argument("forward: layer " + std::to_string(l) + " expects width " +
                                  std::to_string(layer.weight.cols()) + ", got " +
                                  std::to_string(h.size()));
    }
    tape.inputs[l] = h;
    Eigen::VectorXd z = layer.weight * h + layer.bias;
    tape.preacts[l] = z;
    switch (roles[l]) {
      case Role::kActivated:
        h = apply_activation(net.activation, z);
        break;
      case Role::kBlockFirst:
        h = apply_activation(net.activation, z);
        break;
      case Role::kBlockSecond: {
        // Skip source is the block input, i.e. what the first half saw.
        const Eigen::VectorXd& block_in = tape.inputs[l - 1];
        if (z.size() != block_in.size()) {
          throw std::invalid_argument("forward: residual block width mismatch at layer " +
                                      std::to_string(l));
        }
        h = block_in + z;
        break;
      }
      case Role::kSingleSkip:
        if (z.size() != h.size()) {
          throw std::invalid_argument("forward: residual skip width mismatch at layer " +
                                      std::to_string(l));
        }
        h = h + apply_activation(net.activation, z);
        break;
      case Role::kOutput:
        switch (net.output_transform) {
          case OutputTransform::kIdentity:
            h = z;
            break;
          case OutputTransform::kSoftmax:
            h = softmax_stable(z);
            break;
          case OutputTransform::kTanh:
            h = apply_activation(Activation::kTanh, z);
            break;
        }
        break;
    }
  }
  tape.output = h;
  return tape.output;
}

Eigen::VectorXd forward(const DenseNet& net, const Eigen::VectorXd& x) {
  Tape tape;
  forward(net, x, tape);
  return tape.output;
}

Eigen::VectorXd backward(const DenseNet& net, const Tape& tape,
                         const Eigen::VectorXd& cotangent, NetGrads& acc) {
  if (tape.net != &net || tape.inputs.size() != net.layers.size()) {
    throw StateError("backward: tape does not belong to this network");
  }
  if (tape.version != net.version) {
    throw StateError("backward: tape is stale (parameters were updated after forward)");
  }
  if (cotangent.size() != net.output_dim()) {
    throw std::invalid_argument("backward: cotangent has dimension " +
                                std::to_string(cotangent.size()) + ", network outputs " +
                                std::to_string(net.output_dim()));
  }
  const auto roles = layer_roles(net);
  const auto n = static_cast<std::ptrdiff_t>(net.layers.size());

  // Cotangent through the output transform.
  Eigen::VectorXd g;
  switch (net.output_transform) {
    case OutputTransform::kIdentity:
      g = cotangent;
      break;
    case OutputTransform::kSoftmax: {
      const Eigen::VectorXd& s = tape.output;
      g = s.cwiseProduct(cotangent) - s * s.dot(cotangent);
      break;
    }
    case OutputTransform::kTanh:
      g = cotangent.cwiseProduct(
          (1.0 - tape.output.array().square()).matrix());
      break;
  }

  for (std::ptrdiff_t l = n - 1; l >= 0; --l) {
    const auto& layer = net.layers[static_cast<std::size_t>(l)];
    const auto& z = tape.preacts[static_cast<std::size_t>(l)];
    const auto& in = tape.inputs[static_cast<std::size_t>(l)];
    const std::size_t ul = static_cast<std::size_t>(l);
    switch (roles[ul]) {
      case Role::kOutput: {
        acc.weight[ul].noalias() += g * in.transpose();
        acc.bias[ul] += g;
        g = layer.weight.transpose() * g;
        break;
      }
      case Role::kBlockSecond: {
        // h_out = block_in + W2 * act(z1) + b2; `in` here is act(z1).
        acc.weight[ul].noalias() += g * in.transpose();
        acc.bias[ul] += g;
        Eigen::VectorXd gu = layer.weight.transpose() * g;
        // First half of the block.
        const std::size_t fl = ul - 1;
        const auto& first = net.layers[fl];
        const auto& z1 = tape.preacts[fl];
        const auto& block_in = tape.inputs[fl];
        Eigen::VectorXd gz1(z1.size());
        for (Eigen::Index i = 0; i < z1.size(); ++i) {
          gz1(i) = gu(i) * act_deriv(net.activation, z1(i));
        }
        acc.weight[fl].noalias() += gz1 * block_in.transpose();
        acc.bias[fl] += gz1;
        // Skip path: identity cotangent plus the branch contribution.
        g = g + first.weight.transpose() * gz1;
        --l;  // the pair is consumed together
        break;
      }
      case Role::kSingleSkip: {
        Eigen::VectorXd gz(z.size());
        for (Eigen::Index i = 0; i < z.size(); ++i) {
          gz(i) = g(i) * act_deriv(net.activation, z(i));
        }
        acc.weight[ul].noalias() += gz * in.transpose();
        acc.bias[ul] += gz;
        g = g + layer.weight.transpose() * gz;
        break;
      }
      case Role::kBlockFirst:
        // Handled together with kBlockSecond.
        throw StateError("backward: malformed residual structure");
      case Role::kActivated: {
        Eigen::VectorXd gz(z.size());
        for (Eigen::Index i = 0; i < z.size(); ++i) {
          gz(i) = g(i) * act_deriv(net.activation, z(i));
        }
        acc.weight[ul].noalias() += gz * in.transpose();
        acc.bias[ul] += gz;
        g = layer.weight.transpose() * gz;
        break;
      }
    }
  }
  return g;
}

std::vector<int> net_widths(int input_dim, int width, int depth, int output_dim) {
  if (depth < 1) throw std::invalid_argument("net_widths: depth must be >= 1");
  std::vector<int> widths;
  widths.push_back(input_dim);
  for (int i = 0; i < depth - 1; ++i) widths.push_back(width);
  widths.push_back(output_dim);
  return widths;
}

BoxInitResult box_init(const std::vector<int>& widths, const Eigen::VectorXd& box_lo,
                       const Eigen::VectorXd& box_hi, Activation activation, bool residual,
                       OutputTransform output_transform, std::uint64_t seed) {
  if (widths.size() < 2) throw std::invalid_argument("box_init: need at least one layer");
  for (int w : widths) {
    if (w < 1) throw std::invalid_argument("box_init: widths must be positive");
  }
  const int d = widths[0];
  if (box_lo.size() != d || box_hi.size() != d) {
    throw std::invalid_argument("box_init: box dimension does not match input width");
  }
  for (int i = 0; i < d; ++i) {
    if (!(box_hi(i) > box_lo(i))) {
      throw std::invalid_argument("box_init: degenerate box in coordinate " + std::to_string(i));
    }
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  BoxInitResult result;
  result.net.activation = activation;
  result.net.residual = residual;
  result.net.output_transform = output_transform;
  result.net.layers.resize(widths.size() - 1);

  // First layer: unit-norm rows anchored inside the box.
  const int w0 = widths[1];
  auto& first = result.net.layers[0];
  first.weight.resize(w0, d);
  first.bias.resize(w0);
  result.anchors.resize(w0, d);
  for (int r = 0; r < w0; ++r) {
    Eigen::VectorXd dir(d);
    double norm2 = 0.0;
    do {
      for (int i = 0; i < d; ++i) dir(i) = gauss(rng);
      norm2 = dir.squaredNorm();
    } while (norm2 == 0.0);
    dir /= std::sqrt(norm2);
    Eigen::VectorXd anchor(d);
    for (int i = 0; i < d; ++i) {
      anchor(i) = box_lo(i) + unit(rng) * (box_hi(i) - box_lo(i));
    }
    first.weight.row(r) = dir.transpose();
    first.bias(r) = -dir.dot(anchor);
    result.anchors.row(r) = anchor.transpose();
  }

  // Deeper layers: Glorot-style uniform, zero biases.
  for (std::size_t l = 1; l < result.net.layers.size(); ++l) {
    const int fan_in = widths[l];
    const int fan_out = widths[l + 1];
    const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    auto& layer = result.net.layers[l];
    layer.weight.resize(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r) {
      for (int c = 0; c < fan_in; ++c) {
        layer.weight(r, c) = (2.0 * unit(rng) - 1.0) * s;
      }
    }
    layer.bias.setZero(fan_out);
  }
  return result;
}

}  // namespace ppou

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace ppou {

enum class Activation { kTanh, kRelu };
enum class OutputTransform { kIdentity, kSoftmax, kTanh };

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

/// Small fully-connected network. `layers` holds the affine maps in order;
/// the hidden activation sits between them and `output_transform` is
/// applied to the last pre-activation.
///
/// With residual = true the first layer acts as a stem, the last as the
/// readout, and the equal-width layers in between carry skip connections:
/// consecutive pairs form two-layer blocks h <- h + W2*act(W1*h + b1) + b2,
/// and an unpaired trailing layer gets a single-layer skip
/// h <- h + act(W*h + b). Either way, zeroing every in-between layer makes
/// the hidden stack an exact identity.
///
/// forward/backward are pure with respect to the parameters and may run
/// concurrently across samples; parameter updates require exclusive access.
struct DenseNet {
  std::vector<DenseLayer> layers;
  Activation activation = Activation::kTanh;
  bool residual = false;
  OutputTransform output_transform = OutputTransform::kIdentity;
  std::uint64_t version = 0;  // bumped on parameter updates; guards stale tapes

  int input_dim() const { return static_cast<int>(layers.front().weight.cols()); }
  int output_dim() const { return static_cast<int>(layers.back().weight.rows()); }
  std::size_t layer_count() const { return layers.size(); }
  std::size_t parameter_count() const;
};

/// Activation record produced by forward(); consumed by backward().
struct Tape {
  const DenseNet* net = nullptr;
  std::uint64_t version = 0;
  std::vector<Eigen::VectorXd> inputs;   // vector fed into each affine layer
  std::vector<Eigen::VectorXd> preacts;  // W*input + b per layer
  Eigen::VectorXd output;                // after output_transform
};

/// Parameter gradients shaped like a DenseNet.
struct NetGrads {
  std::vector<Eigen::MatrixXd> weight;
  std::vector<Eigen::VectorXd> bias;

  void set_zero_like(const DenseNet& net);
  void add_scaled(const NetGrads& other, double scale);
  bool all_finite() const;
};

/// Evaluates the network, recording everything backward() needs.
/// Returns a reference to tape.output.
const Eigen::VectorXd& forward(const DenseNet& net, const Eigen::VectorXd& x, Tape& tape);
Eigen::VectorXd forward(const DenseNet& net, const Eigen::VectorXd& x);

/// Reverse-mode gradient of cotangent . output with respect to all
/// parameters (accumulated into acc, which must be zeroed or pre-seeded by
/// the caller) and the input (returned). Throws StateError if the tape does
/// not match the network or was recorded before a parameter update.
Eigen::VectorXd backward(const DenseNet& net, const Tape& tape,
                         const Eigen::VectorXd& cotangent, NetGrads& acc);

/// Box initialization: first-layer rows are random unit directions whose
/// hyperplanes pass through anchor points sampled uniformly inside the
/// input box; deeper layers use Glorot-style scaled uniform weights with
/// zero biases. Deterministic for a fixed seed.
struct BoxInitResult {
  DenseNet net;
  Eigen::MatrixXd anchors;  // one row per first-layer unit
};
BoxInitResult box_init(const std::vector<int>& widths, const Eigen::VectorXd& box_lo,
                       const Eigen::VectorXd& box_hi, Activation activation, bool residual,
                       OutputTransform output_transform, std::uint64_t seed);

/// Affine layer sizes for a depth-layer network: in -> width (depth-2
/// times width -> width) -> out. depth counts weight matrices and must be
/// >= 1 (depth 1 is a single affine map).
std::vector<int> net_widths(int input_dim, int width, int depth, int output_dim);

}  // namespace ppou

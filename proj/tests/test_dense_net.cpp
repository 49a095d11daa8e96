// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <random>

#include "ppou/adam.hpp"
#include "ppou/common.hpp"
#include "ppou/dense_net.hpp"

using namespace ppou;

namespace {

DenseNet random_net(const std::vector<int>& widths, Activation act, bool residual,
                    OutputTransform out, std::mt19937_64& rng, double scale = 0.7) {
  std::normal_distribution<double> gauss(0.0, scale);
  DenseNet net;
  net.activation = act;
  net.residual = residual;
  net.output_transform = out;
  net.layers.resize(widths.size() - 1);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    auto& layer = net.layers[l];
    layer.weight.resize(widths[l + 1], widths[l]);
    layer.bias.resize(widths[l + 1]);
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = gauss(rng);
      layer.bias(r) = gauss(rng);
    }
  }
  return net;
}

// Straightforward re-evaluation of a plain MLP, independent of forward().
Eigen::VectorXd naive_plain_forward(const DenseNet& net, Eigen::VectorXd h) {
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    Eigen::VectorXd z = net.layers[l].weight * h + net.layers[l].bias;
    if (l + 1 < net.layers.size()) {
      for (Eigen::Index i = 0; i < z.size(); ++i) {
        z(i) = net.activation == Activation::kTanh ? std::tanh(z(i)) : std::max(z(i), 0.0);
      }
      h = z;
    } else {
      switch (net.output_transform) {
        case OutputTransform::kIdentity:
          h = z;
          break;
        case OutputTransform::kSoftmax: {
          Eigen::VectorXd e = (z.array() - z.maxCoeff()).exp();
          h = e / e.sum();
          break;
        }
        case OutputTransform::kTanh:
          h = z.array().tanh();
          break;
      }
    }
  }
  return h;
}

double total_params(const NetGrads& g) {
  double s = 0;
  for (const auto& w : g.weight) s += w.cwiseAbs().sum();
  for (const auto& b : g.bias) s += b.cwiseAbs().sum();
  return s;
}

// Flattened view helpers for finite-difference checks.
std::vector<double*> param_ptrs(DenseNet& net) {
  std::vector<double*> ptrs;
  for (auto& layer : net.layers) {
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) ptrs.push_back(layer.weight.data() + i);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) ptrs.push_back(layer.bias.data() + i);
  }
  return ptrs;
}

std::vector<double> grad_flat(const NetGrads& g) {
  std::vector<double> flat;
  for (std::size_t l = 0; l < g.weight.size(); ++l) {
    for (Eigen::Index i = 0; i < g.weight[l].size(); ++i) flat.push_back(*(g.weight[l].data() + i));
    for (Eigen::Index i = 0; i < g.bias[l].size(); ++i) flat.push_back(*(g.bias[l].data() + i));
  }
  return flat;
}

}  // namespace

TEST_CASE("forward: softmax of all-zero parameters is uniform") {
  for (int j : {2, 4, 7}) {
    DenseNet net;
    net.output_transform = OutputTransform::kSoftmax;
    net.layers.resize(2);
    net.layers[0].weight = Eigen::MatrixXd::Zero(5, 3);
    net.layers[0].bias = Eigen::VectorXd::Zero(5);
    net.layers[1].weight = Eigen::MatrixXd::Zero(j, 5);
    net.layers[1].bias = Eigen::VectorXd::Zero(j);
    const Eigen::VectorXd out = forward(net, Eigen::Vector3d(0.3, -1.0, 2.0));
    REQUIRE(out.size() == j);
    for (int i = 0; i < j; ++i) CHECK(out(i) == doctest::Approx(1.0 / j).epsilon(1e-15));
  }
}

TEST_CASE("forward: identity layer reproduces the input") {
  DenseNet net;
  net.layers.resize(1);
  net.layers[0].weight = Eigen::MatrixXd::Identity(4, 4);
  net.layers[0].bias = Eigen::VectorXd::Zero(4);
  const Eigen::Vector4d x(0.1, -2.0, 3.5, 0.0);
  CHECK((forward(net, x) - x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("forward matches an independent plain-MLP re-evaluation") {
  std::mt19937_64 rng(42);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (auto out : {OutputTransform::kIdentity, OutputTransform::kSoftmax, OutputTransform::kTanh}) {
    const DenseNet net = random_net({3, 6, 6, 2}, Activation::kTanh, false, out, rng);
    for (int trial = 0; trial < 10; ++trial) {
      Eigen::VectorXd x(3);
      for (int i = 0; i < 3; ++i) x(i) = gauss(rng);
      const Eigen::VectorXd got = forward(net, x);
      const Eigen::VectorXd want = naive_plain_forward(net, x);
      CHECK((got - want).cwiseAbs().maxCoeff() <= 1e-14);
    }
  }
}

TEST_CASE("softmax head is a partition of unity even for large pre-activations") {
  std::mt19937_64 rng(77);
  for (double scale : {1.0, 50.0, 1000.0}) {
    std::normal_distribution<double> gauss(0.0, scale);
    DenseNet net;
    net.output_transform = OutputTransform::kSoftmax;
    net.layers.resize(1);
    net.layers[0].weight.resize(6, 2);
    net.layers[0].bias.resize(6);
    for (int trial = 0; trial < 100; ++trial) {
      for (Eigen::Index i = 0; i < net.layers[0].weight.size(); ++i) {
        *(net.layers[0].weight.data() + i) = gauss(rng);
      }
      for (Eigen::Index i = 0; i < 6; ++i) net.layers[0].bias(i) = gauss(rng);
      const Eigen::VectorXd out = forward(net, Eigen::Vector2d(1.0, -1.0));
      CHECK(out.minCoeff() >= 0.0);
      CHECK(std::abs(out.sum() - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("tanh head output lies in (-1,1), saturating at most to +-1") {
  std::mt19937_64 rng(5150);
  std::normal_distribution<double> gauss(0.0, 3.0);
  // Moderate weights: strictly inside the open interval.
  const DenseNet net = random_net({2, 8, 3}, Activation::kTanh, false, OutputTransform::kTanh,
                                  rng, 0.8);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::VectorXd out = forward(net, Eigen::Vector2d(gauss(rng), gauss(rng)));
    CHECK(out.cwiseAbs().maxCoeff() < 1.0);
  }
  // Saturating weights: double-precision tanh rounds to exactly +-1 but
  // never beyond.
  const DenseNet hot = random_net({2, 8, 3}, Activation::kTanh, false, OutputTransform::kTanh,
                                  rng, 40.0);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::VectorXd out = forward(hot, Eigen::Vector2d(gauss(rng), gauss(rng)));
    CHECK(out.cwiseAbs().maxCoeff() <= 1.0);
  }
}

TEST_CASE("residual middles at zero act as the identity on hidden state") {
  std::mt19937_64 rng(31);
  // depth 6: stem, two 2-layer blocks, readout.
  DenseNet net = random_net({3, 5, 5, 5, 5, 5, 2}, Activation::kTanh, true,
                            OutputTransform::kIdentity, rng);
  DenseNet stem_only = net;
  stem_only.layers = {net.layers.front(), net.layers.back()};
  for (std::size_t l = 1; l + 1 < net.layers.size(); ++l) {
    net.layers[l].weight.setZero();
    net.layers[l].bias.setZero();
  }
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::VectorXd x(3);
    for (int i = 0; i < 3; ++i) x(i) = gauss(rng);
    CHECK((forward(net, x) - forward(stem_only, x)).cwiseAbs().maxCoeff() <= 1e-15);
  }
}

TEST_CASE("backward: linear net input gradient is the weight row") {
  DenseNet net;
  net.layers.resize(1);
  net.layers[0].weight.resize(2, 3);
  net.layers[0].weight << 1.0, 2.0, 3.0, 4.0, 5.0, 6.0;
  net.layers[0].bias = Eigen::Vector2d(0.5, -0.5);
  Tape tape;
  forward(net, Eigen::Vector3d(0.1, 0.2, 0.3), tape);
  NetGrads grads;
  grads.set_zero_like(net);
  const Eigen::VectorXd gx = backward(net, tape, Eigen::Vector2d(1.0, 0.0), grads);
  CHECK((gx - Eigen::Vector3d(1.0, 2.0, 3.0)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("backward: zero cotangent gives zero gradients") {
  std::mt19937_64 rng(8);
  const DenseNet net = random_net({3, 4, 4, 2}, Activation::kTanh, false,
                                  OutputTransform::kSoftmax, rng);
  Tape tape;
  forward(net, Eigen::Vector3d(0.4, -0.2, 0.8), tape);
  NetGrads grads;
  grads.set_zero_like(net);
  const Eigen::VectorXd gx = backward(net, tape, Eigen::Vector2d(0.0, 0.0), grads);
  CHECK(gx.cwiseAbs().maxCoeff() == 0.0);
  CHECK(total_params(grads) == 0.0);
}

TEST_CASE("backward matches central finite differences") {
  std::mt19937_64 rng(2718);
  std::normal_distribution<double> gauss(0.0, 1.0);

  struct Case {
    std::vector<int> widths;
    Activation act;
    bool residual;
    OutputTransform out;
  };
  const std::vector<Case> cases = {
      {{2, 6, 6, 1}, Activation::kTanh, false, OutputTransform::kIdentity},
      {{3, 8, 8, 8, 8, 4}, Activation::kTanh, true, OutputTransform::kSoftmax},
      {{2, 5, 5, 5, 2}, Activation::kTanh, true, OutputTransform::kTanh},  // odd middles
      {{4, 32, 32, 32, 32, 32, 32, 32, 32, 32, 32, 32, 3},
       Activation::kTanh,
       true,
       OutputTransform::kSoftmax},  // depth 12, width 32
      {{3, 6, 6, 2}, Activation::kRelu, false, OutputTransform::kIdentity},
  };

  for (const auto& tc : cases) {
    DenseNet net = random_net(tc.widths, tc.act, tc.residual, tc.out, rng, 0.5);
    Eigen::VectorXd x(tc.widths.front());
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = gauss(rng);
    Eigen::VectorXd cot(tc.widths.back());
    for (Eigen::Index i = 0; i < cot.size(); ++i) cot(i) = gauss(rng);

    Tape tape;
    forward(net, x, tape);
    NetGrads grads;
    grads.set_zero_like(net);
    backward(net, tape, cot, grads);
    const std::vector<double> analytic = grad_flat(grads);

    auto objective = [&] { return cot.dot(forward(net, x)); };
    const auto ptrs = param_ptrs(net);
    REQUIRE(ptrs.size() == analytic.size());
    const double h = 1e-5;
    double max_scale = 1e-12;
    for (double a : analytic) max_scale = std::max(max_scale, std::abs(a));
    const double floor = 1e-4 * std::max(1.0, max_scale);
    for (std::size_t i = 0; i < ptrs.size(); ++i) {
      const double orig = *ptrs[i];
      *ptrs[i] = orig + h;
      const double up = objective();
      *ptrs[i] = orig - h;
      const double dn = objective();
      *ptrs[i] = orig;
      const double fd = (up - dn) / (2 * h);
      const double denom = std::max({std::abs(fd), std::abs(analytic[i]), floor});
      CHECK(std::abs(fd - analytic[i]) / denom <= 1e-5);
    }
  }
}

TEST_CASE("backward rejects stale and mismatched tapes") {
  std::mt19937_64 rng(12);
  DenseNet net = random_net({2, 4, 1}, Activation::kTanh, false, OutputTransform::kIdentity, rng);
  Tape tape;
  forward(net, Eigen::Vector2d(0.1, 0.2), tape);
  NetGrads grads;
  grads.set_zero_like(net);

  SUBCASE("tape from another network") {
    DenseNet other = net;
    CHECK_THROWS_AS(backward(other, tape, Eigen::VectorXd::Ones(1), grads), StateError);
  }
  SUBCASE("tape recorded before a parameter update") {
    AdamState state;
    state.init_like(net, AdamParams{});
    NetGrads g;
    g.set_zero_like(net);
    g.weight[0](0, 0) = 1.0;
    adam_step(net, g, state);
    CHECK_THROWS_AS(backward(net, tape, Eigen::VectorXd::Ones(1), grads), StateError);
  }
}

TEST_CASE("box_init") {
  const std::vector<int> widths = {3, 8, 8, 4};
  const Eigen::Vector3d lo(-2.0, 0.0, 1.0);
  const Eigen::Vector3d hi(1.0, 4.0, 1.5);

  SUBCASE("each first-layer hyperplane passes through its anchor inside the box") {
    const BoxInitResult r = box_init(widths, lo, hi, Activation::kTanh, false,
                                     OutputTransform::kSoftmax, 31337);
    for (int row = 0; row < 8; ++row) {
      const Eigen::VectorXd w = r.net.layers[0].weight.row(row).transpose();
      const Eigen::VectorXd a = r.anchors.row(row).transpose();
      CHECK(std::abs(w.dot(a) + r.net.layers[0].bias(row)) <= 1e-12);
      for (int i = 0; i < 3; ++i) {
        CHECK(a(i) >= lo(i));
        CHECK(a(i) <= hi(i));
      }
    }
  }
  SUBCASE("first-layer rows have unit norm") {
    const BoxInitResult r = box_init(widths, lo, hi, Activation::kTanh, false,
                                     OutputTransform::kSoftmax, 5);
    for (int row = 0; row < 8; ++row) {
      CHECK(std::abs(r.net.layers[0].weight.row(row).norm() - 1.0) <= 1e-12);
    }
  }
  SUBCASE("equal seeds give bitwise-identical parameters") {
    const BoxInitResult a = box_init(widths, lo, hi, Activation::kTanh, true,
                                     OutputTransform::kSoftmax, 99);
    const BoxInitResult b = box_init(widths, lo, hi, Activation::kTanh, true,
                                     OutputTransform::kSoftmax, 99);
    for (std::size_t l = 0; l < a.net.layers.size(); ++l) {
      CHECK((a.net.layers[l].weight - b.net.layers[l].weight).cwiseAbs().maxCoeff() == 0.0);
      CHECK((a.net.layers[l].bias - b.net.layers[l].bias).cwiseAbs().maxCoeff() == 0.0);
    }
  }
  SUBCASE("degenerate box is rejected") {
    CHECK_THROWS_AS(box_init(widths, lo, Eigen::Vector3d(1.0, 0.0, 1.5), Activation::kTanh,
                             false, OutputTransform::kSoftmax, 1),
                    std::invalid_argument);
  }
}

TEST_CASE("adam: bias-corrected first step") {
  DenseNet net;
  net.layers.resize(1);
  net.layers[0].weight = Eigen::MatrixXd::Constant(1, 1, 2.0);
  net.layers[0].bias = Eigen::VectorXd::Zero(1);
  AdamParams hp;
  hp.learning_rate = 0.1;
  AdamState state;
  state.init_like(net, hp);
  NetGrads g;
  g.set_zero_like(net);
  const double grad = 0.37;
  g.weight[0](0, 0) = grad;
  adam_step(net, g, state);
  const double expected_step = hp.learning_rate * grad /
                               (std::abs(grad) + hp.epsilon * std::sqrt(1.0 - hp.beta2));
  CHECK(net.layers[0].weight(0, 0) == doctest::Approx(2.0 - expected_step).epsilon(1e-8));
  CHECK(state.step_count == 1);
}

TEST_CASE("adam: zero gradients leave parameters untouched") {
  std::mt19937_64 rng(4);
  DenseNet net = random_net({2, 3, 1}, Activation::kTanh, false, OutputTransform::kIdentity, rng);
  const DenseNet before = net;
  AdamState state;
  state.init_like(net, AdamParams{});
  NetGrads g;
  g.set_zero_like(net);
  for (int i = 0; i < 25; ++i) adam_step(net, g, state);
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    CHECK((net.layers[l].weight - before.layers[l].weight).cwiseAbs().maxCoeff() == 0.0);
    CHECK((net.layers[l].bias - before.layers[l].bias).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("adam: 100 steps on f(w)=w^2 matches the scalar recurrence and converges") {
  // Independent scalar recurrence.
  const AdamParams hp{0.1, 0.9, 0.999, 1e-8};
  double w_ref = 1.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 100; ++t) {
    const double g = 2.0 * w_ref;
    m = hp.beta1 * m + (1 - hp.beta1) * g;
    v = hp.beta2 * v + (1 - hp.beta2) * g * g;
    const double mh = m / (1 - std::pow(hp.beta1, t));
    const double vh = v / (1 - std::pow(hp.beta2, t));
    w_ref -= hp.learning_rate * mh / (std::sqrt(vh) + hp.epsilon);
  }

  DenseNet net;
  net.layers.resize(1);
  net.layers[0].weight = Eigen::MatrixXd::Constant(1, 1, 1.0);
  net.layers[0].bias = Eigen::VectorXd::Zero(1);
  AdamState state;
  state.init_like(net, hp);
  for (int t = 1; t <= 100; ++t) {
    NetGrads g;
    g.set_zero_like(net);
    g.weight[0](0, 0) = 2.0 * net.layers[0].weight(0, 0);
    g.bias[0].setZero();
    adam_step(net, g, state);
  }
  CHECK(net.layers[0].weight(0, 0) == doctest::Approx(w_ref).epsilon(1e-12));
  CHECK(std::abs(net.layers[0].weight(0, 0)) < 0.1);
}

TEST_CASE("adam: non-finite gradients raise a numeric error naming the parameter") {
  std::mt19937_64 rng(6);
  DenseNet net = random_net({2, 3, 1}, Activation::kTanh, false, OutputTransform::kIdentity, rng);
  AdamState state;
  state.init_like(net, AdamParams{});
  NetGrads g;
  g.set_zero_like(net);
  g.weight[1](0, 2) = std::numeric_limits<double>::quiet_NaN();
  try {
    adam_step(net, g, state, "classifier");
    FAIL("expected NumericError");
  } catch (const NumericError& err) {
    const std::string what = err.what();
    CHECK(what.find("classifier.layers[1].weight(0,2)") != std::string::npos);
  }
}

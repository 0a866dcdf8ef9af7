#include <cmath>
#include <limits>
#include <sstream>

#include <gtest/gtest.h>

#include "netexpr/netcore.hpp"
#include "netexpr/network_io.hpp"
#include "netexpr/rng.hpp"

using namespace netexpr;

namespace {

Architecture small_arch(Activation act = Activation::HardTanh) { return Architecture{2, {4, 4, 4}, 4, act}; }

}  // namespace

TEST(Activation, HardTanhAndRelu) {
  EXPECT_EQ(apply_activation(Activation::HardTanh, 0.5), 0.5);
  EXPECT_EQ(apply_activation(Activation::HardTanh, 2.0), 1.0);
  EXPECT_EQ(apply_activation(Activation::HardTanh, -7.0), -1.0);
  EXPECT_EQ(apply_activation(Activation::ReLU, -3.0), 0.0);
  EXPECT_EQ(apply_activation(Activation::ReLU, 3.0), 3.0);
}

TEST(Activation, RejectsNonFinite) {
  EXPECT_THROW(apply_activation(Activation::HardTanh, std::numeric_limits<double>::quiet_NaN()), NumericError);
  EXPECT_THROW(apply_activation(Activation::ReLU, std::numeric_limits<double>::infinity()), NumericError);
}

TEST(NeuronStates, BoundariesBelongToSaturatedSide) {
  EXPECT_EQ(neuron_state(Activation::HardTanh, 1.0), NeuronState::SatHigh);
  EXPECT_EQ(neuron_state(Activation::HardTanh, -1.0), NeuronState::SatLow);
  EXPECT_EQ(neuron_state(Activation::HardTanh, 0.999), NeuronState::Linear);
  EXPECT_EQ(neuron_state(Activation::ReLU, 0.0), NeuronState::Inactive);
  EXPECT_EQ(neuron_state(Activation::ReLU, 1e-300), NeuronState::Active);
}

TEST(SampleNetwork, ZeroBiasVarianceGivesZeroBiases) {
  const Network net = sample_network(small_arch(), InitSpec{2.0, 0.0, 17});
  for (const Layer& layer : net.hidden()) EXPECT_TRUE((layer.bias.array() == 0.0).all());
  EXPECT_TRUE((net.readout()->bias.array() == 0.0).all());
}

TEST(SampleNetwork, DeterministicPerSeed) {
  const Network a = sample_network(small_arch(), InitSpec{2.0, 1.0, 42});
  const Network b = sample_network(small_arch(), InitSpec{2.0, 1.0, 42});
  const Network c = sample_network(small_arch(), InitSpec{2.0, 1.0, 43});
  EXPECT_TRUE(a == b);
  EXPECT_FALSE(a == c);
  EXPECT_EQ(network_to_string(a), network_to_string(b));
}

TEST(SampleNetwork, ChainsDimensions) {
  const Network net = sample_network(Architecture{3, {5, 7}, 2, Activation::ReLU}, InitSpec{1.0, 0.5, 1});
  EXPECT_EQ(net.input_dim(), 3u);
  EXPECT_EQ(net.hidden(0).fan_in(), 3u);
  EXPECT_EQ(net.hidden(1).fan_in(), 5u);
  EXPECT_EQ(net.readout()->fan_in(), 7u);
  EXPECT_EQ(net.output_dim(), 2u);
}

// Sample-variance oracle: (N-1) s^2 / sigma^2 ~ chi^2_{N-1}; for large N the
// 99.9% interval is 1 +- 3.29 sqrt(2/(N-1)) on s^2 / sigma^2.
TEST(SampleNetwork, WeightVarianceMatchesFanInScaling) {
  const double sigma_w_sq = 3.0;
  for (std::size_t fan_in : {32u, 128u}) {
    const Network net = sample_network(Architecture{fan_in, {512, 8}, 1, Activation::HardTanh},
                                       InitSpec{sigma_w_sq, 1.0, 2024 + fan_in});
    const Matrix& w = net.hidden(0).weights;
    const double n = static_cast<double>(w.size());
    ASSERT_GE(n, 1e4);
    const double m = w.mean();
    const double var = (w.array() - m).square().sum() / (n - 1.0);
    const double ratio = var / (sigma_w_sq / static_cast<double>(fan_in));
    EXPECT_NEAR(ratio, 1.0, 0.05);
    EXPECT_NEAR(ratio, 1.0, 3.29 * std::sqrt(2.0 / (n - 1.0)));
  }
}

TEST(SampleNetwork, BiasVariance) {
  Rng rng(5);
  const Layer layer = sample_layer(4, 20000, 1.0, 0.25, rng);
  const double n = static_cast<double>(layer.bias.size());
  const double var = (layer.bias.array() - layer.bias.mean()).square().sum() / (n - 1.0);
  EXPECT_NEAR(var / 0.25, 1.0, 0.05);
}

TEST(SampleNetwork, RejectsInvalidSpecs) {
  EXPECT_THROW(sample_network(Architecture{0, {4}, 1, Activation::ReLU}, InitSpec{}), std::invalid_argument);
  EXPECT_THROW(sample_network(Architecture{2, {}, 1, Activation::ReLU}, InitSpec{}), std::invalid_argument);
  EXPECT_THROW(sample_network(small_arch(), InitSpec{0.0, 0.0, 1}), std::invalid_argument);
  EXPECT_THROW(sample_network(small_arch(), InitSpec{1.0, -1.0, 1}), std::invalid_argument);
}

TEST(FromExplicit, IdentityInLinearRegion) {
  const Network net = from_explicit({Matrix::Identity(3, 3), Matrix::Identity(3, 3)}, {Vector::Zero(3), Vector::Zero(3)},
                                    Activation::HardTanh);
  const Vector x = (Vector(3) << 0.3, -0.2, 0.99).finished();
  EXPECT_EQ(net.forward(x), x);
}

TEST(FromExplicit, ZeroWeightsGiveConstantMap) {
  const Vector b = (Vector(2) << 2.5, -0.25).finished();
  const Network net = from_explicit({Matrix::Zero(2, 2)}, {b}, Activation::HardTanh);
  for (double s : {-3.0, 0.0, 10.0}) {
    const Vector out = net.forward(Vector::Constant(2, s));
    EXPECT_EQ(out[0], 1.0);
    EXPECT_EQ(out[1], -0.25);
  }
  const Network relu = from_explicit({Matrix::Zero(2, 2)}, {b}, Activation::ReLU);
  EXPECT_EQ(relu.forward(Vector::Ones(2)), (Vector(2) << 2.5, 0.0).finished());
}

TEST(FromExplicit, RejectsMismatchedDims) {
  EXPECT_THROW(from_explicit({Matrix::Identity(3, 2), Matrix::Identity(3, 2)}, {Vector::Zero(3), Vector::Zero(3)},
                             Activation::ReLU),
               DimensionError);
  EXPECT_THROW(from_explicit({Matrix::Identity(3, 2)}, {Vector::Zero(2)}, Activation::ReLU), DimensionError);
  EXPECT_THROW(from_explicit({Matrix::Identity(3, 2)}, {}, Activation::ReLU), DimensionError);
}

TEST(ForwardCapture, IdentityLayer) {
  const Network net = from_explicit({Matrix::Identity(2, 2)}, {Vector::Zero(2)}, Activation::HardTanh);
  const Vector x = (Vector(2) << 0.3, -0.2).finished();
  const LayerCapture cap = net.forward_capture(x);
  ASSERT_EQ(cap.activations.size(), 1u);
  EXPECT_EQ(cap.activations[0], x);
  EXPECT_EQ(cap.states[0][0], NeuronState::Linear);
  EXPECT_FALSE(cap.output.has_value());
}

TEST(ForwardCapture, LargeInputsSaturateFirstLayer) {
  const Network net = sample_network(Architecture{8, {16, 16}, 4, Activation::HardTanh}, InitSpec{1.0, 0.0, 3});
  Rng rng(9);
  Vector x(8);
  for (Eigen::Index i = 0; i < 8; ++i) x[i] = rng.gaussian();
  const LayerCapture cap = net.forward_capture(1000.0 * x);
  for (NeuronState s : cap.states[0]) EXPECT_NE(s, NeuronState::Linear);
}

TEST(ForwardCapture, MatchesPlainForwardAndStates) {
  const Network net = sample_network(Architecture{5, {7, 6, 5}, 3, Activation::HardTanh}, InitSpec{6.0, 1.0, 11});
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    Vector x(5);
    for (Eigen::Index i = 0; i < 5; ++i) x[i] = rng.gaussian();
    const LayerCapture cap = net.forward_capture(x);
    EXPECT_EQ(*cap.output, net.forward(x));
    for (std::size_t d = 0; d < cap.activations.size(); ++d) {
      for (Eigen::Index i = 0; i < cap.activations[d].size(); ++i) {
        const double a = cap.activations[d][i];
        const NeuronState s = cap.states[d][static_cast<std::size_t>(i)];
        EXPECT_GE(a, -1.0);
        EXPECT_LE(a, 1.0);
        EXPECT_EQ(a, apply_activation(Activation::HardTanh, cap.pre_activations[d][i]));
        EXPECT_EQ(s == NeuronState::SatHigh, a == 1.0);
        EXPECT_EQ(s == NeuronState::SatLow, a == -1.0);
      }
    }
  }
}

TEST(ForwardCapture, ReluStatesAndRange) {
  const Network net = sample_network(Architecture{4, {9, 9}, 2, Activation::ReLU}, InitSpec{2.0, 0.5, 8});
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    Vector x(4);
    for (Eigen::Index i = 0; i < 4; ++i) x[i] = rng.gaussian();
    const LayerCapture cap = net.forward_capture(x);
    for (std::size_t d = 0; d < cap.activations.size(); ++d)
      for (Eigen::Index i = 0; i < cap.activations[d].size(); ++i) {
        EXPECT_GE(cap.activations[d][i], 0.0);
        EXPECT_EQ(cap.states[d][static_cast<std::size_t>(i)] == NeuronState::Inactive, cap.activations[d][i] == 0.0);
      }
  }
}

TEST(ForwardCapture, ComposesLayerWise) {
  const Network net = sample_network(Architecture{3, {6, 6, 6, 6}, 2, Activation::HardTanh}, InitSpec{4.0, 1.0, 21});
  const Vector x = (Vector(3) << 0.2, -0.7, 0.4).finished();
  const LayerCapture full = net.forward_capture(x);
  Vector z = x;
  for (std::size_t d = 0; d < net.depth(); ++d) {
    const LayerCapture step = net.slice(d, d + 1).forward_capture(z);
    EXPECT_EQ(step.pre_activations[0], full.pre_activations[d]);
    EXPECT_EQ(step.activations[0], full.activations[d]);
    z = step.activations[0];
  }
  const LayerCapture head = net.slice(0, 2).forward_capture(x);
  const LayerCapture tail = net.slice(2, 4).forward_capture(head.activations.back());
  EXPECT_EQ(tail.activations.back(), full.activations.back());
}

TEST(ForwardCapture, DimensionMismatch) {
  const Network net = sample_network(small_arch(), InitSpec{1.0, 0.0, 1});
  EXPECT_THROW(net.forward_capture(Vector::Zero(3)), DimensionError);
  EXPECT_THROW(net.forward(Vector::Zero(1)), DimensionError);
}

TEST(ForwardCapture, ReportsNonFiniteIntermediate) {
  Matrix w = Matrix::Constant(1, 1, 1e308);
  const Network net = from_explicit({w, w}, {Vector::Zero(1), Vector::Zero(1)}, Activation::ReLU);
  EXPECT_THROW(net.forward_capture(Vector::Constant(1, 10.0)), NumericError);
}

TEST(Propagate, MatchesPerPointForward) {
  const Network net = sample_network(Architecture{3, {5, 4}, 2, Activation::HardTanh}, InitSpec{4.0, 1.0, 2});
  Matrix pts(3, 4);
  pts << 0.1, 0.5, -0.3, 2.0, -0.2, 0.0, 0.8, -1.0, 0.3, 0.1, 0.2, 0.4;
  const Matrix out = propagate(net, pts, 2);
  for (Eigen::Index c = 0; c < 4; ++c) {
    const Vector z = net.forward_capture(pts.col(c)).activations.back();
    for (Eigen::Index r = 0; r < z.size(); ++r) EXPECT_DOUBLE_EQ(out(r, c), z[r]);
  }
}

TEST(NetworkFormat, RoundTripsBitExact) {
  const InitSpec init{16.0, 1.0, 77};
  const Network net = sample_network(Architecture{3, {5, 4}, 2, Activation::ReLU}, init);
  std::stringstream ss;
  write_network(ss, net, init);
  const StoredNetwork back = read_network(ss);
  EXPECT_TRUE(back.network == net);
  ASSERT_TRUE(back.init.has_value());
  EXPECT_EQ(back.init->seed, 77u);
  EXPECT_EQ(back.init->sigma_w_sq, 16.0);
  EXPECT_EQ(network_to_string(back.network, back.init), network_to_string(net, init));
}

TEST(NetworkFormat, RoundTripsWithoutReadout) {
  const Network net = from_explicit({Matrix::Identity(2, 2)}, {Vector::Constant(2, 0.1)}, Activation::HardTanh);
  std::stringstream ss(network_to_string(net));
  const StoredNetwork back = read_network(ss);
  EXPECT_TRUE(back.network == net);
  EXPECT_FALSE(back.init.has_value());
}

TEST(NetworkFormat, RejectsCorruptInput) {
  const Network net = sample_network(small_arch(), InitSpec{1.0, 1.0, 1});
  std::string text = network_to_string(net);
  {
    std::stringstream ss(text.substr(0, text.size() / 2));
    EXPECT_THROW(read_network(ss), FormatError);
  }
  {
    std::string bad = text;
    bad.replace(0, 15, "other-format-xx");
    std::stringstream ss(bad);
    EXPECT_THROW(read_network(ss), FormatError);
  }
  {
    std::string bad = text;
    bad.replace(bad.find(" 1\n"), 3, " 9\n");
    std::stringstream ss(bad);
    EXPECT_THROW(read_network(ss), FormatError);
  }
}

TEST(RngTest, GaussianMomentsAndDeterminism) {
  Rng a(123), b(123);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double g = a.gaussian();
    EXPECT_EQ(g, b.gaussian());
    sum += g;
    sq += g * g;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  EXPECT_NEAR(sq / n, 1.0, 0.01);
}

TEST(RngTest, UniformIndexInRange) {
  Rng rng(1);
  std::vector<int> hits(7, 0);
  for (int i = 0; i < 7000; ++i) ++hits[rng.uniform_index(7)];
  for (int h : hits) EXPECT_GT(h, 800);
}

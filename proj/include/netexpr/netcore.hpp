#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace netexpr {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Activation : std::uint8_t { HardTanh, ReLU };

std::string_view to_string(Activation kind);
Activation parse_activation(std::string_view name);

// Discrete neuron state. Boundary values (h = +-1 for hard-tanh, h = 0 for
// ReLU) belong to the saturated / inactive state.
enum class NeuronState : std::uint8_t { SatLow, Linear, SatHigh, Inactive, Active };

std::string_view to_string(NeuronState state);

class DimensionError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct Architecture {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden_widths;
  std::size_t output_dim = 1;
  Activation activation = Activation::HardTanh;

  std::size_t depth() const { return hidden_widths.size(); }
  void validate() const;
};

struct InitSpec {
  double sigma_w_sq = 1.0;
  double sigma_b_sq = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

double apply_activation(Activation kind, double h);
NeuronState neuron_state(Activation kind, double h);
// Derivative of the activation, with the subgradient at kinks taken as 0.
double activation_slope(Activation kind, double h);

struct Layer {
  Matrix weights;  // fan_out x fan_in
  Vector bias;     // fan_out

  std::size_t fan_in() const { return static_cast<std::size_t>(weights.cols()); }
  std::size_t fan_out() const { return static_cast<std::size_t>(weights.rows()); }
  bool operator==(const Layer& other) const { return weights == other.weights && bias == other.bias; }
};

// Per-hidden-layer record of one forward pass.
struct LayerCapture {
  std::vector<Vector> pre_activations;
  std::vector<Vector> activations;
  std::vector<std::vector<NeuronState>> states;
  std::optional<Vector> output;  // linear readout, when the network has one
};

// A fully connected piecewise-linear network. Hidden layers apply the
// activation; an optional final readout layer is linear. Immutable once built.
class Network {
public:
  Network(std::vector<Layer> hidden, Activation activation, std::optional<Layer> readout = std::nullopt);

  Activation activation() const { return activation_; }
  std::size_t input_dim() const { return hidden_.front().fan_in(); }
  std::size_t depth() const { return hidden_.size(); }
  std::size_t width(std::size_t layer) const { return hidden_.at(layer).fan_out(); }
  std::size_t hidden_neurons() const;
  const std::vector<Layer>& hidden() const { return hidden_; }
  const Layer& hidden(std::size_t layer) const { return hidden_.at(layer); }
  const std::optional<Layer>& readout() const { return readout_; }
  bool has_readout() const { return readout_.has_value(); }
  std::size_t output_dim() const;

  // Final value: readout logits if present, else last hidden activation.
  Vector forward(const Vector& x) const;
  LayerCapture forward_capture(const Vector& x) const;

  // Hidden layers [first, last) as a network without readout.
  Network slice(std::size_t first, std::size_t last) const;

  Network with_hidden_layer(std::size_t layer, Layer replacement) const;
  Network with_readout(std::optional<Layer> readout) const;

  bool operator==(const Network& other) const;

private:
  std::vector<Layer> hidden_;
  std::optional<Layer> readout_;
  Activation activation_;
};

// Draws weights ~ N(0, sigma_w_sq / fan_in) and biases ~ N(0, sigma_b_sq)
// layer by layer (weights row-major, then bias), hidden layers first, then
// the readout. Fully determined by init.seed.
Network sample_network(const Architecture& arch, const InitSpec& init);

// Same draw order as sample_network for a single layer, from a caller stream.
class Rng;
Layer sample_layer(std::size_t fan_in, std::size_t fan_out, double sigma_w_sq, double sigma_b_sq, Rng& rng);

Network from_explicit(std::vector<Matrix> weights, std::vector<Vector> biases, Activation activation,
                      std::optional<Layer> readout = std::nullopt);

inline LayerCapture forward_capture(const Network& net, const Vector& x) { return net.forward_capture(x); }

// In-place activation over a block of pre-activations.
void activate(Activation kind, Matrix& values);

// Propagates a batch (one point per column) through hidden layers [0, upto)
// and returns the activations of layer upto-1. upto = 0 returns the input.
Matrix propagate(const Network& net, const Matrix& points, std::size_t upto);

}  // namespace netexpr

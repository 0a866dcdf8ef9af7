#include "netexpr/netcore.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "netexpr/rng.hpp"

namespace netexpr {

std::string_view to_string(Activation kind) {
  switch (kind) {
    case Activation::HardTanh: return "hardtanh";
    case Activation::ReLU: return "relu";
  }
  return "?";
}

Activation parse_activation(std::string_view name) {
  if (name == "hardtanh" || name == "hard-tanh" || name == "HardTanh") return Activation::HardTanh;
  if (name == "relu" || name == "ReLU") return Activation::ReLU;
  throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

std::string_view to_string(NeuronState state) {
  switch (state) {
    case NeuronState::SatLow: return "sat_low";
    case NeuronState::Linear: return "linear";
    case NeuronState::SatHigh: return "sat_high";
    case NeuronState::Inactive: return "inactive";
    case NeuronState::Active: return "active";
  }
  return "?";
}

void Architecture::validate() const {
  if (input_dim == 0) throw std::invalid_argument("architecture: input_dim must be >= 1");
  if (output_dim == 0) throw std::invalid_argument("architecture: output_dim must be >= 1");
  if (hidden_widths.empty()) throw std::invalid_argument("architecture: hidden_widths must be non-empty");
  for (std::size_t w : hidden_widths)
    if (w == 0) throw std::invalid_argument("architecture: hidden widths must be >= 1");
}

void InitSpec::validate() const {
  if (!(sigma_w_sq > 0.0) || !std::isfinite(sigma_w_sq))
    throw std::invalid_argument("init: sigma_w_sq must be finite and > 0");
  if (!(sigma_b_sq >= 0.0) || !std::isfinite(sigma_b_sq))
    throw std::invalid_argument("init: sigma_b_sq must be finite and >= 0");
}

double apply_activation(Activation kind, double h) {
  if (!std::isfinite(h)) throw NumericError("apply_activation: non-finite input");
  switch (kind) {
    case Activation::HardTanh: return std::max(-1.0, std::min(1.0, h));
    case Activation::ReLU: return std::max(0.0, h);
  }
  return h;
}

NeuronState neuron_state(Activation kind, double h) {
  if (kind == Activation::ReLU) return h > 0.0 ? NeuronState::Active : NeuronState::Inactive;
  if (h <= -1.0) return NeuronState::SatLow;
  if (h >= 1.0) return NeuronState::SatHigh;
  return NeuronState::Linear;
}

double activation_slope(Activation kind, double h) {
  if (kind == Activation::ReLU) return h > 0.0 ? 1.0 : 0.0;
  return std::abs(h) < 1.0 ? 1.0 : 0.0;
}

void activate(Activation kind, Matrix& values) {
  if (kind == Activation::HardTanh)
    values = values.cwiseMax(-1.0).cwiseMin(1.0);
  else
    values = values.cwiseMax(0.0);
}

namespace {

void check_finite(const Layer& layer, std::size_t index) {
  if (!layer.weights.allFinite() || !layer.bias.allFinite()) {
    std::ostringstream msg;
    msg << "layer " << index << " has non-finite parameters";
    throw NumericError(msg.str());
  }
}

}  // namespace

Network::Network(std::vector<Layer> hidden, Activation activation, std::optional<Layer> readout)
    : hidden_(std::move(hidden)), readout_(std::move(readout)), activation_(activation) {
  if (hidden_.empty()) throw DimensionError("network needs at least one hidden layer");
  for (std::size_t d = 0; d < hidden_.size(); ++d) {
    const Layer& layer = hidden_[d];
    if (layer.fan_in() == 0 || layer.fan_out() == 0) throw DimensionError("layer with zero dimension");
    if (static_cast<std::size_t>(layer.bias.size()) != layer.fan_out()) {
      std::ostringstream msg;
      msg << "layer " << d << ": bias length " << layer.bias.size() << " != fan_out " << layer.fan_out();
      throw DimensionError(msg.str());
    }
    if (d > 0 && layer.fan_in() != hidden_[d - 1].fan_out()) {
      std::ostringstream msg;
      msg << "layer " << d << ": fan_in " << layer.fan_in() << " != previous fan_out " << hidden_[d - 1].fan_out();
      throw DimensionError(msg.str());
    }
    check_finite(layer, d);
  }
  if (readout_) {
    if (readout_->fan_in() != hidden_.back().fan_out() ||
        static_cast<std::size_t>(readout_->bias.size()) != readout_->fan_out() || readout_->fan_out() == 0)
      throw DimensionError("readout dimensions do not chain with the last hidden layer");
    check_finite(*readout_, hidden_.size());
  }
}

std::size_t Network::hidden_neurons() const {
  return std::accumulate(hidden_.begin(), hidden_.end(), std::size_t{0},
                         [](std::size_t acc, const Layer& l) { return acc + l.fan_out(); });
}

std::size_t Network::output_dim() const { return readout_ ? readout_->fan_out() : hidden_.back().fan_out(); }

Vector Network::forward(const Vector& x) const {
  if (static_cast<std::size_t>(x.size()) != input_dim()) throw DimensionError("forward: input dimension mismatch");
  Vector z = x;
  for (const Layer& layer : hidden_) {
    Vector h = layer.weights * z + layer.bias;
    z = activation_ == Activation::HardTanh ? Vector(h.cwiseMax(-1.0).cwiseMin(1.0)) : Vector(h.cwiseMax(0.0));
  }
  if (readout_) z = readout_->weights * z + readout_->bias;
  if (!z.allFinite()) throw NumericError("forward: non-finite output");
  return z;
}

LayerCapture Network::forward_capture(const Vector& x) const {
  if (static_cast<std::size_t>(x.size()) != input_dim())
    throw DimensionError("forward_capture: input dimension mismatch");
  LayerCapture cap;
  cap.pre_activations.reserve(hidden_.size());
  cap.activations.reserve(hidden_.size());
  cap.states.reserve(hidden_.size());
  const Vector* z = &x;
  for (std::size_t d = 0; d < hidden_.size(); ++d) {
    const Layer& layer = hidden_[d];
    Vector h = layer.weights * (*z) + layer.bias;
    if (!h.allFinite()) {
      std::ostringstream msg;
      msg << "forward_capture: non-finite pre-activation at layer " << d + 1;
      throw NumericError(msg.str());
    }
    Vector a(h.size());
    std::vector<NeuronState> states(static_cast<std::size_t>(h.size()));
    for (Eigen::Index i = 0; i < h.size(); ++i) {
      a[i] = apply_activation(activation_, h[i]);
      states[static_cast<std::size_t>(i)] = neuron_state(activation_, h[i]);
    }
    cap.pre_activations.push_back(std::move(h));
    cap.activations.push_back(std::move(a));
    cap.states.push_back(std::move(states));
    z = &cap.activations.back();
  }
  if (readout_) {
    Vector out = readout_->weights * (*z) + readout_->bias;
    if (!out.allFinite()) throw NumericError("forward_capture: non-finite readout");
    cap.output = std::move(out);
  }
  return cap;
}

Network Network::slice(std::size_t first, std::size_t last) const {
  if (first >= last || last > hidden_.size()) throw std::out_of_range("slice: bad layer range");
  return Network(std::vector<Layer>(hidden_.begin() + static_cast<std::ptrdiff_t>(first),
                                    hidden_.begin() + static_cast<std::ptrdiff_t>(last)),
                 activation_);
}

Network Network::with_hidden_layer(std::size_t layer, Layer replacement) const {
  std::vector<Layer> hidden = hidden_;
  hidden.at(layer) = std::move(replacement);
  return Network(std::move(hidden), activation_, readout_);
}

Network Network::with_readout(std::optional<Layer> readout) const { return Network(hidden_, activation_, std::move(readout)); }

bool Network::operator==(const Network& other) const {
  return activation_ == other.activation_ && hidden_ == other.hidden_ && readout_ == other.readout_;
}

Layer sample_layer(std::size_t fan_in, std::size_t fan_out, double sigma_w_sq, double sigma_b_sq, Rng& rng) {
  Layer layer{Matrix(static_cast<Eigen::Index>(fan_out), static_cast<Eigen::Index>(fan_in)),
              Vector(static_cast<Eigen::Index>(fan_out))};
  const double w_std = std::sqrt(sigma_w_sq / static_cast<double>(fan_in));
  const double b_std = std::sqrt(sigma_b_sq);
  for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
    for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) layer.weights(r, c) = w_std * rng.gaussian();
  // Bias draws are consumed even at zero variance so that streams line up
  // across sigma_b settings.
  for (Eigen::Index r = 0; r < layer.bias.size(); ++r) {
    const double g = rng.gaussian();
    layer.bias[r] = sigma_b_sq > 0.0 ? b_std * g : 0.0;
  }
  return layer;
}

Network sample_network(const Architecture& arch, const InitSpec& init) {
  arch.validate();
  init.validate();
  Rng rng(init.seed);
  std::vector<Layer> hidden;
  hidden.reserve(arch.depth());
  std::size_t fan_in = arch.input_dim;
  for (std::size_t width : arch.hidden_widths) {
    hidden.push_back(sample_layer(fan_in, width, init.sigma_w_sq, init.sigma_b_sq, rng));
    fan_in = width;
  }
  Layer readout = sample_layer(fan_in, arch.output_dim, init.sigma_w_sq, init.sigma_b_sq, rng);
  return Network(std::move(hidden), arch.activation, std::move(readout));
}

Network from_explicit(std::vector<Matrix> weights, std::vector<Vector> biases, Activation activation,
                      std::optional<Layer> readout) {
  if (weights.size() != biases.size()) throw DimensionError("from_explicit: weights/biases count mismatch");
  std::vector<Layer> layers;
  layers.reserve(weights.size());
  for (std::size_t d = 0; d < weights.size(); ++d) layers.push_back(Layer{std::move(weights[d]), std::move(biases[d])});
  return Network(std::move(layers), activation, std::move(readout));
}

Matrix propagate(const Network& net, const Matrix& points, std::size_t upto) {
  if (static_cast<std::size_t>(points.rows()) != net.input_dim()) throw DimensionError("propagate: input dimension mismatch");
  Matrix z = points;
  for (std::size_t d = 0; d < upto; ++d) {
    const Layer& layer = net.hidden(d);
    Matrix h = layer.weights * z;
    h.colwise() += layer.bias;
    activate(net.activation(), h);
    z = std::move(h);
  }
  return z;
}

}  // namespace netexpr

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "netexpr/netcore.hpp"
#include "netexpr/trajkit.hpp"

namespace netexpr {

// ---------------------------------------------------------------------------
// Transitions
// ---------------------------------------------------------------------------

enum class TransitionMode : std::uint8_t {
  SignChange,      // activation sign flips (h crosses 0)
  RegionBoundary,  // neuron state changes; hard-tanh counts +-1 crossings
};

struct TransitionScope {
  // nullopt = all hidden layers; otherwise a 1-based layer index.
  std::optional<std::size_t> layer;

  static TransitionScope all() { return {}; }
  static TransitionScope only(std::size_t layer) { return {layer}; }
};

struct TransitionCount {
  std::vector<std::uint64_t> per_layer;  // every hidden layer, 1..n
  std::uint64_t total = 0;               // summed over the scope
  std::size_t samples = 0;
  bool converged = true;
};

// Counts transitions along the sampled trajectory, doubling the density until
// the scoped count is identical across one doubling or the cap is reached.
TransitionCount count_transitions(const Network& net, const Trajectory& traj, TransitionScope scope = TransitionScope::all(),
                                  const RefinePolicy& refine = {}, TransitionMode mode = TransitionMode::SignChange);

// Counts at one fixed density.
TransitionCount transitions_at(const Network& net, const Trajectory& traj, std::size_t num_points,
                               TransitionScope scope = TransitionScope::all(),
                               TransitionMode mode = TransitionMode::SignChange);

// ---------------------------------------------------------------------------
// Activation patterns and regions
// ---------------------------------------------------------------------------

struct ActivationPattern {
  std::vector<NeuronState> states;    // every hidden neuron, layer by layer
  std::vector<std::size_t> offsets;   // offsets[d] = index of layer d+1's first neuron; back() = size

  NeuronState at(std::size_t layer, std::size_t neuron) const { return states.at(offsets.at(layer) + neuron); }
  bool operator==(const ActivationPattern& other) const { return states == other.states; }
  std::size_t hash() const;
};

ActivationPattern activation_pattern(const Network& net, const Vector& x);

// A 2-plane of input space: x(u, v) = origin + u * basis_u + v * basis_v
// for (u, v) in [u_min, u_max] x [v_min, v_max].
struct Window {
  Vector origin;
  Vector basis_u;
  Vector basis_v;
  double u_min = -1.0, u_max = 1.0;
  double v_min = -1.0, v_max = 1.0;

  // [-1,1]^2 on the first two coordinate axes.
  static Window standard(std::size_t input_dim);
  Vector point(double u, double v) const;
  void validate(std::size_t input_dim) const;
};

struct RegionMap {
  Window window;
  std::size_t resolution = 0;
  // Row-major, row = v index, column = u index; ids in first-seen order.
  std::vector<std::uint32_t> ids;
  std::size_t count = 0;

  std::uint32_t id(std::size_t row, std::size_t col) const { return ids[row * resolution + col]; }
  // Window coordinate of grid index i along u (or v): lower cell corner.
  double u_at(std::size_t i) const;
  double v_at(std::size_t i) const;
};

// Evaluates activation patterns at the lower-left corner of every cell of a
// resolution x resolution grid (so doubling the resolution nests the grids)
// and counts the distinct patterns. Regions thinner than a cell can be missed.
RegionMap count_regions_2d(const Network& net, const Window& window, std::size_t resolution);

// ---------------------------------------------------------------------------
// Boundaries
// ---------------------------------------------------------------------------

struct Point2 {
  double u = 0.0;
  double v = 0.0;
};

struct BoundaryPolyline {
  std::size_t layer = 0;  // 1-based
  std::size_t neuron = 0;
  double level = 0.0;     // pre-activation level traced: 0, -1 or +1
  std::vector<Point2> points;
  bool closed = false;
};

struct BoundarySet {
  Window window;
  std::size_t resolution = 0;
  std::vector<BoundaryPolyline> polylines;
};

// Traces the level sets h = 0 (ReLU) or h = -1 and h = +1 (hard-tanh) of
// every neuron in layers 1..up_to_layer over a (resolution + 1)^2 vertex grid
// by marching squares, joining cell segments into polylines.
BoundarySet boundary_contours(const Network& net, const Window& window, std::size_t resolution, std::size_t up_to_layer);

// ---------------------------------------------------------------------------
// Dichotomies
// ---------------------------------------------------------------------------

struct DichotomyMode {
  enum class Kind : std::uint8_t { AllWeights, Layer } kind = Kind::AllWeights;
  std::size_t layer = 0;  // 1-based, for Kind::Layer

  static DichotomyMode all_weights() { return {}; }
  static DichotomyMode resample_layer(std::size_t layer) { return {Kind::Layer, layer}; }
};

struct DichotomyReport {
  std::size_t s = 0;
  std::size_t samples = 0;
  std::size_t distinct = 0;
  std::size_t ties = 0;  // points with readout exactly 0, labelled positive
  DichotomyMode mode;
};

// Labels S by the sign of a scalar readout of the last hidden layer. The
// readout is drawn once from init.seed; the base network (Layer mode) and the
// per-sample draws come from streams derived from init.seed.
DichotomyReport count_dichotomies(const Architecture& arch, const InitSpec& init, const std::vector<Vector>& inputs,
                                  std::size_t samples, DichotomyMode mode);

// s points i.i.d. uniform on the unit sphere in R^dim.
std::vector<Vector> random_sphere_points(std::size_t s, std::size_t dim, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Test fixtures with known arrangement counts
// ---------------------------------------------------------------------------

// k lines in general position inside the window: pairwise angles at least
// min_angle apart and every pairwise intersection at least `margin` inside
// the window, so the 2-D arrangement has 1 + k + k(k-1)/2 regions there.
// Returned as a k x 2 ReLU layer acting on window coordinates.
Layer random_arrangement_layer(std::size_t k, const Window& window, std::uint64_t seed, double margin = 0.2,
                               double min_angle = 0.15);

// 1 + k + k(k-1)/2
std::size_t general_position_regions(std::size_t k);

}  // namespace netexpr

template <>
struct std::hash<netexpr::ActivationPattern> {
  std::size_t operator()(const netexpr::ActivationPattern& p) const noexcept { return p.hash(); }
};

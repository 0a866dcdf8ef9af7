#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "netexpr/netcore.hpp"

namespace netexpr {

enum class TrajectoryKind : std::uint8_t { Circular, Segment, Custom };

// A discretized 1-D curve x(t) in input space. Circular and Segment curves
// keep their endpoints so they can be resampled at any density; Custom curves
// are treated as the polyline through their points.
class Trajectory {
public:
  // x(t) = cos(t) x0 + sin(t) x1, t uniform on [0, pi/2].
  static Trajectory circular(const Vector& x0, const Vector& x1, std::size_t num_points);
  // x(s) = (1 - s) x0 + s x1, s uniform on [0, 1].
  static Trajectory segment(const Vector& x0, const Vector& x1, std::size_t num_points);
  // points: one column per sample; params strictly increasing.
  static Trajectory custom(std::vector<double> params, Matrix points);

  TrajectoryKind kind() const { return kind_; }
  std::size_t dim() const { return static_cast<std::size_t>(points_.rows()); }
  std::size_t size() const { return params_.size(); }
  const std::vector<double>& params() const { return params_; }
  const Matrix& points() const { return points_; }

  // Points [first, first + count) of the same curve discretized with
  // `num_points` uniformly spaced parameter values.
  Matrix sample(std::size_t num_points, std::size_t first, std::size_t count) const;
  Trajectory resampled(std::size_t num_points) const;

private:
  Trajectory(TrajectoryKind kind, std::vector<double> params, Matrix points, Vector a, Vector b);
  double param_at(std::size_t num_points, std::size_t index) const;

  TrajectoryKind kind_;
  std::vector<double> params_;
  Matrix points_;
  Vector a_, b_;  // endpoints for Circular / Segment
};

inline Trajectory circular_interpolation(const Vector& x0, const Vector& x1, std::size_t num_points) {
  return Trajectory::circular(x0, x1, num_points);
}

// Polyline length: sum of Euclidean norms of consecutive column differences.
double arc_length(const Matrix& points);

struct RefinePolicy {
  std::size_t initial_samples = 1024;
  double rel_tol = 1e-3;
  std::size_t max_samples = std::size_t{1} << 20;

  void validate() const;
  // Doubling step; grids stay nested (n -> 2n - 1).
  static std::size_t refine(std::size_t n) { return 2 * n - 1; }
};

struct LengthProfile {
  double input_length = 0.0;
  std::vector<double> layer_lengths;  // hidden layers 1..n
  std::optional<double> output_length;
  std::size_t samples = 0;
  bool converged = true;
};

struct ProfileOptions {
  RefinePolicy refine;
  bool include_output = false;
};

// Lengths of the trajectory image at every hidden layer, resampling at
// doubled density until every layer changes by less than rel_tol.
LengthProfile layer_length_profile(const Network& net, const Trajectory& traj, const ProfileOptions& options = {});

// Nested sample counts visited by refinement, coarsest first, capped at
// refine.max_samples.
std::vector<std::size_t> refinement_levels(const Trajectory& traj, const RefinePolicy& refine);

// Lengths at one fixed density, no refinement.
LengthProfile layer_lengths_at(const Network& net, const Trajectory& traj, std::size_t num_points,
                               bool include_output = false);

// Per-layer growth factor of the trajectory-length lower bound, with the
// big-O constant taken as 1:
//   g = sigma_w / (sigma_w^2 + sigma_b^2)^(1/4) * sqrt(k) / sqrt(sqrt(sigma_w^2 + sigma_b^2) + k)
double theorem1_factor(std::size_t k, double sigma_w, double sigma_b);
// g^depth
double theorem1_bound(std::size_t k, double sigma_w, double sigma_b, std::size_t depth);

struct BoundSpec {
  std::size_t k = 1;
  double sigma_w = 1.0;
  double sigma_b = 0.0;
  std::size_t depth = 0;
  double per_layer_factor = 1.0;
  double bound_value = 1.0;
  static constexpr double kBigOConstant = 1.0;

  static BoundSpec evaluate(std::size_t k, double sigma_w, double sigma_b, std::size_t depth);
};

struct GrowthConfig {
  std::size_t width = 32;
  double sigma_w_sq = 4.0;
  double sigma_b_sq = 1.0;
  std::size_t depth = 8;
};

struct GrowthSweepSpec {
  std::vector<std::size_t> widths{32};
  std::vector<double> sigma_w_sq{4.0};
  std::vector<double> sigma_b_sq{1.0};
  std::vector<std::size_t> depths{8};
  std::size_t input_dim = 32;
  std::size_t replicas = 50;
  std::uint64_t seed = 0;
  Activation activation = Activation::HardTanh;
  ProfileOptions profile;

  // Grid in fixed nesting order: width, sigma_w_sq, sigma_b_sq, depth.
  std::vector<GrowthConfig> configs() const;
};

struct ReplicaProfile {
  std::size_t replica = 0;
  std::uint64_t seed = 0;
  LengthProfile profile;
};

struct GrowthStats {
  GrowthConfig config;
  std::size_t replicas = 0;
  std::uint64_t base_seed = 0;
  // Index d-1 holds statistics of l(z^(d)) / l(z^(d-1)) for d = 1..depth,
  // with layer 0 the input trajectory.
  std::vector<double> mean_ratio;
  std::vector<double> std_ratio;
  // Index d for d = 0..depth (0 = input).
  std::vector<double> mean_length;
  std::vector<double> mean_log_length;
  double bound_factor = 0.0;
  bool converged = true;
  std::vector<ReplicaProfile> profiles;
};

struct GrowthReplicaSetup {
  std::uint64_t seed = 0;
  Network network;
  Trajectory trajectory;
};

// Network and trajectory of one replica: the network is sampled from the
// replica seed, the endpoints from a stream derived from it.
GrowthReplicaSetup growth_replica_setup(const GrowthConfig& config, const GrowthSweepSpec& spec, std::size_t replica);

// One replica of a growth experiment: unit-norm Gaussian endpoints, circular
// trajectory, sampled network. Network seed is the replica seed itself.
ReplicaProfile growth_replica(const GrowthConfig& config, const GrowthSweepSpec& spec, std::size_t replica);

GrowthStats growth_stats(const GrowthConfig& config, const GrowthSweepSpec& spec, unsigned threads = 1);
std::vector<GrowthStats> growth_sweep(const GrowthSweepSpec& spec, unsigned threads = 1);

// Gaussian vector normalized to unit norm.
Vector random_unit_vector(std::size_t dim, class Rng& rng);

}  // namespace netexpr

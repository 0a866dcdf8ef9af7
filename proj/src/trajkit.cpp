#include "netexpr/trajkit.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "netexpr/parallel.hpp"
#include "netexpr/rng.hpp"
#include "netexpr/stats.hpp"

namespace netexpr {

namespace {

constexpr std::size_t kChunk = 4096;

void check_endpoints(const Vector& x0, const Vector& x1, std::size_t num_points) {
  if (x0.size() != x1.size() || x0.size() == 0) throw DimensionError("trajectory endpoints must share a non-zero dimension");
  if (num_points < 2) throw std::invalid_argument("trajectory needs at least 2 points");
  if (!x0.allFinite() || !x1.allFinite()) throw NumericError("trajectory endpoints must be finite");
}

}  // namespace

Trajectory::Trajectory(TrajectoryKind kind, std::vector<double> params, Matrix points, Vector a, Vector b)
    : kind_(kind), params_(std::move(params)), points_(std::move(points)), a_(std::move(a)), b_(std::move(b)) {}

Trajectory Trajectory::circular(const Vector& x0, const Vector& x1, std::size_t num_points) {
  check_endpoints(x0, x1, num_points);
  const double n0 = x0.squaredNorm(), n1 = x1.squaredNorm(), dot = x0.dot(x1);
  // Gram determinant relative to its scale; zero for parallel endpoints.
  if (n0 == 0.0 || n1 == 0.0 || n0 * n1 - dot * dot <= 1e-12 * n0 * n1)
    throw std::invalid_argument("circular_interpolation: endpoints are linearly dependent");
  Trajectory traj(TrajectoryKind::Circular, {}, {}, x0, x1);
  traj.points_ = traj.sample(num_points, 0, num_points);
  traj.params_.resize(num_points);
  for (std::size_t i = 0; i < num_points; ++i) traj.params_[i] = traj.param_at(num_points, i);
  return traj;
}

Trajectory Trajectory::segment(const Vector& x0, const Vector& x1, std::size_t num_points) {
  check_endpoints(x0, x1, num_points);
  Trajectory traj(TrajectoryKind::Segment, {}, {}, x0, x1);
  traj.points_ = traj.sample(num_points, 0, num_points);
  traj.params_.resize(num_points);
  for (std::size_t i = 0; i < num_points; ++i) traj.params_[i] = traj.param_at(num_points, i);
  return traj;
}

Trajectory Trajectory::custom(std::vector<double> params, Matrix points) {
  if (params.size() < 2) throw std::invalid_argument("trajectory needs at least 2 points");
  if (static_cast<std::size_t>(points.cols()) != params.size())
    throw DimensionError("trajectory: params and points differ in length");
  if (points.rows() == 0) throw DimensionError("trajectory points must have non-zero dimension");
  for (std::size_t i = 1; i < params.size(); ++i)
    if (!(params[i] > params[i - 1])) throw std::invalid_argument("trajectory params must be strictly increasing");
  if (!points.allFinite()) throw NumericError("trajectory points must be finite");
  return Trajectory(TrajectoryKind::Custom, std::move(params), std::move(points), {}, {});
}

double Trajectory::param_at(std::size_t num_points, std::size_t index) const {
  const double frac = static_cast<double>(index) / static_cast<double>(num_points - 1);
  switch (kind_) {
    case TrajectoryKind::Circular: return std::numbers::pi / 2.0 * frac;
    case TrajectoryKind::Segment: return frac;
    case TrajectoryKind::Custom: return frac * static_cast<double>(params_.size() - 1);
  }
  return frac;
}

Matrix Trajectory::sample(std::size_t num_points, std::size_t first, std::size_t count) const {
  if (num_points < 2) throw std::invalid_argument("trajectory sample needs at least 2 points");
  if (first + count > num_points) throw std::out_of_range("trajectory sample range");
  const Eigen::Index d = kind_ == TrajectoryKind::Custom ? points_.rows() : a_.size();
  Matrix out(d, static_cast<Eigen::Index>(count));
  for (std::size_t j = 0; j < count; ++j) {
    const std::size_t i = first + j;
    const double t = param_at(num_points, i);
    const auto col = static_cast<Eigen::Index>(j);
    switch (kind_) {
      case TrajectoryKind::Circular:
        if (i == 0)
          out.col(col) = a_;
        else if (i + 1 == num_points)
          out.col(col) = b_;
        else
          out.col(col) = std::cos(t) * a_ + std::sin(t) * b_;
        break;
      case TrajectoryKind::Segment:
        if (i + 1 == num_points)
          out.col(col) = b_;
        else
          out.col(col) = (1.0 - t) * a_ + t * b_;
        break;
      case TrajectoryKind::Custom: {
        // t is measured in vertex-index units; vertices are hit exactly when
        // (num_points - 1) is a multiple of (size - 1).
        const std::size_t last = params_.size() - 1;
        const std::size_t seg = std::min(static_cast<std::size_t>(t), last - 1);
        const double f = t - static_cast<double>(seg);
        const auto s = static_cast<Eigen::Index>(seg);
        if (f == 0.0)
          out.col(col) = points_.col(s);
        else if (f == 1.0)
          out.col(col) = points_.col(s + 1);
        else
          out.col(col) = (1.0 - f) * points_.col(s) + f * points_.col(s + 1);
        break;
      }
    }
  }
  return out;
}

Trajectory Trajectory::resampled(std::size_t num_points) const {
  if (kind_ == TrajectoryKind::Circular) return circular(a_, b_, num_points);
  if (kind_ == TrajectoryKind::Segment) return segment(a_, b_, num_points);
  Matrix pts = sample(num_points, 0, num_points);
  std::vector<double> params(num_points);
  for (std::size_t i = 0; i < num_points; ++i) {
    const double u = param_at(num_points, i);
    const std::size_t seg = std::min(static_cast<std::size_t>(u), params_.size() - 2);
    const double f = u - static_cast<double>(seg);
    params[i] = (1.0 - f) * params_[seg] + f * params_[seg + 1];
  }
  return custom(std::move(params), std::move(pts));
}

double arc_length(const Matrix& points) {
  if (points.cols() < 2) return 0.0;
  const Eigen::Index n = points.cols() - 1;
  return (points.rightCols(n) - points.leftCols(n)).colwise().norm().sum();
}

void RefinePolicy::validate() const {
  if (initial_samples < 2) throw std::invalid_argument("refine: initial_samples must be >= 2");
  if (!(rel_tol > 0.0)) throw std::invalid_argument("refine: rel_tol must be > 0");
  if (max_samples < initial_samples) throw std::invalid_argument("refine: max_samples < initial_samples");
}

namespace {

// Lengths of the nested discretizations n_j = (num_points - 1) / 2^j + 1,
// j = 0..coarser, from one pass over the finest grid. Coarse levels read
// every 2^j-th column of each chunk; chunks start at multiples of the
// largest stride, so every coarse pair is measured exactly once.
std::vector<LengthProfile> multilevel_lengths(const Network& net, const Trajectory& traj, std::size_t num_points,
                                              std::size_t coarser, bool include_output) {
  if (traj.dim() != net.input_dim()) throw DimensionError("layer_length_profile: trajectory dimension != network input");
  const std::size_t max_stride = std::size_t{1} << coarser;
  if ((num_points - 1) % max_stride != 0) throw std::logic_error("multilevel_lengths: grid is not nested");
  const std::size_t chunk = std::max(kChunk, max_stride);
  const std::size_t depth = net.depth();
  const bool want_output = include_output && net.has_readout();
  const std::size_t slots = depth + 2;  // input, hidden layers, output
  std::vector<std::vector<double>> acc(coarser + 1, std::vector<double>(slots, 0.0));

  auto accumulate = [&](const Matrix& z, std::size_t slot) {
    for (std::size_t j = 0; j <= coarser; ++j) {
      const std::size_t stride = std::size_t{1} << j;
      const auto cols = static_cast<Eigen::Index>((static_cast<std::size_t>(z.cols()) - 1) / stride + 1);
      if (cols < 2) continue;
      Eigen::Map<const Matrix, 0, Eigen::OuterStride<>> view(z.data(), z.rows(), cols,
                                                             Eigen::OuterStride<>(z.rows() * static_cast<Eigen::Index>(stride)));
      acc[j][slot] += (view.rightCols(cols - 1) - view.leftCols(cols - 1)).colwise().norm().sum();
    }
  };

  for (std::size_t first = 0; first + 1 < num_points; first += chunk) {
    const std::size_t count = std::min(chunk + 1, num_points - first);
    Matrix z = traj.sample(num_points, first, count);
    accumulate(z, 0);
    for (std::size_t d = 0; d < depth; ++d) {
      const Layer& layer = net.hidden(d);
      Matrix h = layer.weights * z;
      h.colwise() += layer.bias;
      activate(net.activation(), h);
      z = std::move(h);
      accumulate(z, d + 1);
    }
    if (want_output) accumulate(Matrix(net.readout()->weights * z), depth + 1);  // bias cancels in differences
  }

  std::vector<LengthProfile> out(coarser + 1);
  for (std::size_t j = 0; j <= coarser; ++j) {
    for (double l : acc[j])
      if (!std::isfinite(l)) throw NumericError("layer_length_profile: non-finite length");
    LengthProfile& p = out[j];
    p.input_length = acc[j][0];
    p.layer_lengths.assign(acc[j].begin() + 1, acc[j].begin() + 1 + static_cast<std::ptrdiff_t>(depth));
    if (want_output) p.output_length = acc[j][depth + 1];
    p.samples = (num_points - 1) / (std::size_t{1} << j) + 1;
  }
  return out;
}

bool within_tol(double prev, double cur, double tol) {
  if (prev == cur) return true;
  return std::abs(cur - prev) < tol * std::max(std::abs(prev), std::abs(cur));
}

bool profiles_agree(const LengthProfile& a, const LengthProfile& b, double tol) {
  if (!within_tol(a.input_length, b.input_length, tol)) return false;
  for (std::size_t d = 0; d < a.layer_lengths.size(); ++d)
    if (!within_tol(a.layer_lengths[d], b.layer_lengths[d], tol)) return false;
  if (a.output_length && b.output_length && !within_tol(*a.output_length, *b.output_length, tol)) return false;
  return true;
}

// Number of doublings evaluated ahead in one pass.
constexpr std::size_t kLookahead = 3;

}  // namespace

LengthProfile layer_lengths_at(const Network& net, const Trajectory& traj, std::size_t num_points, bool include_output) {
  if (num_points < 2) throw std::invalid_argument("layer_lengths_at needs at least 2 points");
  return multilevel_lengths(net, traj, num_points, 0, include_output).front();
}

std::vector<std::size_t> refinement_levels(const Trajectory& traj, const RefinePolicy& refine) {
  refine.validate();
  std::size_t n = refine.initial_samples;
  if (traj.kind() == TrajectoryKind::Custom) {
    // Start from a nested subdivision of the given polyline.
    n = traj.size();
    while (n < refine.initial_samples) n = RefinePolicy::refine(n);
  }
  std::vector<std::size_t> levels{n};
  while (RefinePolicy::refine(levels.back()) <= refine.max_samples) levels.push_back(RefinePolicy::refine(levels.back()));
  return levels;
}

// Equivalent to evaluating levels[0], levels[1], ... in turn and stopping at
// the first consecutive pair within tolerance; several levels are read from
// each pass over the finest grid.
LengthProfile layer_length_profile(const Network& net, const Trajectory& traj, const ProfileOptions& options) {
  const std::vector<std::size_t> levels = refinement_levels(traj, options.refine);
  std::size_t checked = 0;  // pairs (i, i+1) with i < checked are known to fail
  std::size_t bottom = 0;
  while (true) {
    const std::size_t top = std::min(bottom + kLookahead, levels.size() - 1);
    std::vector<LengthProfile> pass = multilevel_lengths(net, traj, levels[top], top - bottom, options.include_output);
    std::reverse(pass.begin(), pass.end());  // pass[i] now holds levels[bottom + i]
    for (std::size_t i = checked; i < top; ++i) {
      if (profiles_agree(pass[i - bottom], pass[i + 1 - bottom], options.refine.rel_tol)) {
        LengthProfile result = std::move(pass[i + 1 - bottom]);
        result.converged = true;
        return result;
      }
    }
    if (top == levels.size() - 1) {
      LengthProfile result = std::move(pass.back());
      result.converged = false;
      return result;
    }
    checked = top;
    bottom = top;
  }
}

double theorem1_factor(std::size_t k, double sigma_w, double sigma_b) {
  if (k == 0) throw std::invalid_argument("theorem1_factor: k must be >= 1");
  if (!(sigma_w > 0.0)) throw std::invalid_argument("theorem1_factor: sigma_w must be > 0");
  if (!(sigma_b >= 0.0)) throw std::invalid_argument("theorem1_factor: sigma_b must be >= 0");
  const double s = sigma_w * sigma_w + sigma_b * sigma_b;
  const double kk = static_cast<double>(k);
  return sigma_w / std::pow(s, 0.25) * std::sqrt(kk) / std::sqrt(std::sqrt(s) + kk);
}

double theorem1_bound(std::size_t k, double sigma_w, double sigma_b, std::size_t depth) {
  const double g = theorem1_factor(k, sigma_w, sigma_b);
  double bound = 1.0;
  for (std::size_t d = 0; d < depth; ++d) bound *= g;
  return bound;
}

BoundSpec BoundSpec::evaluate(std::size_t k, double sigma_w, double sigma_b, std::size_t depth) {
  BoundSpec spec;
  spec.k = k;
  spec.sigma_w = sigma_w;
  spec.sigma_b = sigma_b;
  spec.depth = depth;
  spec.per_layer_factor = theorem1_factor(k, sigma_w, sigma_b);
  spec.bound_value = theorem1_bound(k, sigma_w, sigma_b, depth);
  return spec;
}

std::vector<GrowthConfig> GrowthSweepSpec::configs() const {
  std::vector<GrowthConfig> out;
  for (std::size_t k : widths)
    for (double sw : sigma_w_sq)
      for (double sb : sigma_b_sq)
        for (std::size_t depth : depths) out.push_back(GrowthConfig{k, sw, sb, depth});
  return out;
}

Vector random_unit_vector(std::size_t dim, Rng& rng) {
  Vector v(static_cast<Eigen::Index>(dim));
  do {
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.gaussian();
  } while (v.norm() == 0.0);
  return v / v.norm();
}

GrowthReplicaSetup growth_replica_setup(const GrowthConfig& config, const GrowthSweepSpec& spec, std::size_t replica) {
  const std::uint64_t seed = replica_seed(spec.seed, replica);
  Rng endpoint_rng(mix_seed(seed, 1));
  const Vector x0 = random_unit_vector(spec.input_dim, endpoint_rng);
  const Vector x1 = random_unit_vector(spec.input_dim, endpoint_rng);
  Architecture arch;
  arch.input_dim = spec.input_dim;
  arch.hidden_widths.assign(config.depth, config.width);
  arch.output_dim = config.width;
  arch.activation = spec.activation;
  return GrowthReplicaSetup{seed, sample_network(arch, InitSpec{config.sigma_w_sq, config.sigma_b_sq, seed}),
                            Trajectory::circular(x0, x1, 2)};
}

ReplicaProfile growth_replica(const GrowthConfig& config, const GrowthSweepSpec& spec, std::size_t replica) {
  const GrowthReplicaSetup setup = growth_replica_setup(config, spec, replica);
  return ReplicaProfile{replica, setup.seed, layer_length_profile(setup.network, setup.trajectory, spec.profile)};
}

GrowthStats growth_stats(const GrowthConfig& config, const GrowthSweepSpec& spec, unsigned threads) {
  if (spec.replicas == 0) throw std::invalid_argument("growth sweep: replicas must be >= 1");
  if (config.depth == 0 || config.width == 0) throw std::invalid_argument("growth sweep: depth and width must be >= 1");
  GrowthStats stats;
  stats.config = config;
  stats.replicas = spec.replicas;
  stats.base_seed = spec.seed;
  stats.bound_factor = theorem1_factor(config.width, std::sqrt(config.sigma_w_sq), std::sqrt(config.sigma_b_sq));
  stats.profiles.resize(spec.replicas);
  parallel_for(spec.replicas, threads, [&](std::size_t r) { stats.profiles[r] = growth_replica(config, spec, r); });

  const std::size_t depth = config.depth;
  std::vector<double> ratios(spec.replicas), lengths(spec.replicas), logs(spec.replicas);
  auto layer_length = [&](std::size_t r, std::size_t d) {
    const LengthProfile& p = stats.profiles[r].profile;
    return d == 0 ? p.input_length : p.layer_lengths[d - 1];
  };
  for (std::size_t d = 0; d <= depth; ++d) {
    for (std::size_t r = 0; r < spec.replicas; ++r) {
      lengths[r] = layer_length(r, d);
      logs[r] = std::log(lengths[r]);
    }
    stats.mean_length.push_back(mean(lengths));
    stats.mean_log_length.push_back(mean(logs));
    if (d == 0) continue;
    for (std::size_t r = 0; r < spec.replicas; ++r) {
      const double below = layer_length(r, d - 1);
      ratios[r] = below > 0.0 ? layer_length(r, d) / below : 0.0;
    }
    stats.mean_ratio.push_back(mean(ratios));
    stats.std_ratio.push_back(stddev(ratios));
  }
  for (const auto& p : stats.profiles) stats.converged = stats.converged && p.profile.converged;
  return stats;
}

std::vector<GrowthStats> growth_sweep(const GrowthSweepSpec& spec, unsigned threads) {
  spec.profile.refine.validate();
  std::vector<GrowthStats> out;
  for (const GrowthConfig& config : spec.configs()) out.push_back(growth_stats(config, spec, threads));
  return out;
}

}  // namespace netexpr

#include "netexpr/exmeasures.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>

#include "netexpr/rng.hpp"

namespace netexpr {

namespace {

constexpr std::size_t kChunk = 4096;
constexpr std::size_t kLookahead = 3;

// Per-neuron code whose absolute change between samples is the number of
// transitions counted.
void transition_codes(Activation act, TransitionMode mode, const Matrix& h, Matrix& codes) {
  if (mode == TransitionMode::RegionBoundary && act == Activation::HardTanh) {
    codes = h.unaryExpr([](double x) { return x <= -1.0 ? 0.0 : (x >= 1.0 ? 2.0 : 1.0); });
  } else {
    codes = h.unaryExpr([](double x) { return x > 0.0 ? 1.0 : 0.0; });
  }
}

std::vector<TransitionCount> multilevel_transitions(const Network& net, const Trajectory& traj, std::size_t num_points,
                                                    std::size_t coarser, TransitionScope scope, TransitionMode mode) {
  if (traj.dim() != net.input_dim()) throw DimensionError("count_transitions: trajectory dimension != network input");
  if (scope.layer && (*scope.layer == 0 || *scope.layer > net.depth()))
    throw std::out_of_range("count_transitions: scope layer out of range");
  const std::size_t max_stride = std::size_t{1} << coarser;
  if ((num_points - 1) % max_stride != 0) throw std::logic_error("multilevel_transitions: grid is not nested");
  const std::size_t chunk = std::max(kChunk, max_stride);
  const std::size_t depth = net.depth();
  std::vector<std::vector<double>> acc(coarser + 1, std::vector<double>(depth, 0.0));
  Matrix codes;
  for (std::size_t first = 0; first + 1 < num_points; first += chunk) {
    const std::size_t count = std::min(chunk + 1, num_points - first);
    Matrix z = traj.sample(num_points, first, count);
    for (std::size_t d = 0; d < depth; ++d) {
      const Layer& layer = net.hidden(d);
      Matrix h = layer.weights * z;
      h.colwise() += layer.bias;
      transition_codes(net.activation(), mode, h, codes);
      for (std::size_t j = 0; j <= coarser; ++j) {
        const std::size_t stride = std::size_t{1} << j;
        const auto cols = static_cast<Eigen::Index>((count - 1) / stride + 1);
        if (cols < 2) continue;
        Eigen::Map<const Matrix, 0, Eigen::OuterStride<>> view(
            codes.data(), codes.rows(), cols, Eigen::OuterStride<>(codes.rows() * static_cast<Eigen::Index>(stride)));
        acc[j][d] += (view.rightCols(cols - 1) - view.leftCols(cols - 1)).cwiseAbs().sum();
      }
      activate(net.activation(), h);
      z = std::move(h);
    }
  }
  std::vector<TransitionCount> out(coarser + 1);
  for (std::size_t j = 0; j <= coarser; ++j) {
    TransitionCount& c = out[j];
    c.samples = (num_points - 1) / (std::size_t{1} << j) + 1;
    for (std::size_t d = 0; d < depth; ++d) {
      const auto n = static_cast<std::uint64_t>(std::llround(acc[j][d]));
      c.per_layer.push_back(n);
      if (!scope.layer || *scope.layer == d + 1) c.total += n;
    }
  }
  return out;
}

}  // namespace

TransitionCount transitions_at(const Network& net, const Trajectory& traj, std::size_t num_points, TransitionScope scope,
                               TransitionMode mode) {
  if (num_points < 2) throw std::invalid_argument("transitions_at needs at least 2 points");
  return multilevel_transitions(net, traj, num_points, 0, scope, mode).front();
}

TransitionCount count_transitions(const Network& net, const Trajectory& traj, TransitionScope scope,
                                  const RefinePolicy& refine, TransitionMode mode) {
  const std::vector<std::size_t> levels = refinement_levels(traj, refine);
  std::size_t checked = 0;
  std::size_t bottom = 0;
  while (true) {
    const std::size_t top = std::min(bottom + kLookahead, levels.size() - 1);
    std::vector<TransitionCount> pass = multilevel_transitions(net, traj, levels[top], top - bottom, scope, mode);
    std::reverse(pass.begin(), pass.end());
    for (std::size_t i = checked; i < top; ++i) {
      if (pass[i - bottom].total == pass[i + 1 - bottom].total) {
        TransitionCount result = std::move(pass[i + 1 - bottom]);
        result.converged = true;
        return result;
      }
    }
    if (top == levels.size() - 1) {
      TransitionCount result = std::move(pass.back());
      result.converged = false;
      return result;
    }
    checked = top;
    bottom = top;
  }
}

// ---------------------------------------------------------------------------

std::size_t ActivationPattern::hash() const {
  std::size_t h = 1469598103934665603ULL;
  for (NeuronState s : states) {
    h ^= static_cast<std::size_t>(s);
    h *= 1099511628211ULL;
  }
  return h;
}

ActivationPattern activation_pattern(const Network& net, const Vector& x) {
  const LayerCapture cap = net.forward_capture(x);
  ActivationPattern p;
  for (const auto& layer : cap.states) {
    p.offsets.push_back(p.states.size());
    p.states.insert(p.states.end(), layer.begin(), layer.end());
  }
  p.offsets.push_back(p.states.size());
  return p;
}

Window Window::standard(std::size_t input_dim) {
  if (input_dim < 2) throw DimensionError("window needs input dimension >= 2");
  Window w;
  w.origin = Vector::Zero(static_cast<Eigen::Index>(input_dim));
  w.basis_u = Vector::Unit(static_cast<Eigen::Index>(input_dim), 0);
  w.basis_v = Vector::Unit(static_cast<Eigen::Index>(input_dim), 1);
  return w;
}

Vector Window::point(double u, double v) const { return origin + u * basis_u + v * basis_v; }

void Window::validate(std::size_t input_dim) const {
  const auto m = static_cast<Eigen::Index>(input_dim);
  if (input_dim < 2) throw DimensionError("window needs input dimension >= 2");
  if (origin.size() != m || basis_u.size() != m || basis_v.size() != m)
    throw DimensionError("window vectors must match the network input dimension");
  const double uu = basis_u.squaredNorm(), vv = basis_v.squaredNorm(), uv = basis_u.dot(basis_v);
  if (uu == 0.0 || vv == 0.0 || uu * vv - uv * uv <= 1e-12 * uu * vv)
    throw std::invalid_argument("window basis vectors must be linearly independent");
  if (!(u_max > u_min) || !(v_max > v_min)) throw std::invalid_argument("window ranges must be non-empty");
}

double RegionMap::u_at(std::size_t i) const {
  return window.u_min + (window.u_max - window.u_min) * static_cast<double>(i) / static_cast<double>(resolution);
}

double RegionMap::v_at(std::size_t i) const {
  return window.v_min + (window.v_max - window.v_min) * static_cast<double>(i) / static_cast<double>(resolution);
}

namespace {

// Points of grid row `row` (fixed v) for `cols` values of u.
Matrix window_row(const Window& w, double v, const std::vector<double>& us) {
  Matrix pts(w.origin.size(), static_cast<Eigen::Index>(us.size()));
  const Vector base = w.origin + v * w.basis_v;
  for (std::size_t j = 0; j < us.size(); ++j) pts.col(static_cast<Eigen::Index>(j)) = base + us[j] * w.basis_u;
  return pts;
}

std::uint8_t state_code(Activation act, double h) {
  if (act == Activation::ReLU) return h > 0.0 ? 1 : 0;
  return h <= -1.0 ? 0 : (h >= 1.0 ? 2 : 1);
}

}  // namespace

RegionMap count_regions_2d(const Network& net, const Window& window, std::size_t resolution) {
  window.validate(net.input_dim());
  if (resolution < 2) throw std::invalid_argument("count_regions_2d: resolution must be >= 2");
  RegionMap map;
  map.window = window;
  map.resolution = resolution;
  map.ids.resize(resolution * resolution);
  std::vector<double> us(resolution);
  for (std::size_t i = 0; i < resolution; ++i) us[i] = map.u_at(i);

  // Two bits per neuron; patterns up to 32 neurons pack into one word.
  const std::size_t neurons = net.hidden_neurons();
  const std::size_t words = (2 * neurons + 63) / 64;
  std::unordered_map<std::string, std::uint32_t> seen_wide;
  std::unordered_map<std::uint64_t, std::uint32_t> seen_narrow;
  std::vector<std::uint64_t> keys(resolution * words);

  for (std::size_t row = 0; row < resolution; ++row) {
    std::fill(keys.begin(), keys.end(), 0);
    Matrix z = window_row(window, map.v_at(row), us);
    std::size_t bit = 0;
    for (std::size_t d = 0; d < net.depth(); ++d) {
      const Layer& layer = net.hidden(d);
      Matrix h = layer.weights * z;
      h.colwise() += layer.bias;
      for (Eigen::Index c = 0; c < h.cols(); ++c) {
        std::uint64_t* key = &keys[static_cast<std::size_t>(c) * words];
        for (Eigen::Index r = 0; r < h.rows(); ++r) {
          const std::size_t b = bit + 2 * static_cast<std::size_t>(r);
          key[b / 64] |= static_cast<std::uint64_t>(state_code(net.activation(), h(r, c))) << (b % 64);
        }
      }
      bit += 2 * static_cast<std::size_t>(h.rows());
      activate(net.activation(), h);
      z = std::move(h);
    }
    for (std::size_t col = 0; col < resolution; ++col) {
      std::uint32_t id;
      if (words == 1) {
        id = seen_narrow.try_emplace(keys[col], static_cast<std::uint32_t>(seen_narrow.size())).first->second;
      } else {
        std::string wide(reinterpret_cast<const char*>(&keys[col * words]), words * sizeof(std::uint64_t));
        id = seen_wide.try_emplace(std::move(wide), static_cast<std::uint32_t>(seen_wide.size())).first->second;
      }
      map.ids[row * resolution + col] = id;
    }
  }
  map.count = words == 1 ? seen_narrow.size() : seen_wide.size();
  return map;
}

// ---------------------------------------------------------------------------

namespace {

struct Segment {
  std::size_t a, b;  // edge ids
};

class ContourTracer {
public:
  ContourTracer(std::size_t resolution, const Window& w) : res_(resolution), w_(w) {}

  // field: (res+1) x (res+1) vertex values, row-major with row = v index.
  std::vector<std::pair<std::vector<Point2>, bool>> trace(const std::vector<double>& field, double level) {
    field_ = &field;
    level_ = level;
    segments_.clear();
    node_.clear();
    const std::size_t n = res_ + 1;
    for (std::size_t j = 0; j < res_; ++j) {
      for (std::size_t i = 0; i < res_; ++i) {
        const double f0 = field[j * n + i], f1 = field[j * n + i + 1];
        const double f2 = field[(j + 1) * n + i + 1], f3 = field[(j + 1) * n + i];
        const bool b0 = f0 > level, b1 = f1 > level, b2 = f2 > level, b3 = f3 > level;
        const std::size_t e0 = h_edge(i, j), e1 = v_edge(i + 1, j), e2 = h_edge(i, j + 1), e3 = v_edge(i, j);
        const int crossings = (b0 != b1) + (b1 != b2) + (b3 != b2) + (b0 != b3);
        if (crossings == 0) continue;
        if (crossings == 2) {
          std::size_t ends[2];
          int k = 0;
          if (b0 != b1) ends[k++] = e0;
          if (b1 != b2) ends[k++] = e1;
          if (b3 != b2) ends[k++] = e2;
          if (b0 != b3) ends[k++] = e3;
          add(ends[0], ends[1]);
        } else {
          // Saddle: the center value decides which diagonal pair is joined.
          const bool center = 0.25 * (f0 + f1 + f2 + f3) > level;
          if (center == b0) {
            add(e0, e1);
            add(e2, e3);
          } else {
            add(e3, e0);
            add(e1, e2);
          }
        }
      }
    }
    return chain();
  }

private:
  std::size_t h_edge(std::size_t i, std::size_t j) const { return j * res_ + i; }
  std::size_t v_edge(std::size_t i, std::size_t j) const { return (res_ + 1) * res_ + j * (res_ + 1) + i; }

  void add(std::size_t a, std::size_t b) {
    const std::size_t idx = segments_.size();
    segments_.push_back({a, b});
    node_[a].push_back(idx);
    node_[b].push_back(idx);
  }

  Point2 crossing(std::size_t edge) const {
    const std::size_t n = res_ + 1;
    std::size_t ia, ja, ib, jb;
    if (edge < (res_ + 1) * res_) {
      ja = jb = edge / res_;
      ia = edge % res_;
      ib = ia + 1;
    } else {
      const std::size_t e = edge - (res_ + 1) * res_;
      ja = e / n;
      jb = ja + 1;
      ia = ib = e % n;
    }
    const double fa = (*field_)[ja * n + ia], fb = (*field_)[jb * n + ib];
    const double t = std::clamp((level_ - fa) / (fb - fa), 0.0, 1.0);
    const double du = (w_.u_max - w_.u_min) / static_cast<double>(res_);
    const double dv = (w_.v_max - w_.v_min) / static_cast<double>(res_);
    const double ua = w_.u_min + du * static_cast<double>(ia), ub = w_.u_min + du * static_cast<double>(ib);
    const double va = w_.v_min + dv * static_cast<double>(ja), vb = w_.v_min + dv * static_cast<double>(jb);
    return Point2{ua + t * (ub - ua), va + t * (vb - va)};
  }

  std::vector<std::pair<std::vector<Point2>, bool>> chain() {
    std::vector<std::pair<std::vector<Point2>, bool>> out;
    std::vector<bool> used(segments_.size(), false);
    auto walk = [&](std::size_t start_seg, std::size_t start_node) {
      std::vector<Point2> pts{crossing(start_node)};
      std::size_t seg = start_seg, at = start_node;
      bool closed = false;
      while (true) {
        used[seg] = true;
        const std::size_t next = segments_[seg].a == at ? segments_[seg].b : segments_[seg].a;
        pts.push_back(crossing(next));
        if (next == start_node) {
          closed = true;
          break;
        }
        const auto& adj = node_[next];
        std::size_t follow = segments_.size();
        for (std::size_t s : adj)
          if (!used[s]) follow = s;
        if (follow == segments_.size()) break;
        seg = follow;
        at = next;
      }
      out.emplace_back(std::move(pts), closed);
    };
    // Open polylines start at degree-1 nodes (window border); visit in segment
    // order so output is deterministic.
    for (std::size_t s = 0; s < segments_.size(); ++s) {
      if (used[s]) continue;
      for (std::size_t end : {segments_[s].a, segments_[s].b})
        if (!used[s] && node_[end].size() == 1) walk(s, end);
    }
    for (std::size_t s = 0; s < segments_.size(); ++s)
      if (!used[s]) walk(s, segments_[s].a);
    return out;
  }

  std::size_t res_;
  const Window& w_;
  const std::vector<double>* field_ = nullptr;
  double level_ = 0.0;
  std::vector<Segment> segments_;
  std::unordered_map<std::size_t, std::vector<std::size_t>> node_;
};

}  // namespace

BoundarySet boundary_contours(const Network& net, const Window& window, std::size_t resolution, std::size_t up_to_layer) {
  window.validate(net.input_dim());
  if (resolution < 2) throw std::invalid_argument("boundary_contours: resolution must be >= 2");
  if (up_to_layer == 0 || up_to_layer > net.depth()) throw std::out_of_range("boundary_contours: up_to_layer out of range");
  const std::size_t n = resolution + 1;
  std::vector<double> us(n);
  for (std::size_t i = 0; i < n; ++i)
    us[i] = window.u_min + (window.u_max - window.u_min) * static_cast<double>(i) / static_cast<double>(resolution);

  // fields[layer][neuron]: vertex grid of pre-activations.
  std::vector<std::vector<std::vector<double>>> fields(up_to_layer);
  for (std::size_t d = 0; d < up_to_layer; ++d)
    fields[d].assign(net.width(d), std::vector<double>(n * n));
  for (std::size_t row = 0; row < n; ++row) {
    const double v = window.v_min + (window.v_max - window.v_min) * static_cast<double>(row) / static_cast<double>(resolution);
    Matrix z = window_row(window, v, us);
    for (std::size_t d = 0; d < up_to_layer; ++d) {
      const Layer& layer = net.hidden(d);
      Matrix h = layer.weights * z;
      h.colwise() += layer.bias;
      for (Eigen::Index r = 0; r < h.rows(); ++r)
        for (Eigen::Index c = 0; c < h.cols(); ++c) fields[d][static_cast<std::size_t>(r)][row * n + static_cast<std::size_t>(c)] = h(r, c);
      activate(net.activation(), h);
      z = std::move(h);
    }
  }

  BoundarySet set;
  set.window = window;
  set.resolution = resolution;
  const std::vector<double> levels =
      net.activation() == Activation::ReLU ? std::vector<double>{0.0} : std::vector<double>{-1.0, 1.0};
  ContourTracer tracer(resolution, window);
  for (std::size_t d = 0; d < up_to_layer; ++d) {
    for (std::size_t k = 0; k < fields[d].size(); ++k) {
      for (double level : levels) {
        for (auto& [pts, closed] : tracer.trace(fields[d][k], level))
          set.polylines.push_back(BoundaryPolyline{d + 1, k, level, std::move(pts), closed});
      }
    }
  }
  return set;
}

// ---------------------------------------------------------------------------

std::vector<Vector> random_sphere_points(std::size_t s, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Vector> pts;
  pts.reserve(s);
  for (std::size_t i = 0; i < s; ++i) pts.push_back(random_unit_vector(dim, rng));
  return pts;
}

DichotomyReport count_dichotomies(const Architecture& arch, const InitSpec& init, const std::vector<Vector>& inputs,
                                  std::size_t samples, DichotomyMode mode) {
  arch.validate();
  init.validate();
  if (inputs.empty()) throw std::invalid_argument("count_dichotomies: input set must be non-empty");
  if (samples == 0) throw std::invalid_argument("count_dichotomies: samples must be >= 1");
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (static_cast<std::size_t>(inputs[i].size()) != arch.input_dim)
      throw DimensionError("count_dichotomies: input dimension mismatch");
    for (std::size_t j = 0; j < i; ++j)
      if (inputs[i] == inputs[j]) throw std::invalid_argument("count_dichotomies: inputs must be distinct");
  }
  if (mode.kind == DichotomyMode::Kind::Layer && (mode.layer == 0 || mode.layer > arch.depth()))
    throw std::out_of_range("count_dichotomies: resampled layer out of range");

  const std::size_t s = inputs.size();
  Matrix x(static_cast<Eigen::Index>(arch.input_dim), static_cast<Eigen::Index>(s));
  for (std::size_t i = 0; i < s; ++i) x.col(static_cast<Eigen::Index>(i)) = inputs[i];

  Rng readout_rng(init.seed);
  const Layer readout = sample_layer(arch.hidden_widths.back(), 1, init.sigma_w_sq, init.sigma_b_sq, readout_rng);

  auto sample_hidden = [&](Rng& rng) {
    std::vector<Layer> layers;
    std::size_t fan_in = arch.input_dim;
    for (std::size_t w : arch.hidden_widths) {
      layers.push_back(sample_layer(fan_in, w, init.sigma_w_sq, init.sigma_b_sq, rng));
      fan_in = w;
    }
    return Network(std::move(layers), arch.activation);
  };

  DichotomyReport report;
  report.s = s;
  report.samples = samples;
  report.mode = mode;
  std::unordered_set<std::string> labelings;
  std::string label(s, '0');

  auto record = [&](const Matrix& last_hidden) {
    const Eigen::RowVectorXd out = (readout.weights * last_hidden).array() + readout.bias[0];
    for (std::size_t i = 0; i < s; ++i) {
      const double y = out[static_cast<Eigen::Index>(i)];
      if (y == 0.0) ++report.ties;
      label[i] = y >= 0.0 ? '1' : '0';
    }
    labelings.insert(label);
  };

  auto run_layers = [&](const Network& net, Matrix z, std::size_t from) {
    for (std::size_t d = from; d < net.depth(); ++d) {
      Matrix h = net.hidden(d).weights * z;
      h.colwise() += net.hidden(d).bias;
      activate(net.activation(), h);
      z = std::move(h);
    }
    return z;
  };

  if (mode.kind == DichotomyMode::Kind::AllWeights) {
    for (std::size_t i = 0; i < samples; ++i) {
      Rng rng(mix_seed(init.seed, i + 1));
      record(run_layers(sample_hidden(rng), x, 0));
    }
  } else {
    Rng base_rng(mix_seed(init.seed, 0));
    const Network base = sample_hidden(base_rng);
    const std::size_t d = mode.layer - 1;
    const Matrix below = propagate(base, x, d);
    for (std::size_t i = 0; i < samples; ++i) {
      Rng rng(mix_seed(init.seed, i + 1));
      const Layer layer = sample_layer(base.hidden(d).fan_in(), base.width(d), init.sigma_w_sq, init.sigma_b_sq, rng);
      Matrix h = layer.weights * below;
      h.colwise() += layer.bias;
      activate(arch.activation, h);
      record(run_layers(base, std::move(h), d + 1));
    }
  }
  report.distinct = labelings.size();
  return report;
}

// ---------------------------------------------------------------------------

std::size_t general_position_regions(std::size_t k) { return 1 + k + k * (k - 1) / 2; }

Layer random_arrangement_layer(std::size_t k, const Window& window, std::uint64_t seed, double margin, double min_angle) {
  if (k == 0) throw std::invalid_argument("random_arrangement_layer: k must be >= 1");
  Rng rng(seed);
  const double cu = 0.5 * (window.u_min + window.u_max), cv = 0.5 * (window.v_min + window.v_max);
  const double hu = 0.5 * (window.u_max - window.u_min), hv = 0.5 * (window.v_max - window.v_min);
  const double min_sep = 0.02 * std::min(hu, hv);
  for (int attempt = 0; attempt < 100000; ++attempt) {
    std::vector<double> theta(k), off(k);
    for (std::size_t i = 0; i < k; ++i) {
      theta[i] = std::numbers::pi * rng.uniform();
      const double pu = cu + hu * (rng.uniform() - 0.5), pv = cv + hv * (rng.uniform() - 0.5);
      off[i] = -(std::cos(theta[i]) * pu + std::sin(theta[i]) * pv);
    }
    bool ok = true;
    std::vector<Point2> crossings;
    for (std::size_t i = 0; i < k && ok; ++i) {
      for (std::size_t j = i + 1; j < k && ok; ++j) {
        double gap = std::abs(theta[i] - theta[j]);
        gap = std::min(gap, std::numbers::pi - gap);
        if (gap < min_angle) {
          ok = false;
          break;
        }
        const double a1 = std::cos(theta[i]), b1 = std::sin(theta[i]), a2 = std::cos(theta[j]), b2 = std::sin(theta[j]);
        const double det = a1 * b2 - a2 * b1;
        const Point2 p{(-off[i] * b2 + off[j] * b1) / det, (-a1 * off[j] + a2 * off[i]) / det};
        if (std::abs(p.u - cu) > hu - margin || std::abs(p.v - cv) > hv - margin) ok = false;
        crossings.push_back(p);
      }
    }
    // Keep regions well above grid scale: crossings stay away from other lines.
    for (std::size_t i = 0, c = 0; i < k && ok; ++i) {
      for (std::size_t j = i + 1; j < k && ok; ++j, ++c) {
        for (std::size_t l = 0; l < k && ok; ++l) {
          if (l == i || l == j) continue;
          const double dist = std::abs(std::cos(theta[l]) * crossings[c].u + std::sin(theta[l]) * crossings[c].v + off[l]);
          if (dist < min_sep) ok = false;
        }
      }
    }
    if (!ok) continue;
    Layer layer{Matrix(static_cast<Eigen::Index>(k), 2), Vector(static_cast<Eigen::Index>(k))};
    for (std::size_t i = 0; i < k; ++i) {
      const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
      const auto r = static_cast<Eigen::Index>(i);
      layer.weights(r, 0) = sign * std::cos(theta[i]);
      layer.weights(r, 1) = sign * std::sin(theta[i]);
      layer.bias[r] = sign * off[i];
    }
    return layer;
  }
  throw std::runtime_error("random_arrangement_layer: no admissible arrangement found");
}

}  // namespace netexpr

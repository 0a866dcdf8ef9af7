#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "netexpr/exmeasures.hpp"
#include "netexpr/rng.hpp"

using namespace netexpr;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

Network single_neuron(double w0, double w1, double b, Activation act = Activation::ReLU) {
  Matrix w(1, 2);
  w << w0, w1;
  return from_explicit({w}, {Vector::Constant(1, b)}, act);
}

Network arrangement_net(std::size_t k, std::uint64_t seed) {
  const Window win = Window::standard(2);
  return Network({random_arrangement_layer(k, win, seed)}, Activation::ReLU);
}

}  // namespace

// --- transitions -----------------------------------------------------------

TEST(Transitions, SingleNeuronCrossedOnce) {
  const Network net = single_neuron(1.0, 0.0, -0.5);
  const Trajectory t = Trajectory::segment(vec({0, 0}), vec({1, 0}), 2);
  const TransitionCount c = count_transitions(net, t);
  EXPECT_EQ(c.total, 1u);
  EXPECT_TRUE(c.converged);
}

TEST(Transitions, ConstantTrajectoryHasNone) {
  const Network net = sample_network(Architecture{2, {8, 8}, 1, Activation::HardTanh}, InitSpec{4.0, 1.0, 2});
  Matrix pts(2, 5);
  pts.colwise() = vec({0.3, -0.1});
  const Trajectory t = Trajectory::custom({0, 1, 2, 3, 4}, pts);
  EXPECT_EQ(count_transitions(net, t).total, 0u);
}

TEST(Transitions, HardTanhBoundaryModeCountsBothThresholds) {
  const Network net = single_neuron(4.0, 0.0, 0.0, Activation::HardTanh);
  const Trajectory t = Trajectory::segment(vec({-1, 0}), vec({1, 0}), 2);
  EXPECT_EQ(count_transitions(net, t, TransitionScope::all(), {}, TransitionMode::SignChange).total, 1u);
  EXPECT_EQ(count_transitions(net, t, TransitionScope::all(), {}, TransitionMode::RegionBoundary).total, 2u);
}

TEST(Transitions, InvariantUnderReparameterization) {
  const Network net = sample_network(Architecture{2, {16, 16, 16}, 1, Activation::HardTanh}, InitSpec{8.0, 1.0, 13});
  const Trajectory uniform = Trajectory::segment(vec({-1, -0.5}), vec({1, 0.7}), 2);
  // Same segment traversed with a non-uniform speed s = t^2.
  const std::size_t n = 2049;
  std::vector<double> params(n);
  Matrix pts(2, static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(n - 1);
    params[i] = t;
    pts.col(static_cast<Eigen::Index>(i)) = (1 - t * t) * vec({-1, -0.5}) + t * t * vec({1, 0.7});
  }
  const Trajectory warped = Trajectory::custom(params, pts);
  const TransitionCount a = count_transitions(net, uniform);
  const TransitionCount b = count_transitions(net, warped);
  ASSERT_TRUE(a.converged && b.converged);
  EXPECT_EQ(a.per_layer, b.per_layer);
}

TEST(Transitions, ScopeSelectsLayer) {
  const Network net = sample_network(Architecture{2, {8, 8, 8}, 1, Activation::ReLU}, InitSpec{2.0, 0.5, 4});
  const Trajectory t = Trajectory::circular(vec({1, 0}), vec({0, 1}), 2);
  const TransitionCount all = count_transitions(net, t);
  const TransitionCount two = count_transitions(net, t, TransitionScope::only(2));
  EXPECT_EQ(all.total, all.per_layer[0] + all.per_layer[1] + all.per_layer[2]);
  EXPECT_EQ(two.total, two.per_layer[1]);
  EXPECT_THROW(count_transitions(net, t, TransitionScope::only(4)), std::out_of_range);
}

// --- patterns and regions --------------------------------------------------

TEST(Patterns, ExamplesFromIdentityNetwork) {
  const Network relu = from_explicit({Matrix::Identity(2, 2)}, {Vector::Zero(2)}, Activation::ReLU);
  const ActivationPattern p = activation_pattern(relu, vec({0.5, -0.5}));
  EXPECT_EQ(p.at(0, 0), NeuronState::Active);
  EXPECT_EQ(p.at(0, 1), NeuronState::Inactive);

  const Network ht = from_explicit({Matrix::Identity(3, 3)}, {Vector::Zero(3)}, Activation::HardTanh);
  const ActivationPattern q = activation_pattern(ht, vec({2.0, 0.0, -3.0}));
  EXPECT_EQ(q.at(0, 0), NeuronState::SatHigh);
  EXPECT_EQ(q.at(0, 1), NeuronState::Linear);
  EXPECT_EQ(q.at(0, 2), NeuronState::SatLow);
  EXPECT_EQ(q, activation_pattern(ht, vec({5.0, 0.1, -1.0})));
  EXPECT_EQ(std::hash<ActivationPattern>{}(q), std::hash<ActivationPattern>{}(activation_pattern(ht, vec({5, 0.1, -1}))));
  EXPECT_FALSE(q == activation_pattern(ht, vec({0.0, 0.1, -1.0})));
}

TEST(Regions, SingleLineGivesTwo) {
  const RegionMap map = count_regions_2d(single_neuron(1.0, 0.3, 0.1), Window::standard(2), 256);
  EXPECT_EQ(map.count, 2u);
  EXPECT_EQ(map.ids.size(), 256u * 256u);
  EXPECT_EQ(map.id(0, 0), 0u);
}

TEST(Regions, FourLinesInGeneralPosition) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const RegionMap map = count_regions_2d(arrangement_net(4, seed), Window::standard(2), 1024);
    EXPECT_EQ(map.count, 11u) << "seed " << seed;
  }
  EXPECT_EQ(general_position_regions(4), 11u);
  EXPECT_EQ(general_position_regions(1), 2u);
}

TEST(Regions, CountsNeverDecreaseWithSupersampling) {
  const Network net = sample_network(Architecture{2, {6, 6}, 1, Activation::ReLU}, InitSpec{2.0, 0.1, 8});
  std::size_t prev = 0;
  for (std::size_t res = 16; res <= 1024; res *= 2) {
    const std::size_t c = count_regions_2d(net, Window::standard(2), res).count;
    EXPECT_GE(c, prev);
    prev = c;
  }
}

TEST(Regions, GridCoordinatesAreLowerCellCorners) {
  const RegionMap map = count_regions_2d(single_neuron(1, 0, 0), Window::standard(2), 4);
  EXPECT_EQ(map.u_at(0), -1.0);
  EXPECT_EQ(map.u_at(2), 0.0);
  EXPECT_EQ(map.v_at(3), 0.5);
}

TEST(Regions, ValidatesWindow) {
  Window w = Window::standard(2);
  w.basis_v = w.basis_u;
  EXPECT_THROW(count_regions_2d(single_neuron(1, 0, 0), w, 8), std::invalid_argument);
  EXPECT_THROW(count_regions_2d(single_neuron(1, 0, 0), Window::standard(3), 8), DimensionError);
}

// --- boundaries ------------------------------------------------------------

TEST(Boundaries, VerticalLineAtHalf) {
  const std::size_t res = 200;
  const BoundarySet set = boundary_contours(single_neuron(1.0, 0.0, -0.5), Window::standard(2), res, 1);
  ASSERT_EQ(set.polylines.size(), 1u);
  const double diag = std::sqrt(2.0) * 2.0 / static_cast<double>(res);
  const BoundaryPolyline& line = set.polylines[0];
  EXPECT_EQ(line.layer, 1u);
  EXPECT_EQ(line.level, 0.0);
  EXPECT_FALSE(line.closed);
  for (const Point2& p : line.points) EXPECT_NEAR(p.u, 0.5, diag);
  const auto [lo, hi] = std::minmax_element(line.points.begin(), line.points.end(),
                                            [](const Point2& a, const Point2& b) { return a.v < b.v; });
  EXPECT_NEAR(lo->v, -1.0, 1e-12);
  EXPECT_NEAR(hi->v, 1.0, 1e-12);
}

TEST(Boundaries, EmptyWhenLevelSetMissesWindow) {
  EXPECT_TRUE(boundary_contours(single_neuron(1.0, 1.0, 10.0), Window::standard(2), 64, 1).polylines.empty());
  EXPECT_TRUE(boundary_contours(single_neuron(0.1, 0.0, 5.0, Activation::HardTanh), Window::standard(2), 64, 1)
                  .polylines.empty());
}

TEST(Boundaries, HardTanhTracesBothSaturationLevels) {
  const BoundarySet set = boundary_contours(single_neuron(2.0, 0.0, 0.0, Activation::HardTanh), Window::standard(2), 64, 1);
  std::set<double> levels;
  for (const auto& p : set.polylines) levels.insert(p.level);
  EXPECT_EQ(levels, (std::set<double>{-1.0, 1.0}));
}

TEST(Boundaries, PointsLieOnTheirLevelSet) {
  const Network net = sample_network(Architecture{2, {5, 5}, 1, Activation::HardTanh}, InitSpec{6.0, 1.0, 31});
  const BoundarySet set = boundary_contours(net, Window::standard(2), 256, 1);
  ASSERT_FALSE(set.polylines.empty());
  for (const auto& line : set.polylines) {
    const Layer& l = net.hidden(0);
    for (const Point2& p : line.points) {
      const double h = l.weights.row(static_cast<Eigen::Index>(line.neuron)).dot(vec({p.u, p.v})) +
                       l.bias[static_cast<Eigen::Index>(line.neuron)];
      EXPECT_NEAR(h, line.level, 1e-9);
    }
  }
}

// Within one linear region of layer 1, a layer-2 boundary is a straight line.
TEST(Boundaries, SecondLayerIsStraightInsideFirstLayerRegions) {
  const std::size_t res = 256;
  const Network net = sample_network(Architecture{2, {4, 4}, 1, Activation::ReLU}, InitSpec{2.0, 0.5, 12});
  const BoundarySet set = boundary_contours(net, Window::standard(2), res, 2);
  const Layer& first = net.hidden(0);
  const double guard = 3.0 * std::sqrt(2.0) * 2.0 / static_cast<double>(res);
  auto clear_of_layer1 = [&](const Point2& p) {
    const Vector h = first.weights * vec({p.u, p.v}) + first.bias;
    for (Eigen::Index i = 0; i < h.size(); ++i)
      if (std::abs(h[i]) / first.weights.row(i).norm() < guard) return false;
    return true;
  };
  std::size_t checked = 0;
  for (const auto& line : set.polylines) {
    if (line.layer != 2) continue;
    for (std::size_t i = 1; i + 1 < line.points.size(); ++i) {
      const Point2 &a = line.points[i - 1], &b = line.points[i], &c = line.points[i + 1];
      if (!clear_of_layer1(a) || !clear_of_layer1(b) || !clear_of_layer1(c)) continue;
      const Vector pa = vec({a.u, a.v}), pb = vec({b.u, b.v}), pc = vec({c.u, c.v});
      if (activation_pattern(net.slice(0, 1), pa) != activation_pattern(net.slice(0, 1), pc)) continue;
      const Vector d = pc - pa;
      const Vector e = pb - pa;
      const double cross = d[0] * e[1] - d[1] * e[0];
      EXPECT_NEAR(cross / d.norm(), 0.0, 1e-9);
      ++checked;
    }
  }
  EXPECT_GT(checked, 20u);
}

// --- dichotomies -----------------------------------------------------------

TEST(Dichotomies, SinglePointHasTwoLabelings) {
  const Architecture arch{4, {8, 8}, 1, Activation::HardTanh};
  const DichotomyReport r = count_dichotomies(arch, InitSpec{4.0, 1.0, 3}, random_sphere_points(1, 4, 9), 200,
                                              DichotomyMode::all_weights());
  EXPECT_EQ(r.distinct, 2u);
}

TEST(Dichotomies, BoundedByLabelingsAndSamples) {
  const Architecture arch{8, {16, 16, 16}, 1, Activation::HardTanh};
  const auto pts = random_sphere_points(6, 8, 1);
  for (std::size_t samples : {10u, 100u, 2000u}) {
    for (DichotomyMode mode : {DichotomyMode::all_weights(), DichotomyMode::resample_layer(1),
                               DichotomyMode::resample_layer(3)}) {
      const DichotomyReport r = count_dichotomies(arch, InitSpec{4.0, 0.0, 5}, pts, samples, mode);
      EXPECT_LE(r.distinct, std::min<std::size_t>(64, samples));
      EXPECT_GE(r.distinct, 1u);
    }
  }
}

TEST(Dichotomies, MonotoneInSampleCount) {
  const Architecture arch{8, {16, 16, 16, 16}, 1, Activation::HardTanh};
  const auto pts = random_sphere_points(8, 8, 2);
  std::size_t prev = 0;
  for (std::size_t samples : {10u, 100u, 1000u, 4000u}) {
    const DichotomyReport r =
        count_dichotomies(arch, InitSpec{2.0, 0.0, 6}, pts, samples, DichotomyMode::resample_layer(2));
    EXPECT_GE(r.distinct, prev);
    prev = r.distinct;
  }
}

TEST(Dichotomies, RejectsBadInputs) {
  const Architecture arch{2, {4}, 1, Activation::ReLU};
  EXPECT_THROW(count_dichotomies(arch, InitSpec{}, {vec({1, 0}), vec({1, 0})}, 10, DichotomyMode::all_weights()),
               std::invalid_argument);
  EXPECT_THROW(count_dichotomies(arch, InitSpec{}, {vec({1, 0, 0})}, 10, DichotomyMode::all_weights()), DimensionError);
  EXPECT_THROW(count_dichotomies(arch, InitSpec{}, {vec({1, 0})}, 10, DichotomyMode::resample_layer(2)), std::out_of_range);
}

TEST(SpherePoints, UnitNormAndDeterministic) {
  const auto a = random_sphere_points(5, 7, 42);
  const auto b = random_sphere_points(5, 7, 42);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_NEAR(a[i].norm(), 1.0, 1e-14);
    EXPECT_EQ(a[i], b[i]);
  }
}

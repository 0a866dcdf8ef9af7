#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>

#include <gtest/gtest.h>

#include "netexpr/rng.hpp"
#include "netexpr/trainlab.hpp"

using namespace netexpr;
namespace fs = std::filesystem;

namespace {

fs::path mnist_dir() {
  if (const char* env = std::getenv("NETEXPR_DATA_DIR")) return fs::path(env) / "mnist";
  return "/root/data/mnist";
}

bool have_mnist() { return fs::exists(mnist_dir() / "train-images-idx3-ubyte"); }

class TempDir {
public:
  TempDir() {
    path_ = fs::temp_directory_path() / ("netexpr-test-" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                         "-" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

private:
  fs::path path_;
};

void put_be32(std::ofstream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(b, 4);
}

// n images of 2x3 pixels; pixel p of image i is (i * 7 + p) % 256.
void write_idx(const fs::path& images, const fs::path& labels, std::uint32_t n, std::uint32_t n_labels,
               std::uint32_t image_magic = 2051, std::size_t drop_bytes = 0) {
  {
    std::ofstream out(images, std::ios::binary);
    put_be32(out, image_magic);
    put_be32(out, n);
    put_be32(out, 2);
    put_be32(out, 3);
    std::string payload;
    for (std::uint32_t i = 0; i < n; ++i)
      for (std::uint32_t p = 0; p < 6; ++p) payload.push_back(static_cast<char>((i * 7 + p) % 256));
    out.write(payload.data(), static_cast<std::streamsize>(payload.size() - drop_bytes));
  }
  std::ofstream out(labels, std::ios::binary);
  put_be32(out, 2049);
  put_be32(out, n_labels);
  for (std::uint32_t i = 0; i < n_labels; ++i) out.put(static_cast<char>(i % 10));
}

// Linearly separable-ish synthetic data: the label is the argmax of a fixed
// random linear map of the input.
Dataset synthetic(std::size_t n, std::size_t dim, int classes, std::uint64_t seed, Split split = Split::Train) {
  Rng rng(seed);
  Rng teacher_rng(99);
  Matrix teacher(classes, static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < teacher.size(); ++i) teacher.data()[i] = teacher_rng.gaussian();
  Dataset ds;
  ds.split = split;
  ds.num_classes = classes;
  ds.inputs.resize(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < ds.inputs.size(); ++i) ds.inputs.data()[i] = rng.uniform();
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::Index arg = 0;
    (teacher * ds.inputs.col(static_cast<Eigen::Index>(i))).maxCoeff(&arg);
    ds.labels.push_back(static_cast<int>(arg));
  }
  return ds;
}

TrainConfig small_config(std::size_t dim, int classes) {
  TrainConfig c;
  c.arch = Architecture{dim, {12, 12, 12}, static_cast<std::size_t>(classes), Activation::HardTanh};
  c.init = InitSpec{3.0, 0.01, 4};
  c.steps = 60;
  c.checkpoint_every = 20;
  c.batch_size = 16;
  c.data_subset.reset();
  c.probe_profile.refine = RefinePolicy{65, 1e-2, 4097};
  return c;
}

// Relative error with a floor so that coordinates whose true gradient is
// exactly zero (saturated units) compare as absolute errors.
double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); }

bool away_from_kinks(const Network& net, const Matrix& x, double margin) {
  Matrix z = x;
  for (const Layer& l : net.hidden()) {
    Matrix h = l.weights * z;
    h.colwise() += l.bias;
    if (((h.array().abs() - 1.0).abs() < margin).any()) return false;
    activate(net.activation(), h);
    z = std::move(h);
  }
  return true;
}

}  // namespace

// --- loaders ---------------------------------------------------------------

TEST(MnistLoader, ReadsSyntheticIdx) {
  TempDir dir;
  write_idx(dir.path() / "img", dir.path() / "lab", 5, 5);
  const Dataset ds = load_mnist_idx(dir.path() / "img", dir.path() / "lab", Split::Train);
  ASSERT_EQ(ds.size(), 5u);
  EXPECT_EQ(ds.dim(), 6u);
  EXPECT_DOUBLE_EQ(ds.inputs(4, 3), (3 * 7 + 4) / 255.0);
  EXPECT_EQ(ds.labels[4], 4);
  const Dataset two = load_mnist_idx(dir.path() / "img", dir.path() / "lab", Split::Test, 2);
  EXPECT_EQ(two.size(), 2u);
  EXPECT_EQ(two.inputs, ds.inputs.leftCols(2));
}

TEST(MnistLoader, RejectsBadMagicTruncationAndMismatch) {
  TempDir dir;
  write_idx(dir.path() / "img", dir.path() / "lab", 5, 5, 2049);
  EXPECT_THROW(load_mnist_idx(dir.path() / "img", dir.path() / "lab", Split::Train), DataError);
  write_idx(dir.path() / "img", dir.path() / "lab", 5, 5, 2051, 1);
  EXPECT_THROW(load_mnist_idx(dir.path() / "img", dir.path() / "lab", Split::Train), DataError);
  EXPECT_THROW(load_mnist_idx(dir.path() / "img", dir.path() / "lab", Split::Train, 1), DataError);
  write_idx(dir.path() / "img", dir.path() / "lab", 5, 4);
  EXPECT_THROW(load_mnist_idx(dir.path() / "img", dir.path() / "lab", Split::Train), DataError);
  EXPECT_THROW(load_mnist_idx(dir.path() / "missing", dir.path() / "lab", Split::Train), DataError);
}

TEST(MnistLoader, CanonicalTrainingFile) {
  if (!have_mnist()) GTEST_SKIP() << "MNIST not found under " << mnist_dir();
  const Dataset test = load_mnist_idx(mnist_dir() / "t10k-images-idx3-ubyte", mnist_dir() / "t10k-labels-idx1-ubyte",
                                      Split::Test);
  EXPECT_EQ(test.size(), 10000u);
  EXPECT_EQ(test.dim(), 784u);
  EXPECT_GE(test.inputs.minCoeff(), 0.0);
  EXPECT_LE(test.inputs.maxCoeff(), 1.0);
  for (int y : test.labels) ASSERT_TRUE(y >= 0 && y <= 9);
  const Dataset train = load_mnist_idx(mnist_dir() / "train-images-idx3-ubyte", mnist_dir() / "train-labels-idx1-ubyte",
                                       Split::Train);
  EXPECT_EQ(train.size(), 60000u);
}

TEST(CifarLoader, ReadsRecordsAndRejectsMisalignment) {
  TempDir dir;
  {
    std::ofstream out(dir.path() / "batch", std::ios::binary);
    for (int r = 0; r < 3; ++r) {
      out.put(static_cast<char>(r + 7));
      for (int p = 0; p < 3072; ++p) out.put(static_cast<char>(p == 0 ? 255 : r));
    }
  }
  const Dataset ds = load_cifar10_binary({dir.path() / "batch", dir.path() / "batch"}, Split::Train);
  EXPECT_EQ(ds.size(), 6u);
  EXPECT_EQ(ds.dim(), 3072u);
  EXPECT_EQ(ds.inputs(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(ds.inputs(5, 2), 2.0 / 255.0);
  EXPECT_EQ(ds.labels[2], 9);
  { std::ofstream(dir.path() / "batch", std::ios::app | std::ios::binary).put('x'); }
  EXPECT_THROW(load_cifar10_binary({dir.path() / "batch"}, Split::Train), DataError);
}

// --- loss and gradients ----------------------------------------------------

TEST(Loss, UniformLogitsGiveLogC) {
  const Network net = from_explicit({Matrix::Zero(8, 5)}, {Vector::Zero(8)}, Activation::HardTanh,
                                    Layer{Matrix::Zero(10, 8), Vector::Zero(10)});
  const Dataset ds = synthetic(7, 5, 10, 1);
  EXPECT_NEAR(cross_entropy(net, ds.inputs, ds.labels), std::log(10.0), 1e-12);
  EXPECT_NEAR(loss_and_gradients(net, ds.inputs, ds.labels).loss, 2.302585092994046, 1e-12);
}

TEST(Loss, ZeroReadoutInitIsNearLogC) {
  TrainConfig c = small_config(5, 10);
  c.output_init = OutputInit::Zero;
  const Dataset ds = synthetic(50, 5, 10, 2);
  EXPECT_NEAR(cross_entropy(initial_network(c), ds.inputs, ds.labels), std::log(10.0), 0.01 * std::log(10.0));
}

TEST(Loss, RejectsEmptyAndMismatchedBatches) {
  const Network net = initial_network(small_config(5, 3));
  const Dataset ds = synthetic(4, 5, 3, 1);
  EXPECT_THROW(loss_and_gradients(net, Matrix(5, 0), {}), std::invalid_argument);
  EXPECT_THROW(loss_and_gradients(net, ds.inputs, std::span<const int>(ds.labels).first(3)), DimensionError);
  std::vector<int> bad = ds.labels;
  bad[0] = 3;
  EXPECT_THROW(loss_and_gradients(net, ds.inputs, bad), DimensionError);
}

TEST(Gradients, MatchCentralFiniteDifferences) {
  const Dataset ds = synthetic(6, 7, 4, 3);
  TrainConfig c = small_config(7, 4);
  Network net = initial_network(c);
  for (std::uint64_t seed = 5; !away_from_kinks(net, ds.inputs, 1e-3); ++seed) {
    c.init.seed = seed;
    net = initial_network(c);
  }
  const LossAndGradients lg = loss_and_gradients(net, ds.inputs, ds.labels);

  Rng rng(17);
  const double eps = 1e-6;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t layer = rng.uniform_index(net.depth() + 1);
    const bool readout = layer == net.depth();
    const Layer& base = readout ? *net.readout() : net.hidden(layer);
    const bool bias = rng.uniform() < 0.25;
    const Eigen::Index n = bias ? base.bias.size() : base.weights.size();
    const auto idx = static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(n)));
    auto perturbed = [&](double delta) {
      Layer l = base;
      (bias ? l.bias.data() : l.weights.data())[idx] += delta;
      const Network moved = readout ? net.with_readout(l) : net.with_hidden_layer(layer, l);
      return cross_entropy(moved, ds.inputs, ds.labels);
    };
    const double fd = (perturbed(eps) - perturbed(-eps)) / (2 * eps);
    const double bp = (bias ? lg.grads.bias[layer].data() : lg.grads.weights[layer].data())[idx];
    worst = std::max(worst, rel_err(fd, bp));
  }
  EXPECT_LT(worst, 1e-5);
}

TEST(Gradients, FrozenLayersAreExactlyZero) {
  const Dataset ds = synthetic(9, 5, 3, 4);
  const Network net = initial_network(small_config(5, 3));
  const FreezeMask mask{true, false, true, true};
  const LossAndGradients lg = loss_and_gradients(net, ds.inputs, ds.labels, mask);
  const LossAndGradients full = loss_and_gradients(net, ds.inputs, ds.labels);
  EXPECT_EQ(lg.loss, full.loss);
  for (std::size_t l = 0; l < mask.size(); ++l) {
    if (mask[l]) {
      EXPECT_TRUE((lg.grads.weights[l].array() == 0.0).all());
      EXPECT_TRUE((lg.grads.bias[l].array() == 0.0).all());
    } else {
      EXPECT_EQ(lg.grads.weights[l], full.grads.weights[l]);
    }
  }
}

// --- training --------------------------------------------------------------

TEST(Train, OnlyUnfrozenLayerChanges) {
  const Dataset tr = synthetic(200, 6, 3, 5);
  const Dataset te = synthetic(50, 6, 3, 6, Split::Test);
  TrainConfig c = small_config(6, 3);
  c.record_probes = false;
  c.freeze_mask = {true, false, true, true};
  const TrainRun run = train(c, tr, te);
  ASSERT_FALSE(run.diverged);
  EXPECT_EQ(run.final_network.hidden(0), run.initial.hidden(0));
  EXPECT_FALSE(run.final_network.hidden(1) == run.initial.hidden(1));
  EXPECT_EQ(run.final_network.hidden(2), run.initial.hidden(2));
  EXPECT_EQ(*run.final_network.readout(), *run.initial.readout());
}

TEST(Train, CheckpointScheduleAndDeterminism) {
  const Dataset tr = synthetic(300, 6, 3, 7);
  const Dataset te = synthetic(60, 6, 3, 8, Split::Test);
  TrainConfig c = small_config(6, 3);
  c.steps = 50;
  const TrainRun a = train(c, tr, te);
  const TrainRun b = train(c, tr, te);
  std::vector<std::size_t> steps;
  for (const auto& ck : a.checkpoints) steps.push_back(ck.step);
  EXPECT_EQ(steps, (std::vector<std::size_t>{0, 20, 40, 50}));
  ASSERT_EQ(a.checkpoints.size(), b.checkpoints.size());
  for (std::size_t i = 0; i < a.checkpoints.size(); ++i) {
    EXPECT_EQ(a.checkpoints[i].train_loss, b.checkpoints[i].train_loss);
    EXPECT_EQ(a.checkpoints[i].test_accuracy, b.checkpoints[i].test_accuracy);
    EXPECT_EQ(a.checkpoints[i].probes->data.layer_lengths, b.checkpoints[i].probes->data.layer_lengths);
    EXPECT_GE(a.checkpoints[i].train_accuracy, 0.0);
    EXPECT_LE(a.checkpoints[i].train_accuracy, 1.0);
  }
  EXPECT_TRUE(a.final_network == b.final_network);
}

TEST(Train, StepZeroProbesMatchDirectTrajectoryCall) {
  const Dataset tr = synthetic(100, 6, 3, 9);
  const Dataset te = synthetic(40, 6, 3, 10, Split::Test);
  const TrainConfig c = small_config(6, 3);
  const TrainRun run = train(c, tr, te);
  const ProbePair probes = make_probe_pair(te, c.seed);
  EXPECT_NE(te.labels[0], te.labels[static_cast<std::size_t>(
                              std::find_if(te.labels.begin(), te.labels.end(), [&](int y) { return y != te.labels[0]; }) -
                              te.labels.begin())]);
  EXPECT_NEAR(probes.random_a.norm(), 0.5 * (probes.data_a.norm() + probes.data_b.norm()), 1e-12);
  ProfileOptions opts = c.probe_profile;
  const LengthProfile direct =
      layer_length_profile(initial_network(c), Trajectory::circular(probes.data_a, probes.data_b, 2), opts);
  EXPECT_EQ(run.checkpoints[0].probes->data.layer_lengths, direct.layer_lengths);
}

TEST(Train, HugeLearningRateIsFlaggedAsDivergence) {
  const Dataset tr = synthetic(100, 6, 3, 11);
  const Dataset te = synthetic(40, 6, 3, 12, Split::Test);
  TrainConfig c = small_config(6, 3);
  c.record_probes = false;
  c.learning_rate = 1e308;
  const TrainRun run = train(c, tr, te);
  EXPECT_TRUE(run.diverged);
  EXPECT_FALSE(run.divergence.empty());
  EXPECT_LT(run.steps_completed, c.steps);
  EXPECT_FALSE(run.checkpoints.empty());
}

TEST(Train, RejectsInvalidConfigs) {
  const Dataset tr = synthetic(100, 6, 3, 11);
  TrainConfig c = small_config(6, 3);
  c.freeze_mask = {true, true, true, true};
  EXPECT_THROW(train(c, tr, tr), std::invalid_argument);
  c = small_config(6, 3);
  c.checkpoint_every = c.steps + 1;
  EXPECT_THROW(train(c, tr, tr), std::invalid_argument);
  c = small_config(6, 4);
  EXPECT_THROW(train(c, tr, tr), DimensionError);
}

TEST(Train, LossDropsWithinTwoHundredStepsOnMnist) {
  if (!have_mnist()) GTEST_SKIP() << "MNIST not found under " << mnist_dir();
  const Dataset tr = load_mnist_idx(mnist_dir() / "train-images-idx3-ubyte", mnist_dir() / "train-labels-idx1-ubyte",
                                    Split::Train, 1000);
  const Dataset te =
      load_mnist_idx(mnist_dir() / "t10k-images-idx3-ubyte", mnist_dir() / "t10k-labels-idx1-ubyte", Split::Test, 1000);
  TrainConfig c;
  c.steps = 200;
  c.checkpoint_every = 200;
  c.record_probes = false;
  const TrainRun run = train(c, tr, te);
  ASSERT_EQ(run.checkpoints.size(), 2u);
  EXPECT_LT(run.checkpoints[1].train_loss, run.checkpoints[0].train_loss);
}

TEST(RemainingDepth, RunsShareInitialNetwork) {
  const Dataset tr = synthetic(200, 6, 3, 13);
  const Dataset te = synthetic(50, 6, 3, 14, Split::Test);
  TrainConfig c = small_config(6, 3);
  c.record_probes = false;
  const RemainingDepthResult r = remaining_depth_experiment(c, {1, 3, 4}, tr, te, 2);
  ASSERT_EQ(r.runs.size(), 3u);
  for (std::size_t i = 0; i < r.runs.size(); ++i) {
    EXPECT_TRUE(r.runs[i].initial == r.initial);
    for (std::size_t l = 0; l < 3; ++l)
      EXPECT_EQ(r.runs[i].final_network.hidden(l) == r.initial.hidden(l), l + 1 != r.layers[i]);
  }
  EXPECT_FALSE(*r.runs[2].final_network.readout() == *r.initial.readout());
  EXPECT_EQ(r.baseline.test_accuracy, r.runs[0].checkpoints[0].test_accuracy);
  EXPECT_THROW(remaining_depth_experiment(c, {5}, tr, te), std::out_of_range);
}

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "netexpr/netcore.hpp"
#include "netexpr/trajkit.hpp"

namespace netexpr {

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

enum class Split : std::uint8_t { Train, Test };

std::string_view to_string(Split split);

class DataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Inputs are stored one example per column (dim x N) so that batches are
// contiguous column blocks for the matrix products.
struct Dataset {
  Matrix inputs;
  std::vector<int> labels;
  int num_classes = 10;
  Split split = Split::Train;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(inputs.rows()); }
  void validate() const;
  // The first n examples.
  Dataset head(std::size_t n) const;
};

// IDX files (big-endian; magic 2051 for images, 2049 for labels). Pixels are
// scaled by 1/255. `limit` reads only the first examples, which keeps a
// 10k-example subset of the 60k training file from being materialized whole.
Dataset load_mnist_idx(const std::filesystem::path& images, const std::filesystem::path& labels, Split split,
                       std::optional<std::size_t> limit = std::nullopt);

// CIFAR-10 binary batches: records of one label byte plus 3072 pixel bytes.
Dataset load_cifar10_binary(const std::vector<std::filesystem::path>& batches, Split split,
                            std::optional<std::size_t> limit = std::nullopt);

// ---------------------------------------------------------------------------
// Loss and gradients
// ---------------------------------------------------------------------------

// Per-parameter gradients in network order: index d < depth is hidden layer
// d (0-based), index depth is the readout.
struct Gradients {
  std::vector<Matrix> weights;
  std::vector<Vector> bias;
};

struct LossAndGradients {
  double loss = 0.0;
  Gradients grads;
};

// Trainable layers; size depth + 1 (last entry = readout). An empty mask
// means every layer is trainable.
using FreezeMask = std::vector<bool>;  // true = frozen

// Mean softmax cross-entropy over the batch columns and its exact gradient.
// Hard-tanh uses slope 1 on |h| < 1 and 0 elsewhere; ReLU slope 1 on h > 0.
// Gradients of frozen layers are exactly zero, and backpropagation stops at
// the lowest trainable layer.
LossAndGradients loss_and_gradients(const Network& net, const Matrix& inputs, std::span<const int> labels,
                                    const FreezeMask& frozen = {});

double cross_entropy(const Network& net, const Matrix& inputs, std::span<const int> labels);

struct Evaluation {
  double accuracy = 0.0;
  double loss = 0.0;
};

Evaluation evaluate(const Network& net, const Dataset& data);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

enum class OutputInit : std::uint8_t { Random, Zero };

struct TrainConfig {
  Architecture arch{784, std::vector<std::size_t>(6, 100), 10, Activation::HardTanh};
  InitSpec init{3.0, 0.01, 0};
  double learning_rate = 0.05;
  std::size_t batch_size = 64;
  std::size_t steps = 3000;
  FreezeMask freeze_mask;  // empty = all trainable
  std::size_t checkpoint_every = 300;
  std::optional<std::size_t> data_subset = 10000;
  std::uint64_t seed = 0;  // shuffling and the random probe pair
  OutputInit output_init = OutputInit::Random;
  bool record_probes = true;
  ProfileOptions probe_profile{RefinePolicy{1024, 1e-3, std::size_t{1} << 18}, false};

  void validate() const;
};

// Two fixed circular probes: one between dataset images, one between random
// Gaussian points of the same mean norm.
struct ProbePair {
  Vector data_a, data_b;
  Vector random_a, random_b;
};

// First two test images of distinct classes, and a Gaussian pair drawn from
// `seed` rescaled to the mean norm of the image pair.
ProbePair make_probe_pair(const Dataset& test, std::uint64_t seed);

struct ProbeLengths {
  LengthProfile data;
  LengthProfile random;
};

ProbeLengths probe_trajectories(const Network& net, const ProbePair& probes, const ProfileOptions& options);

struct Checkpoint {
  std::size_t step = 0;
  double train_accuracy = 0.0;
  double train_loss = 0.0;
  double test_accuracy = 0.0;
  double test_loss = 0.0;
  std::optional<ProbeLengths> probes;
};

struct TrainRun {
  TrainConfig config;
  Network initial;
  Network final_network;
  std::vector<Checkpoint> checkpoints;
  std::size_t steps_completed = 0;
  bool diverged = false;
  std::string divergence;
};

// Initial network for a config: sample_network(arch, init), with the readout
// zeroed when output_init is Zero.
Network initial_network(const TrainConfig& config);

// Plain minibatch SGD. Each epoch visits a Fisher-Yates permutation drawn from
// the run seed and the epoch index; a trailing partial batch is dropped.
// Checkpoints are taken at step 0, every checkpoint_every steps and at the
// last step.
TrainRun train(const TrainConfig& config, const Dataset& train_data, const Dataset& test_data);

struct RemainingDepthResult {
  Network initial;
  Checkpoint baseline;  // evaluation of the untouched initial network
  std::vector<std::size_t> layers;  // 1-based; depth + 1 = readout
  std::vector<TrainRun> runs;
};

// Trains exactly one layer per entry of `layers`, every run starting from the
// same initial network with all other layers frozen.
RemainingDepthResult remaining_depth_experiment(const TrainConfig& base, const std::vector<std::size_t>& layers,
                                                const Dataset& train_data, const Dataset& test_data,
                                                unsigned threads = 1);

}  // namespace netexpr

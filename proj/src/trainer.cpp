#include <algorithm>
#include <cmath>
#include <numeric>

#include "netexpr/parallel.hpp"
#include "netexpr/rng.hpp"
#include "netexpr/trainlab.hpp"

namespace netexpr {

namespace {

// Stream tags under the run seed.
constexpr std::uint64_t kShuffleStream = 1;
constexpr std::uint64_t kProbeStream = 2;

constexpr Eigen::Index kEvalBlock = 2000;

struct Params {
  std::vector<Layer> hidden;
  Layer readout;
  Activation activation;
};

Params params_of(const Network& net) {
  if (!net.has_readout()) throw DimensionError("training needs a network with a readout layer");
  return Params{net.hidden(), *net.readout(), net.activation()};
}

void check_labels(const Params& p, const Matrix& inputs, std::span<const int> labels) {
  if (inputs.cols() == 0) throw std::invalid_argument("loss: empty batch");
  if (static_cast<std::size_t>(inputs.cols()) != labels.size())
    throw DimensionError("loss: inputs and labels differ in count");
  if (static_cast<std::size_t>(inputs.rows()) != p.hidden.front().fan_in())
    throw DimensionError("loss: input dimension does not match the network");
  const auto classes = static_cast<int>(p.readout.fan_out());
  for (int y : labels)
    if (y < 0 || y >= classes) throw DimensionError("loss: label outside the readout range");
}

// Column-wise log-sum-exp of the logits; overwrites `logits` with softmax
// probabilities when `probs` is set.
Eigen::RowVectorXd log_sum_exp(Matrix& logits, bool probs) {
  Eigen::RowVectorXd lse(logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    auto col = logits.col(c);
    const double m = col.maxCoeff();
    const double s = (col.array() - m).exp().sum();
    lse[c] = m + std::log(s);
    if (probs) col = (col.array() - lse[c]).exp();
  }
  return lse;
}

Matrix logits_of(const Params& p, const Matrix& inputs, std::vector<Matrix>* pre, std::vector<Matrix>* post) {
  Matrix z = inputs;
  for (const Layer& layer : p.hidden) {
    Matrix h = layer.weights * z;
    h.colwise() += layer.bias;
    if (post) post->push_back(std::move(z));
    if (pre) pre->push_back(h);
    activate(p.activation, h);
    z = std::move(h);
  }
  Matrix logits = p.readout.weights * z;
  logits.colwise() += p.readout.bias;
  if (post) post->push_back(std::move(z));
  return logits;
}

LossAndGradients forward_backward(const Params& p, const Matrix& inputs, std::span<const int> labels,
                                  const FreezeMask& frozen) {
  check_labels(p, inputs, labels);
  const std::size_t depth = p.hidden.size();
  if (!frozen.empty() && frozen.size() != depth + 1) throw DimensionError("freeze mask must have depth + 1 entries");
  auto trainable = [&](std::size_t l) { return frozen.empty() || !frozen[l]; };

  std::vector<Matrix> pre, post;  // post[d] is the input to layer d; post[depth] feeds the readout
  Matrix logits = logits_of(p, inputs, &pre, &post);
  const double batch = static_cast<double>(inputs.cols());

  double loss = 0.0;
  {
    Matrix scratch = logits;
    const Eigen::RowVectorXd lse = log_sum_exp(scratch, false);
    for (Eigen::Index c = 0; c < logits.cols(); ++c) loss += lse[c] - logits(labels[static_cast<std::size_t>(c)], c);
    loss /= batch;
  }
  // dL/dlogits = (softmax - onehot) / batch
  log_sum_exp(logits, true);
  for (Eigen::Index c = 0; c < logits.cols(); ++c) logits(labels[static_cast<std::size_t>(c)], c) -= 1.0;
  Matrix& delta_out = logits;
  delta_out /= batch;

  LossAndGradients out;
  out.loss = loss;
  out.grads.weights.resize(depth + 1);
  out.grads.bias.resize(depth + 1);
  for (std::size_t d = 0; d < depth; ++d) {
    out.grads.weights[d] = Matrix::Zero(p.hidden[d].weights.rows(), p.hidden[d].weights.cols());
    out.grads.bias[d] = Vector::Zero(p.hidden[d].bias.size());
  }
  out.grads.weights[depth] = Matrix::Zero(p.readout.weights.rows(), p.readout.weights.cols());
  out.grads.bias[depth] = Vector::Zero(p.readout.bias.size());

  std::size_t lowest = depth + 1;
  for (std::size_t l = 0; l <= depth; ++l)
    if (trainable(l)) {
      lowest = l;
      break;
    }
  if (lowest > depth) return out;

  if (trainable(depth)) {
    out.grads.weights[depth].noalias() = delta_out * post[depth].transpose();
    out.grads.bias[depth] = delta_out.rowwise().sum();
  }
  if (lowest == depth) return out;

  Matrix delta = p.readout.weights.transpose() * delta_out;
  for (std::size_t d = depth; d-- > lowest;) {
    const Matrix& h = pre[d];
    for (Eigen::Index i = 0; i < delta.size(); ++i) delta.data()[i] *= activation_slope(p.activation, h.data()[i]);
    if (trainable(d)) {
      out.grads.weights[d].noalias() = delta * post[d].transpose();
      out.grads.bias[d] = delta.rowwise().sum();
    }
    if (d > lowest) delta = p.hidden[d].weights.transpose() * delta;
  }
  return out;
}

Evaluation evaluate_params(const Params& p, const Dataset& data) {
  data.validate();
  double loss = 0.0;
  std::size_t correct = 0;
  for (Eigen::Index first = 0; first < data.inputs.cols(); first += kEvalBlock) {
    const Eigen::Index count = std::min(kEvalBlock, data.inputs.cols() - first);
    Matrix logits = logits_of(p, data.inputs.middleCols(first, count), nullptr, nullptr);
    const Eigen::RowVectorXd lse = log_sum_exp(logits, false);
    for (Eigen::Index c = 0; c < count; ++c) {
      const int y = data.labels[static_cast<std::size_t>(first + c)];
      loss += lse[c] - logits(y, c);
      Eigen::Index arg = 0;
      logits.col(c).maxCoeff(&arg);
      if (arg == y) ++correct;
    }
  }
  const auto n = static_cast<double>(data.size());
  return {static_cast<double>(correct) / n, loss / n};
}

Network network_of(const Params& p) { return Network(p.hidden, p.activation, p.readout); }

void gather_batch(const Dataset& data, std::span<const std::size_t> idx, Matrix& x, std::vector<int>& y) {
  x.resize(data.inputs.rows(), static_cast<Eigen::Index>(idx.size()));
  y.resize(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    x.col(static_cast<Eigen::Index>(i)) = data.inputs.col(static_cast<Eigen::Index>(idx[i]));
    y[i] = data.labels[idx[i]];
  }
}

bool all_finite(const LossAndGradients& lg) {
  if (!std::isfinite(lg.loss)) return false;
  for (const Matrix& w : lg.grads.weights)
    if (!w.allFinite()) return false;
  for (const Vector& b : lg.grads.bias)
    if (!b.allFinite()) return false;
  return true;
}

}  // namespace

LossAndGradients loss_and_gradients(const Network& net, const Matrix& inputs, std::span<const int> labels,
                                    const FreezeMask& frozen) {
  return forward_backward(params_of(net), inputs, labels, frozen);
}

double cross_entropy(const Network& net, const Matrix& inputs, std::span<const int> labels) {
  const Params p = params_of(net);
  check_labels(p, inputs, labels);
  Matrix logits = logits_of(p, inputs, nullptr, nullptr);
  const Eigen::RowVectorXd lse = log_sum_exp(logits, false);
  double loss = 0.0;
  for (Eigen::Index c = 0; c < logits.cols(); ++c) loss += lse[c] - logits(labels[static_cast<std::size_t>(c)], c);
  return loss / static_cast<double>(logits.cols());
}

Evaluation evaluate(const Network& net, const Dataset& data) { return evaluate_params(params_of(net), data); }

void TrainConfig::validate() const {
  arch.validate();
  init.validate();
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw std::invalid_argument("learning_rate must be > 0");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
  if (steps == 0) throw std::invalid_argument("steps must be >= 1");
  if (checkpoint_every == 0 || checkpoint_every > steps)
    throw std::invalid_argument("checkpoint_every must be in [1, steps]");
  if (!freeze_mask.empty()) {
    if (freeze_mask.size() != arch.depth() + 1)
      throw std::invalid_argument("freeze_mask must have one entry per hidden layer plus the readout");
    if (std::all_of(freeze_mask.begin(), freeze_mask.end(), [](bool f) { return f; }))
      throw std::invalid_argument("freeze_mask leaves no trainable layer");
  }
  if (data_subset && *data_subset == 0) throw std::invalid_argument("data_subset must be >= 1");
  if (record_probes) probe_profile.refine.validate();
}

ProbePair make_probe_pair(const Dataset& test, std::uint64_t seed) {
  test.validate();
  const auto first = std::find_if(test.labels.begin(), test.labels.end(), [&](int y) { return y != test.labels[0]; });
  if (first == test.labels.end()) throw DataError("probe pair needs two examples of distinct classes");
  ProbePair p;
  p.data_a = test.inputs.col(0);
  p.data_b = test.inputs.col(first - test.labels.begin());
  const double norm = 0.5 * (p.data_a.norm() + p.data_b.norm());
  Rng rng(mix_seed(seed, kProbeStream));
  p.random_a = norm * random_unit_vector(test.dim(), rng);
  p.random_b = norm * random_unit_vector(test.dim(), rng);
  return p;
}

ProbeLengths probe_trajectories(const Network& net, const ProbePair& probes, const ProfileOptions& options) {
  ProfileOptions opts = options;
  opts.include_output = false;
  const Trajectory data = Trajectory::circular(probes.data_a, probes.data_b, 2);
  const Trajectory random = Trajectory::circular(probes.random_a, probes.random_b, 2);
  return {layer_length_profile(net, data, opts), layer_length_profile(net, random, opts)};
}

Network initial_network(const TrainConfig& config) {
  Network net = sample_network(config.arch, config.init);
  if (config.output_init == OutputInit::Zero) {
    Layer zero{Matrix::Zero(static_cast<Eigen::Index>(config.arch.output_dim), net.readout()->weights.cols()),
               Vector::Zero(static_cast<Eigen::Index>(config.arch.output_dim))};
    net = net.with_readout(std::move(zero));
  }
  return net;
}

TrainRun train(const TrainConfig& config, const Dataset& train_data, const Dataset& test_data) {
  config.validate();
  train_data.validate();
  test_data.validate();
  if (train_data.dim() != config.arch.input_dim || test_data.dim() != config.arch.input_dim)
    throw DimensionError("train: dataset dimension does not match the architecture input");
  if (static_cast<int>(config.arch.output_dim) != train_data.num_classes)
    throw DimensionError("train: output_dim must equal the number of classes");

  const Dataset data = config.data_subset ? train_data.head(std::min(*config.data_subset, train_data.size())) : train_data;
  if (config.batch_size > data.size()) throw std::invalid_argument("train: batch_size exceeds the training set");

  const Network init = initial_network(config);
  Params p = params_of(init);
  std::optional<ProbePair> probes;
  if (config.record_probes) probes = make_probe_pair(test_data, config.seed);

  TrainRun run{config, init, init, {}, 0, false, {}};
  auto checkpoint = [&](std::size_t step) {
    Checkpoint c;
    c.step = step;
    const Evaluation tr = evaluate_params(p, data);
    const Evaluation te = evaluate_params(p, test_data);
    c.train_accuracy = tr.accuracy;
    c.train_loss = tr.loss;
    c.test_accuracy = te.accuracy;
    c.test_loss = te.loss;
    if (probes) c.probes = probe_trajectories(network_of(p), *probes, config.probe_profile);
    run.checkpoints.push_back(std::move(c));
  };

  const std::size_t n = data.size();
  const std::size_t per_epoch = n / config.batch_size;
  std::vector<std::size_t> order(n);
  Matrix xb;
  std::vector<int> yb;
  const std::size_t depth = config.arch.depth();
  auto trainable = [&](std::size_t l) { return config.freeze_mask.empty() || !config.freeze_mask[l]; };

  try {
    checkpoint(0);
    for (std::size_t step = 0; step < config.steps; ++step) {
      const std::size_t slot = step % per_epoch;
      if (slot == 0) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(mix_seed(mix_seed(config.seed, kShuffleStream), step / per_epoch));
        for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_index(i + 1)]);
      }
      gather_batch(data, std::span(order).subspan(slot * config.batch_size, config.batch_size), xb, yb);
      const LossAndGradients lg = forward_backward(p, xb, yb, config.freeze_mask);
      if (!all_finite(lg)) {
        run.diverged = true;
        run.divergence = "non-finite loss or gradient at step " + std::to_string(step + 1);
        break;
      }
      for (std::size_t d = 0; d < depth; ++d) {
        if (!trainable(d)) continue;
        p.hidden[d].weights.noalias() -= config.learning_rate * lg.grads.weights[d];
        p.hidden[d].bias.noalias() -= config.learning_rate * lg.grads.bias[d];
      }
      if (trainable(depth)) {
        p.readout.weights.noalias() -= config.learning_rate * lg.grads.weights[depth];
        p.readout.bias.noalias() -= config.learning_rate * lg.grads.bias[depth];
      }
      run.steps_completed = step + 1;
      if (run.steps_completed % config.checkpoint_every == 0 || run.steps_completed == config.steps)
        checkpoint(run.steps_completed);
    }
  } catch (const NumericError& e) {
    run.diverged = true;
    run.divergence = e.what();
  }
  if (!run.diverged) run.final_network = network_of(p);
  return run;
}

RemainingDepthResult remaining_depth_experiment(const TrainConfig& base, const std::vector<std::size_t>& layers,
                                                const Dataset& train_data, const Dataset& test_data, unsigned threads) {
  base.validate();
  const std::size_t depth = base.arch.depth();
  if (layers.empty()) throw std::invalid_argument("remaining depth: no layers to train");
  for (std::size_t l : layers)
    if (l == 0 || l > depth + 1) throw std::out_of_range("remaining depth: layer " + std::to_string(l) + " out of range");

  RemainingDepthResult result{initial_network(base), {}, layers, std::vector<TrainRun>(layers.size(), TrainRun{
                                                                    base, initial_network(base), initial_network(base),
                                                                    {}, 0, false, {}})};
  const Dataset data = base.data_subset ? train_data.head(std::min(*base.data_subset, train_data.size())) : train_data;
  const Evaluation tr = evaluate(result.initial, data);
  const Evaluation te = evaluate(result.initial, test_data);
  result.baseline = Checkpoint{0, tr.accuracy, tr.loss, te.accuracy, te.loss, std::nullopt};

  parallel_for(layers.size(), threads, [&](std::size_t i) {
    TrainConfig cfg = base;
    cfg.freeze_mask.assign(depth + 1, true);
    cfg.freeze_mask[layers[i] - 1] = false;
    result.runs[i] = train(cfg, train_data, test_data);
  });
  return result;
}

}  // namespace netexpr

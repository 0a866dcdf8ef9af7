#include "netexpr/expcli/runner.hpp"

#include <cmath>
#include <fstream>
#include <ostream>

#include "netexpr/exmeasures.hpp"
#include "netexpr/network_io.hpp"
#include "netexpr/parallel.hpp"
#include "netexpr/rng.hpp"
#include "netexpr/stats.hpp"
#include "netexpr/trainlab.hpp"
#include "netexpr/trajkit.hpp"

namespace netexpr::cli {

namespace fs = std::filesystem;

namespace {

// Stream tags under a trial seed.
constexpr std::uint64_t kPointStream = 0x5e7;
constexpr std::uint64_t kRegionLayerStream = 1;

struct Context {
  const ExperimentConfig& config;
  const RunOptions& options;
  RunManifest& manifest;

  fs::path file(const std::string& name) {
    manifest.files.push_back(name);
    return config.out / name;
  }
  void log(const std::string& line) const {
    if (options.log) *options.log << "[" << to_string(config.kind) << "] " << line << std::endl;
  }
  void flag(const std::string& status, const std::string& note) {
    if (manifest.status == "ok" || status == "diverged") manifest.status = status;
    manifest.notes.push_back(note);
  }
};

RefinePolicy refine_from(const ExperimentConfig& c, const std::string& prefix = "") {
  RefinePolicy p{c.get_size(prefix + "initial_samples"), c.get_real(prefix + "rel_tol"), c.get_size(prefix + "max_samples")};
  p.validate();
  return p;
}

Window window_from(const ExperimentConfig& c) {
  const auto w = c.get_reals("window");
  Window win = Window::standard(2);
  win.u_min = w[0];
  win.u_max = w[1];
  win.v_min = w[2];
  win.v_max = w[3];
  return win;
}

std::string config_label(std::size_t k, double sw, double sb) {
  return "k=" + std::to_string(k) + " sigma_w2=" + format_real(sw) + " sigma_b2=" + format_real(sb);
}

// ---------------------------------------------------------------------------

void run_traj_growth(Context& ctx) {
  const auto& c = ctx.config;
  ctx.manifest.notes.push_back(
      "bound_factor is the per-layer lower-bound factor g with its big-O constant taken as 1; compare slopes of "
      "log length against ln g, not absolute lengths");
  GrowthSweepSpec spec;
  spec.widths = c.get_sizes("k");
  spec.sigma_w_sq = c.get_reals("sigma_w2");
  spec.sigma_b_sq = c.get_reals("sigma_b2");
  spec.depths = c.get_sizes("depth");
  spec.input_dim = c.get_size("input_dim");
  spec.replicas = c.get_size("replicas");
  spec.seed = c.seed;
  spec.activation = parse_activation(c.get_text("activation"));
  spec.profile.refine = refine_from(c);
  const std::size_t ratio_from = c.get_size("ratio_from");

  CsvWriter lengths(ctx.file("lengths.csv"),
                    {"k", "sigma_w2", "sigma_b2", "depth", "replica", "seed", "layer", "length", "samples", "converged"});
  CsvWriter growth(ctx.file("growth.csv"), {"k", "sigma_w2", "sigma_b2", "depth", "layer", "mean_length",
                                             "mean_log_length", "mean_ratio", "std_ratio", "bound_factor"});
  CsvWriter ratios(ctx.file("ratios.csv"), {"k", "sigma_w2", "sigma_b2", "depth", "layer_from", "layer_to",
                                             "mean_ratio", "std_ratio", "bound_factor", "converged"});

  for (const GrowthConfig& cfg : spec.configs()) {
    ctx.log(config_label(cfg.width, cfg.sigma_w_sq, cfg.sigma_b_sq) + " depth=" + std::to_string(cfg.depth));
    const GrowthStats s = growth_stats(cfg, spec, c.threads);
    for (const ReplicaProfile& rp : s.profiles) {
      const LengthProfile& p = rp.profile;
      for (std::size_t d = 0; d <= cfg.depth; ++d)
        lengths.row({cfg.width, cfg.sigma_w_sq, cfg.sigma_b_sq, cfg.depth, rp.replica, rp.seed, d,
                     d == 0 ? p.input_length : p.layer_lengths[d - 1], p.samples, p.converged});
    }
    for (std::size_t d = 0; d <= cfg.depth; ++d) {
      const Cell ratio = d == 0 ? Cell() : Cell(s.mean_ratio[d - 1]);
      const Cell ratio_sd = d == 0 ? Cell() : Cell(s.std_ratio[d - 1]);
      growth.row({cfg.width, cfg.sigma_w_sq, cfg.sigma_b_sq, cfg.depth, d, s.mean_length[d], s.mean_log_length[d], ratio,
                  ratio_sd, s.bound_factor});
    }
    // Per-replica average ratio over layers ratio_from..depth.
    std::vector<double> per_replica;
    for (const ReplicaProfile& rp : s.profiles) {
      double acc = 0.0;
      for (std::size_t d = ratio_from; d <= cfg.depth; ++d) {
        const double below = d == 1 ? rp.profile.input_length : rp.profile.layer_lengths[d - 2];
        acc += below > 0.0 ? rp.profile.layer_lengths[d - 1] / below : 0.0;
      }
      per_replica.push_back(acc / static_cast<double>(cfg.depth - ratio_from + 1));
    }
    ratios.row({cfg.width, cfg.sigma_w_sq, cfg.sigma_b_sq, cfg.depth, ratio_from, cfg.depth, mean(per_replica),
                stddev(per_replica), s.bound_factor, s.converged});
    if (!s.converged)
      ctx.flag("non-converged", "length refinement hit max_samples for " +
                                    config_label(cfg.width, cfg.sigma_w_sq, cfg.sigma_b_sq));
  }
  lengths.close();
  growth.close();
  ratios.close();
}

// ---------------------------------------------------------------------------

void run_transitions(Context& ctx) {
  const auto& c = ctx.config;
  GrowthSweepSpec spec;
  spec.widths = c.get_sizes("k");
  spec.sigma_w_sq = c.get_reals("sigma_w2");
  spec.sigma_b_sq = c.get_reals("sigma_b2");
  spec.depths = {c.get_size("depth")};
  spec.input_dim = c.get_size("input_dim");
  spec.replicas = c.get_size("replicas");
  spec.seed = c.seed;
  spec.activation = parse_activation(c.get_text("activation"));
  spec.profile.refine = refine_from(c);
  const TransitionMode mode = c.get_text("mode") == "sign" ? TransitionMode::SignChange : TransitionMode::RegionBoundary;

  CsvWriter rows(ctx.file("transitions.csv"), {"k", "sigma_w2", "sigma_b2", "replica", "seed", "layer", "length",
                                               "transitions", "length_samples", "transition_samples", "converged"});
  CsvWriter fits(ctx.file("transitions_fit.csv"),
                 {"k", "sigma_w2", "sigma_b2", "pairs", "slope", "intercept", "r_squared"});

  struct Replica {
    std::uint64_t seed = 0;
    LengthProfile lengths;
    TransitionCount counts;
  };
  for (const GrowthConfig& cfg : spec.configs()) {
    ctx.log(config_label(cfg.width, cfg.sigma_w_sq, cfg.sigma_b_sq));
    std::vector<Replica> reps(spec.replicas);
    parallel_for(spec.replicas, c.threads, [&](std::size_t r) {
      const GrowthReplicaSetup setup = growth_replica_setup(cfg, spec, r);
      reps[r].seed = setup.seed;
      reps[r].lengths = layer_length_profile(setup.network, setup.trajectory, spec.profile);
      reps[r].counts = count_transitions(setup.network, setup.trajectory, TransitionScope::all(), spec.profile.refine, mode);
    });
    std::vector<double> xs, ys;
    bool converged = true;
    for (std::size_t r = 0; r < reps.size(); ++r) {
      const Replica& rep = reps[r];
      const bool ok = rep.lengths.converged && rep.counts.converged;
      converged = converged && ok;
      for (std::size_t d = 1; d <= cfg.depth; ++d) {
        const double length = rep.lengths.layer_lengths[d - 1];
        const auto count = rep.counts.per_layer[d - 1];
        rows.row({cfg.width, cfg.sigma_w_sq, cfg.sigma_b_sq, r, rep.seed, d, length, count, rep.lengths.samples,
                  rep.counts.samples, ok});
        xs.push_back(length);
        ys.push_back(static_cast<double>(count));
      }
    }
    const LinearFit fit = fit_line(xs, ys);
    fits.row({cfg.width, cfg.sigma_w_sq, cfg.sigma_b_sq, xs.size(), fit.slope, fit.intercept, fit.r_squared});
    if (!converged)
      ctx.flag("non-converged", "refinement hit max_samples for " + config_label(cfg.width, cfg.sigma_w_sq, cfg.sigma_b_sq));
  }
  rows.close();
  fits.close();
}

// ---------------------------------------------------------------------------

Network region_network(const ExperimentConfig& c, const Window& window, std::size_t replica) {
  const std::uint64_t seed = replica_seed(c.seed, replica);
  const auto widths = c.get_sizes("widths");
  const double sw = c.get_real("sigma_w2");
  const double sb = c.get_real("sigma_b2");
  Rng rng(mix_seed(seed, kRegionLayerStream));
  std::vector<Layer> layers;
  layers.push_back(c.get_bool("arrangement") ? random_arrangement_layer(widths[0], window, seed)
                                             : sample_layer(2, widths[0], sw, sb, rng));
  for (std::size_t d = 1; d < widths.size(); ++d) layers.push_back(sample_layer(widths[d - 1], widths[d], sw, sb, rng));
  return Network(std::move(layers), parse_activation(c.get_text("activation")));
}

void run_regions(Context& ctx) {
  const auto& c = ctx.config;
  const Window window = window_from(c);
  const auto widths = c.get_sizes("widths");
  const std::size_t replicas = c.get_size("replicas");
  const std::size_t res = c.get_size("resolution");

  std::vector<std::vector<std::size_t>> counts(replicas);
  parallel_for(replicas, c.threads, [&](std::size_t r) {
    const Network net = region_network(c, window, r);
    for (std::size_t d = 1; d <= net.depth(); ++d) counts[r].push_back(count_regions_2d(net.slice(0, d), window, res).count);
  });

  {
    std::ofstream out(ctx.file("regions.jsonl"), std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write regions.jsonl");
    for (std::size_t r = 0; r < replicas; ++r) {
      for (std::size_t d = 1; d <= widths.size(); ++d) {
        nlohmann::ordered_json j;
        j["replica"] = r;
        j["seed"] = replica_seed(c.seed, r);
        j["layers"] = d;
        j["widths"] = std::vector<std::size_t>(widths.begin(), widths.begin() + static_cast<std::ptrdiff_t>(d));
        j["resolution"] = res;
        j["regions"] = counts[r][d - 1];
        if (d == 1 && c.get_bool("arrangement")) j["expected"] = general_position_regions(widths[0]);
        out << j.dump() << '\n';
      }
    }
    if (!out) throw IoError("write failed: regions.jsonl");
  }

  if (const std::size_t grid = c.get_size("grid_resolution"); grid > 0) {
    const RegionMap map = count_regions_2d(region_network(c, window, 0), window, grid);
    CsvWriter g(ctx.file("regions_grid.csv"), {"row", "col", "u", "v", "region"});
    for (std::size_t row = 0; row < grid; ++row)
      for (std::size_t col = 0; col < grid; ++col) g.row({row, col, map.u_at(col), map.v_at(row), map.id(row, col)});
    g.close();
  }
}

// ---------------------------------------------------------------------------

void run_boundaries(Context& ctx) {
  const auto& c = ctx.config;
  const Window window = window_from(c);
  Architecture arch{2, c.get_sizes("widths"), 1, parse_activation(c.get_text("activation"))};
  const InitSpec init{c.get_real("sigma_w2"), c.get_real("sigma_b2"), c.seed};
  const Network net = sample_network(arch, init);
  const BoundarySet set = boundary_contours(net, window, c.get_size("resolution"), net.depth());

  CsvWriter out(ctx.file("boundaries.csv"), {"layer", "neuron", "level", "polyline", "point", "x", "y", "closed"});
  for (std::size_t i = 0; i < set.polylines.size(); ++i) {
    const BoundaryPolyline& line = set.polylines[i];
    for (std::size_t p = 0; p < line.points.size(); ++p)
      out.row({line.layer, line.neuron + 1, line.level, i, p, line.points[p].u, line.points[p].v, line.closed});
  }
  out.close();
  std::ofstream net_out(ctx.file("network.txt"), std::ios::binary | std::ios::trunc);
  write_network(net_out, net, init);
}

// ---------------------------------------------------------------------------

void run_dichotomies(Context& ctx) {
  const auto& c = ctx.config;
  const std::size_t depth = c.get_size("depth");
  const Architecture arch{c.get_size("input_dim"), std::vector<std::size_t>(depth, c.get_size("k")), 1,
                          parse_activation(c.get_text("activation"))};
  std::vector<DichotomyMode> modes;
  if (c.get_bool("all_weights")) modes.push_back(DichotomyMode::all_weights());
  auto layers = c.get_sizes("layers");
  if (layers.empty())
    for (std::size_t l = 1; l <= depth; ++l) layers.push_back(l);
  for (std::size_t l : layers) modes.push_back(DichotomyMode::resample_layer(l));
  const auto sizes = c.get_sizes("s");
  const auto samples = c.get_sizes("samples");
  const std::size_t trials = c.get_size("trials");

  std::vector<std::vector<DichotomyReport>> reports(trials);
  parallel_for(trials, c.threads, [&](std::size_t t) {
    const std::uint64_t seed = replica_seed(c.seed, t);
    for (std::size_t s : sizes) {
      const auto points = random_sphere_points(s, arch.input_dim, mix_seed(seed, kPointStream));
      for (std::size_t n : samples)
        for (const DichotomyMode& mode : modes)
          reports[t].push_back(count_dichotomies(arch, InitSpec{c.get_real("sigma_w2"), c.get_real("sigma_b2"), seed},
                                                 points, n, mode));
    }
  });

  CsvWriter out(ctx.file("dichotomies.csv"), {"trial", "seed", "mode", "layer", "s", "samples", "distinct", "ties"});
  for (std::size_t t = 0; t < trials; ++t)
    for (const DichotomyReport& r : reports[t]) {
      const bool all = r.mode.kind == DichotomyMode::Kind::AllWeights;
      out.row({t, replica_seed(c.seed, t), all ? "all" : "layer", all ? std::size_t{0} : r.mode.layer, r.s, r.samples,
               r.distinct, r.ties});
    }
  out.close();
}

// ---------------------------------------------------------------------------

struct Data {
  Dataset train;
  Dataset test;
};

fs::path find_dir(const fs::path& base, const std::string& sub, const std::string& probe) {
  for (const fs::path& dir : {base / sub, base})
    if (fs::exists(dir / probe)) return dir;
  throw IoError("cannot find " + probe + " under " + base.string() + " (set data_dir or NETEXPR_DATA_DIR)");
}

Data load_data(const ExperimentConfig& c) {
  const fs::path base = c.get_text("data_dir");
  const std::size_t train_n = c.get_size("train_subset");
  const std::size_t test_n = c.get_size("test_subset");
  auto limit = [](std::size_t n) { return n == 0 ? std::nullopt : std::optional<std::size_t>(n); };
  try {
    if (c.get_text("dataset") == "mnist") {
      const fs::path dir = find_dir(base, "mnist", "train-images-idx3-ubyte");
      return {load_mnist_idx(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte", Split::Train, limit(train_n)),
              load_mnist_idx(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte", Split::Test, limit(test_n))};
    }
    const fs::path dir = find_dir(base, "cifar-10-batches-bin", "data_batch_1.bin");
    std::vector<fs::path> batches;
    for (int i = 1; i <= 5; ++i) batches.push_back(dir / ("data_batch_" + std::to_string(i) + ".bin"));
    return {load_cifar10_binary(batches, Split::Train, limit(train_n)),
            load_cifar10_binary({dir / "test_batch.bin"}, Split::Test, limit(test_n))};
  } catch (const DataError& e) {
    throw IoError(e.what());
  }
}

TrainConfig train_config(const ExperimentConfig& c, std::size_t input_dim) {
  TrainConfig t;
  t.arch = Architecture{input_dim, std::vector<std::size_t>(c.get_size("depth"), c.get_size("width")), 10,
                        parse_activation(c.get_text("activation"))};
  t.init = InitSpec{c.get_real("sigma_w2"), c.get_real("sigma_b2"), c.seed};
  t.learning_rate = c.get_real("learning_rate");
  t.batch_size = c.get_size("batch_size");
  t.steps = c.get_size("steps");
  t.checkpoint_every = c.get_size("checkpoint_every");
  t.data_subset.reset();  // applied at load time
  t.seed = c.seed;
  t.output_init = c.get_text("output_init") == "zero" ? OutputInit::Zero : OutputInit::Random;
  t.record_probes = c.get_bool("probes");
  t.probe_profile.refine = refine_from(c, "probe_");
  t.probe_profile.include_output = false;
  return t;
}

const std::vector<std::string> kRunHeader = {"step", "split", "accuracy", "loss", "layer", "probe", "length"};

void write_run_rows(CsvWriter& out, const TrainRun& run) {
  for (const Checkpoint& ck : run.checkpoints) {
    out.row({ck.step, "train", ck.train_accuracy, ck.train_loss, Cell(), Cell(), Cell()});
    out.row({ck.step, "test", ck.test_accuracy, ck.test_loss, Cell(), Cell(), Cell()});
    if (!ck.probes) continue;
    for (const auto& [name, profile] : {std::pair{"data", &ck.probes->data}, std::pair{"random", &ck.probes->random}}) {
      out.row({ck.step, Cell(), Cell(), Cell(), 0, name, profile->input_length});
      for (std::size_t d = 0; d < profile->layer_lengths.size(); ++d)
        out.row({ck.step, Cell(), Cell(), Cell(), d + 1, name, profile->layer_lengths[d]});
    }
  }
}

void flag_run(Context& ctx, const TrainRun& run, const std::string& what) {
  if (run.diverged) ctx.flag("diverged", what + ": " + run.divergence);
  for (const Checkpoint& ck : run.checkpoints)
    if (ck.probes && (!ck.probes->data.converged || !ck.probes->random.converged)) {
      ctx.flag("non-converged", what + ": probe refinement hit probe_max_samples at step " + std::to_string(ck.step));
      break;
    }
}

void save_network(Context& ctx, const std::string& name, const Network& net, const std::optional<InitSpec>& init) {
  std::ofstream out(ctx.file(name), std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + name);
  write_network(out, net, init);
}

void run_train_traj(Context& ctx) {
  const auto& c = ctx.config;
  const Data data = load_data(c);
  const TrainConfig cfg = train_config(c, data.train.dim());
  ctx.log("training " + std::to_string(cfg.steps) + " steps on " + std::to_string(data.train.size()) + " examples");
  const TrainRun run = train(cfg, data.train, data.test);
  CsvWriter out(ctx.file("run.csv"), kRunHeader);
  write_run_rows(out, run);
  out.close();
  save_network(ctx, "network_init.txt", run.initial, cfg.init);
  if (!run.diverged) save_network(ctx, "network_final.txt", run.final_network, std::nullopt);
  flag_run(ctx, run, "run");
  ctx.manifest.extra["steps_completed"] = run.steps_completed;
}

void run_train_freeze(Context& ctx) {
  const auto& c = ctx.config;
  const Data data = load_data(c);
  const TrainConfig cfg = train_config(c, data.train.dim());
  auto layers = c.get_sizes("layers");
  if (layers.empty())
    for (std::size_t l = 1; l <= cfg.arch.depth(); ++l) layers.push_back(l);
  ctx.log("training layers one at a time: " + std::to_string(layers.size()) + " runs");
  const RemainingDepthResult result = remaining_depth_experiment(cfg, layers, data.train, data.test, c.threads);

  CsvWriter base(ctx.file("baseline.csv"), {"split", "accuracy", "loss"});
  base.row({"train", result.baseline.train_accuracy, result.baseline.train_loss});
  base.row({"test", result.baseline.test_accuracy, result.baseline.test_loss});
  base.close();
  save_network(ctx, "network_init.txt", result.initial, cfg.init);

  nlohmann::ordered_json runs = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string name = "run_layer" + std::to_string(layers[i]) + ".csv";
    CsvWriter out(ctx.file(name), kRunHeader);
    write_run_rows(out, result.runs[i]);
    out.close();
    runs.push_back({{"layer", layers[i]},
                    {"file", name},
                    {"init_digest", sha256_text(network_to_string(result.runs[i].initial, cfg.init))}});
    flag_run(ctx, result.runs[i], "layer " + std::to_string(layers[i]));
  }
  ctx.manifest.extra["init_digest"] = sha256_text(network_to_string(result.initial, cfg.init));
  ctx.manifest.extra["runs"] = runs;
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  prepare_output_dir(config.out, options.overwrite);
  RunResult result;
  RunManifest& m = result.manifest;
  m.config = config.to_json();
  m.version = std::string(kToolkitVersion);
  m.prng = std::string(Rng::kAlgorithmId);
  m.started_at = utc_timestamp();
  Context ctx{config, options, m};
  switch (config.kind) {
    case ExperimentKind::TrajGrowth: run_traj_growth(ctx); break;
    case ExperimentKind::Transitions: run_transitions(ctx); break;
    case ExperimentKind::Regions: run_regions(ctx); break;
    case ExperimentKind::Boundaries: run_boundaries(ctx); break;
    case ExperimentKind::Dichotomies: run_dichotomies(ctx); break;
    case ExperimentKind::TrainTraj: run_train_traj(ctx); break;
    case ExperimentKind::TrainFreeze: run_train_freeze(ctx); break;
  }
  m.finished_at = utc_timestamp();
  m.write(config.out);
  result.exit_code = m.status == "ok" ? kExitOk : kExitNonConvergence;
  return result;
}

}  // namespace netexpr::cli

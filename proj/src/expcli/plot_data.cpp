// plot-data: every number a figure needs (bound curves, fitted lines, means
// over replicas, panel membership) is computed here so that plotting code
// only maps columns to marks.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "netexpr/expcli/runner.hpp"
#include "netexpr/rng.hpp"
#include "netexpr/stats.hpp"

namespace netexpr::cli {

namespace fs = std::filesystem;

namespace {

double num(const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw IoError("not a number: '" + s + "'");
  }
}

std::string series_label(const std::string& k, const std::string& sw, const std::string& sb) {
  return "k=" + k + " sigma_w2=" + sw + " sigma_b2=" + sb;
}

struct Out {
  const fs::path& dir;
  RunManifest& manifest;
  CsvWriter open(const std::string& name, std::vector<std::string> header) {
    manifest.files.push_back(name);
    return CsvWriter(dir / name, std::move(header));
  }
};

void growth(const fs::path& in, Out& out) {
  const CsvTable g = read_csv(in / "growth.csv");
  const std::size_t ck = g.column("k"), csw = g.column("sigma_w2"), csb = g.column("sigma_b2"), cd = g.column("depth"),
                    cl = g.column("layer"), cm = g.column("mean_length"), cb = g.column("bound_factor");
  CsvWriter w = out.open("plot_growth.csv",
                         {"series", "k", "sigma_w2", "sigma_b2", "depth", "layer", "mean_length", "bound_length"});
  double base = 0.0;
  for (const auto& r : g.rows) {
    const auto layer = static_cast<int>(num(r[cl]));
    if (layer == 0) base = num(r[cm]);
    // Lower-bound curve anchored at the measured input length.
    const double bound = base * std::pow(num(r[cb]), layer);
    w.row({series_label(r[ck], r[csw], r[csb]), r[ck], r[csw], r[csb], r[cd], r[cl], r[cm], bound});
  }
  w.close();

  const CsvTable q = read_csv(in / "ratios.csv");
  CsvWriter rw = out.open("plot_ratio.csv", {"k", "sigma_w2", "sigma_b2", "depth", "mean_ratio", "std_ratio", "bound_factor"});
  for (const auto& r : q.rows)
    rw.row({r[q.column("k")], r[q.column("sigma_w2")], r[q.column("sigma_b2")], r[q.column("depth")],
            r[q.column("mean_ratio")], r[q.column("std_ratio")], r[q.column("bound_factor")]});
  rw.close();
}

void transitions(const fs::path& in, Out& out) {
  const CsvTable t = read_csv(in / "transitions.csv");
  const std::size_t ck = t.column("k"), csw = t.column("sigma_w2"), csb = t.column("sigma_b2"), clen = t.column("length"),
                    ctr = t.column("transitions"), cl = t.column("layer");
  CsvWriter pts = out.open("plot_transitions.csv", {"series", "layer", "length", "transitions"});
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by_series;
  std::vector<std::string> order;
  for (const auto& r : t.rows) {
    const std::string s = series_label(r[ck], r[csw], r[csb]);
    pts.row({s, r[cl], r[clen], r[ctr]});
    if (!by_series.count(s)) order.push_back(s);
    by_series[s].first.push_back(num(r[clen]));
    by_series[s].second.push_back(num(r[ctr]));
  }
  pts.close();
  CsvWriter fit = out.open("plot_transitions_fit.csv", {"series", "x", "y", "slope", "intercept", "r_squared"});
  for (const auto& s : order) {
    const auto& [xs, ys] = by_series[s];
    const LinearFit f = fit_line(xs, ys);
    for (double x : {*std::min_element(xs.begin(), xs.end()), *std::max_element(xs.begin(), xs.end())})
      fit.row({s, x, f.slope * x + f.intercept, f.slope, f.intercept, f.r_squared});
  }
  fit.close();
}

void regions(const fs::path& in, Out& out) {
  std::ifstream f(in / "regions.jsonl");
  if (!f) throw IoError("cannot read regions.jsonl");
  std::map<std::size_t, std::vector<double>> by_depth;
  std::map<std::size_t, std::size_t> expected;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    const auto layers = j.at("layers").get<std::size_t>();
    by_depth[layers].push_back(j.at("regions").get<double>());
    if (j.contains("expected")) expected[layers] = j.at("expected").get<std::size_t>();
  }
  CsvWriter w = out.open("plot_regions.csv", {"layers", "replicas", "mean_regions", "min_regions", "max_regions", "expected"});
  for (const auto& [layers, counts] : by_depth)
    w.row({layers, counts.size(), mean(counts), *std::min_element(counts.begin(), counts.end()),
           *std::max_element(counts.begin(), counts.end()), expected.count(layers) ? Cell(expected[layers]) : Cell()});
  w.close();
}

void boundaries(const fs::path& in, Out& out) {
  const CsvTable b = read_csv(in / "boundaries.csv");
  const std::size_t cl = b.column("layer");
  std::size_t max_layer = 0;
  for (const auto& r : b.rows) max_layer = std::max(max_layer, static_cast<std::size_t>(num(r[cl])));
  // Panel p shows layers 1..p; the newest layer is drawn highlighted.
  CsvWriter w = out.open("plot_boundaries.csv", {"panel", "layer", "neuron", "polyline", "point", "x", "y", "highlight"});
  for (std::size_t p = 1; p <= max_layer; ++p)
    for (const auto& r : b.rows) {
      const auto layer = static_cast<std::size_t>(num(r[cl]));
      if (layer > p) continue;
      w.row({p, r[cl], r[b.column("neuron")], r[b.column("polyline")], r[b.column("point")], r[b.column("x")],
             r[b.column("y")], layer == p});
    }
  w.close();
}

void dichotomies(const fs::path& in, Out& out) {
  const CsvTable d = read_csv(in / "dichotomies.csv");
  using Key = std::tuple<std::string, std::size_t, std::size_t, std::size_t>;
  std::map<Key, std::vector<double>> groups;
  std::vector<Key> order;
  for (const auto& r : d.rows) {
    const Key k{r[d.column("mode")], static_cast<std::size_t>(num(r[d.column("layer")])),
                static_cast<std::size_t>(num(r[d.column("s")])), static_cast<std::size_t>(num(r[d.column("samples")]))};
    if (!groups.count(k)) order.push_back(k);
    groups[k].push_back(num(r[d.column("distinct")]));
  }
  CsvWriter w =
      out.open("plot_dichotomies.csv", {"mode", "layer", "s", "samples", "trials", "mean_distinct", "std_distinct"});
  for (const auto& k : order) {
    const auto& v = groups[k];
    w.row({std::get<0>(k), std::get<1>(k), std::get<2>(k), std::get<3>(k), v.size(), mean(v), stddev(v)});
  }
  w.close();
}

void train_traj(const fs::path& in, Out& out) {
  const CsvTable t = read_csv(in / "run.csv");
  const std::size_t cs = t.column("step"), csp = t.column("split"), ca = t.column("accuracy"), clo = t.column("loss"),
                    cl = t.column("layer"), cp = t.column("probe"), clen = t.column("length");
  double last = 0.0;
  for (const auto& r : t.rows) last = std::max(last, num(r[cs]));
  // progress in [0, 1] drives the start-to-end colour gradient.
  CsvWriter p = out.open("plot_train_traj.csv", {"probe", "step", "progress", "layer", "length"});
  CsvWriter a = out.open("plot_accuracy.csv", {"step", "split", "accuracy", "loss"});
  for (const auto& r : t.rows) {
    const double progress = last > 0.0 ? num(r[cs]) / last : 0.0;
    if (r[csp].empty())
      p.row({r[cp], r[cs], progress, r[cl], r[clen]});
    else
      a.row({r[cs], r[csp], r[ca], r[clo]});
  }
  p.close();
  a.close();
}

void train_freeze(const fs::path& in, const nlohmann::ordered_json& manifest, Out& out) {
  CsvWriter w = out.open("plot_freeze.csv", {"trained_layer", "step", "split", "accuracy", "loss"});
  const CsvTable base = read_csv(in / "baseline.csv");
  for (const auto& r : base.rows) w.row({0, 0, r[base.column("split")], r[base.column("accuracy")], r[base.column("loss")]});
  for (const auto& run : manifest.at("runs")) {
    const CsvTable t = read_csv(in / run.at("file").get<std::string>());
    for (const auto& r : t.rows) {
      if (r[t.column("split")].empty()) continue;
      w.row({run.at("layer").get<std::size_t>(), r[t.column("step")], r[t.column("split")], r[t.column("accuracy")],
             r[t.column("loss")]});
    }
  }
  w.close();
}

}  // namespace

RunResult run_plot_data(const fs::path& in, const fs::path& out_dir, const RunOptions& options) {
  const nlohmann::ordered_json source = read_manifest(in);
  const std::string kind = source.value("kind", "");
  if (!parse_kind(kind)) throw IoError("plot-data: unsupported experiment kind '" + kind + "' in " + in.string());
  if (fs::exists(out_dir) && fs::equivalent(in, out_dir)) throw IoError("plot-data: --out must differ from --in");
  prepare_output_dir(out_dir, options.overwrite);

  RunResult result;
  RunManifest& m = result.manifest;
  m.config = {{"kind", "plot-data"}, {"source", in.string()}, {"source_kind", kind},
              {"source_manifest_sha256", sha256_file(in / "manifest.json")}};
  m.version = std::string(kToolkitVersion);
  m.prng = std::string(Rng::kAlgorithmId);
  m.started_at = utc_timestamp();
  Out out{out_dir, m};
  switch (*parse_kind(kind)) {
    case ExperimentKind::TrajGrowth: growth(in, out); break;
    case ExperimentKind::Transitions: transitions(in, out); break;
    case ExperimentKind::Regions: regions(in, out); break;
    case ExperimentKind::Boundaries: boundaries(in, out); break;
    case ExperimentKind::Dichotomies: dichotomies(in, out); break;
    case ExperimentKind::TrainTraj: train_traj(in, out); break;
    case ExperimentKind::TrainFreeze: train_freeze(in, source, out); break;
  }
  if (options.log) *options.log << "[plot-data] " << m.files.size() << " series files from " << kind << std::endl;
  m.finished_at = utc_timestamp();
  m.write(out_dir);
  return result;
}

}  // namespace netexpr::cli

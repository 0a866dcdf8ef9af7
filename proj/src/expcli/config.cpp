#include "netexpr/expcli/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

namespace netexpr::cli {

namespace {

using Ints = std::vector<std::int64_t>;
using Reals = std::vector<double>;

const std::vector<std::pair<ExperimentKind, std::string_view>> kNames = {
    {ExperimentKind::TrajGrowth, "traj-growth"},   {ExperimentKind::Transitions, "transitions"},
    {ExperimentKind::Regions, "regions"},          {ExperimentKind::Boundaries, "boundaries"},
    {ExperimentKind::Dichotomies, "dichotomies"},  {ExperimentKind::TrainTraj, "train-traj"},
    {ExperimentKind::TrainFreeze, "train-freeze"},
};

const std::set<std::string> kGlobalKeys = {"seed", "threads", "out"};

KeySpec key(std::string name, ValueType type, std::optional<Value> def, std::string help,
            std::optional<double> min = std::nullopt, bool exclusive = false, std::vector<std::string> choices = {}) {
  return KeySpec{std::move(name), type, std::move(def), std::move(help), min, exclusive, std::move(choices)};
}

KeySpec activation_key(const char* def) {
  return key("activation", ValueType::Text, std::string(def), "hidden nonlinearity", std::nullopt, false,
             {"hard-tanh", "relu"});
}

std::vector<KeySpec> refine_keys(double rel_tol) {
  return {
      key("rel_tol", ValueType::Real, rel_tol, "relative length change accepted between doublings", 0.0, true),
      key("initial_samples", ValueType::Int, std::int64_t{1024}, "points on the first discretization", 2.0),
      key("max_samples", ValueType::Int, std::int64_t{1} << 20, "refinement cap", 2.0),
  };
}

std::vector<KeySpec> training_keys(std::int64_t depth, bool probes) {
  return {
      key("dataset", ValueType::Text, std::string("mnist"), "dataset name", std::nullopt, false, {"mnist", "cifar10"}),
      key("data_dir", ValueType::Text, std::string(""),
          "dataset directory; empty = $NETEXPR_DATA_DIR, then ./data"),
      key("depth", ValueType::Int, depth, "hidden layers", 1.0),
      key("width", ValueType::Int, std::int64_t{100}, "hidden width", 1.0),
      key("sigma_w2", ValueType::Real, 3.0, "weight variance sigma_w^2", 0.0, true),
      key("sigma_b2", ValueType::Real, 0.01, "bias variance sigma_b^2", 0.0),
      activation_key("hard-tanh"),
      key("learning_rate", ValueType::Real, 0.05, "SGD step size", 0.0, true),
      key("batch_size", ValueType::Int, std::int64_t{64}, "minibatch size", 1.0),
      key("steps", ValueType::Int, std::int64_t{3000}, "SGD steps", 1.0),
      key("checkpoint_every", ValueType::Int, std::int64_t{300}, "steps between checkpoints", 1.0),
      key("train_subset", ValueType::Int, std::int64_t{10000}, "first N training examples; 0 = all", 0.0),
      key("test_subset", ValueType::Int, std::int64_t{0}, "first N test examples; 0 = all", 0.0),
      key("output_init", ValueType::Text, std::string("random"), "readout initialization", std::nullopt, false,
          {"random", "zero"}),
      key("probes", ValueType::Bool, probes, "record trajectory probes at checkpoints"),
      key("probe_rel_tol", ValueType::Real, 1e-3, "probe length tolerance", 0.0, true),
      key("probe_initial_samples", ValueType::Int, std::int64_t{1024}, "probe first discretization", 2.0),
      key("probe_max_samples", ValueType::Int, std::int64_t{1} << 18, "probe refinement cap", 2.0),
  };
}

std::vector<KeySpec> build_schema(ExperimentKind kind) {
  std::vector<KeySpec> s;
  auto add = [&](std::vector<KeySpec> more) { s.insert(s.end(), more.begin(), more.end()); };
  const Reals unit_window{-1.0, 1.0, -1.0, 1.0};
  switch (kind) {
    case ExperimentKind::TrajGrowth:
      add({key("k", ValueType::IntList, std::nullopt, "hidden widths to sweep", 1.0),
           key("sigma_w2", ValueType::RealList, std::nullopt, "weight variances to sweep", 0.0, true),
           key("sigma_b2", ValueType::RealList, Reals{1.0}, "bias variances to sweep", 0.0),
           key("depth", ValueType::IntList, std::nullopt, "depths to sweep", 1.0),
           key("replicas", ValueType::Int, std::int64_t{50}, "networks per grid cell", 1.0),
           key("input_dim", ValueType::Int, std::int64_t{32}, "input dimension", 2.0), activation_key("hard-tanh")});
      add(refine_keys(1e-3));
      add({key("ratio_from", ValueType::Int, std::int64_t{3}, "first layer averaged in ratios.csv", 1.0)});
      break;
    case ExperimentKind::Transitions:
      add({key("k", ValueType::IntList, Ints{8, 64}, "hidden widths to sweep", 1.0),
           key("sigma_w2", ValueType::RealList, Reals{2.0, 8.0}, "weight variances to sweep", 0.0, true),
           key("sigma_b2", ValueType::RealList, Reals{0.0}, "bias variances to sweep", 0.0),
           key("depth", ValueType::Int, std::int64_t{10}, "hidden layers", 1.0),
           key("replicas", ValueType::Int, std::int64_t{20}, "networks per grid cell", 1.0),
           key("input_dim", ValueType::Int, std::int64_t{32}, "input dimension", 2.0), activation_key("hard-tanh"),
           key("mode", ValueType::Text, std::string("sign"), "sign: h crosses 0; region: any state change",
               std::nullopt, false, {"sign", "region"})});
      add(refine_keys(1e-2));
      break;
    case ExperimentKind::Regions:
      add({key("widths", ValueType::IntList, Ints{4, 4, 4}, "hidden widths, first layer first", 1.0),
           key("arrangement", ValueType::Bool, true,
               "first layer = lines in general position crossing inside the window"),
           key("sigma_w2", ValueType::Real, 2.0, "weight variance of sampled layers", 0.0, true),
           key("sigma_b2", ValueType::Real, 0.1, "bias variance of sampled layers", 0.0), activation_key("relu"),
           key("resolution", ValueType::Int, std::int64_t{512}, "grid cells per side", 2.0),
           key("replicas", ValueType::Int, std::int64_t{100}, "networks", 1.0),
           key("grid_resolution", ValueType::Int, std::int64_t{256}, "resolution of regions_grid.csv; 0 = none", 0.0),
           key("window", ValueType::RealList, unit_window, "u_min, u_max, v_min, v_max")});
      break;
    case ExperimentKind::Boundaries:
      add({key("widths", ValueType::IntList, Ints{8, 8, 8}, "hidden widths", 1.0),
           key("sigma_w2", ValueType::Real, 2.0, "weight variance", 0.0, true),
           key("sigma_b2", ValueType::Real, 0.1, "bias variance", 0.0), activation_key("relu"),
           key("resolution", ValueType::Int, std::int64_t{512}, "grid cells per side", 2.0),
           key("window", ValueType::RealList, unit_window, "u_min, u_max, v_min, v_max")});
      break;
    case ExperimentKind::Dichotomies:
      add({key("s", ValueType::IntList, Ints{8}, "input set sizes", 1.0),
           key("depth", ValueType::Int, std::int64_t{6}, "hidden layers", 1.0),
           key("k", ValueType::Int, std::int64_t{16}, "hidden width", 1.0),
           key("sigma_w2", ValueType::Real, 2.0, "weight variance", 0.0, true),
           key("sigma_b2", ValueType::Real, 0.0, "bias variance", 0.0),
           key("input_dim", ValueType::Int, std::int64_t{16}, "input dimension", 1.0), activation_key("hard-tanh"),
           key("samples", ValueType::IntList, Ints{10000}, "weight draws per count", 1.0),
           key("trials", ValueType::Int, std::int64_t{50}, "independent input sets and base networks", 1.0),
           key("layers", ValueType::IntList, Ints{}, "layers to resample; empty = every hidden layer", 1.0),
           key("all_weights", ValueType::Bool, true, "also resample every layer at once")});
      break;
    case ExperimentKind::TrainTraj:
      add(training_keys(6, true));
      break;
    case ExperimentKind::TrainFreeze:
      add(training_keys(5, false));
      add({key("layers", ValueType::IntList, Ints{}, "layers trained one at a time; empty = every hidden layer", 1.0)});
      break;
  }
  return s;
}

std::string describe(ValueType t) {
  switch (t) {
    case ValueType::Int: return "an integer";
    case ValueType::Real: return "a number";
    case ValueType::Text: return "a string";
    case ValueType::Bool: return "true or false";
    case ValueType::IntList: return "an integer or list of integers";
    case ValueType::RealList: return "a number or list of numbers";
  }
  return "?";
}

template <typename T>
T scalar_as(const YAML::Node& node, const std::string& name, ValueType type) {
  if (!node.IsScalar()) throw ConfigError("key '" + name + "': expected " + describe(type));
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError("key '" + name + "': '" + node.Scalar() + "' is not " + describe(type));
  }
}

template <typename T>
std::vector<T> list_as(const YAML::Node& node, const std::string& name, ValueType type) {
  std::vector<T> out;
  if (node.IsScalar()) {
    out.push_back(scalar_as<T>(node, name, type));
  } else if (node.IsSequence()) {
    for (const auto& item : node) out.push_back(scalar_as<T>(item, name, type));
  } else {
    throw ConfigError("key '" + name + "': expected " + describe(type));
  }
  return out;
}

Value convert(const KeySpec& spec, const YAML::Node& node) {
  if (!node || node.IsNull()) throw ConfigError("key '" + spec.name + "': missing value");
  switch (spec.type) {
    case ValueType::Int: return scalar_as<std::int64_t>(node, spec.name, spec.type);
    case ValueType::Real: return scalar_as<double>(node, spec.name, spec.type);
    case ValueType::Text: return scalar_as<std::string>(node, spec.name, spec.type);
    case ValueType::Bool: return scalar_as<bool>(node, spec.name, spec.type);
    case ValueType::IntList: return list_as<std::int64_t>(node, spec.name, spec.type);
    case ValueType::RealList: return list_as<double>(node, spec.name, spec.type);
  }
  throw ConfigError("key '" + spec.name + "': unsupported type");
}

void check(const KeySpec& spec, const Value& value) {
  auto check_number = [&](double x) {
    if (!std::isfinite(x)) throw ConfigError("key '" + spec.name + "': value must be finite");
    if (spec.min) {
      const bool bad = spec.min_exclusive ? !(x > *spec.min) : !(x >= *spec.min);
      if (bad) {
        std::ostringstream msg;
        msg << "key '" << spec.name << "': value " << x << " must be " << (spec.min_exclusive ? "> " : ">= ") << *spec.min;
        throw ConfigError(msg.str());
      }
    }
  };
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, std::int64_t> || std::is_same_v<T, double>) {
          check_number(static_cast<double>(v));
        } else if constexpr (std::is_same_v<T, Ints> || std::is_same_v<T, Reals>) {
          for (auto x : v) check_number(static_cast<double>(x));
        } else if constexpr (std::is_same_v<T, std::string>) {
          if (!spec.choices.empty() && std::find(spec.choices.begin(), spec.choices.end(), v) == spec.choices.end()) {
            std::string all;
            for (const auto& c : spec.choices) all += (all.empty() ? "" : ", ") + c;
            throw ConfigError("key '" + spec.name + "': '" + v + "' is not one of " + all);
          }
        }
      },
      value);
}

// "4,16" is accepted as shorthand for "[4,16]" on the command line.
YAML::Node parse_override(const std::string& name, const std::string& text) {
  std::string t = text;
  if (t.find(',') != std::string::npos && t.find('[') == std::string::npos) t = "[" + t + "]";
  try {
    return YAML::Load(t);
  } catch (const YAML::Exception& e) {
    throw ConfigError("key '" + name + "': cannot parse '" + text + "'");
  }
}

template <typename T>
const T& get_as(const ExperimentConfig& c, const std::string& key) {
  const auto it = c.values.find(key);
  if (it == c.values.end()) throw ConfigError("internal: key '" + key + "' not in " + std::string(to_string(c.kind)));
  const T* v = std::get_if<T>(&it->second);
  if (!v) throw ConfigError("internal: key '" + key + "' has a different type");
  return *v;
}

std::size_t to_size(std::int64_t v, const std::string& key) {
  if (v < 0) throw ConfigError("key '" + key + "': must be non-negative");
  return static_cast<std::size_t>(v);
}

void check_conflicts(const ExperimentConfig& c) {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  switch (c.kind) {
    case ExperimentKind::TrajGrowth:
    case ExperimentKind::Transitions:
      if (c.get_int("max_samples") < c.get_int("initial_samples"))
        fail("key 'max_samples': must be >= initial_samples");
      if (c.get_ints("k").empty()) fail("key 'k': list must not be empty");
      for (const auto& k : {"sigma_w2", "sigma_b2"})
        if (c.get_reals(k).empty()) fail(std::string("key '") + k + "': list must not be empty");
      if (c.kind == ExperimentKind::TrajGrowth) {
        if (c.get_ints("depth").empty()) fail("key 'depth': list must not be empty");
        for (auto d : c.get_ints("depth"))
          if (c.get_int("ratio_from") > d) fail("key 'ratio_from': exceeds depth " + std::to_string(d));
      }
      break;
    case ExperimentKind::Regions:
      if (c.get_bool("arrangement") && c.get_text("activation") != "relu")
        fail("key 'activation': arrangement networks are ReLU; set arrangement: false for hard-tanh");
      [[fallthrough]];
    case ExperimentKind::Boundaries: {
      if (c.get_ints("widths").empty()) fail("key 'widths': list must not be empty");
      const auto w = c.get_reals("window");
      if (w.size() != 4 || !(w[1] > w[0]) || !(w[3] > w[2]))
        fail("key 'window': expected [u_min, u_max, v_min, v_max] with u_max > u_min and v_max > v_min");
      break;
    }
    case ExperimentKind::Dichotomies: {
      for (auto l : c.get_ints("layers"))
        if (l > c.get_int("depth")) fail("key 'layers': layer " + std::to_string(l) + " exceeds depth");
      if (c.get_ints("layers").empty() && !c.get_bool("all_weights") && c.get_int("depth") < 1)
        fail("key 'layers': nothing to sweep");
      if (c.get_ints("s").empty() || c.get_ints("samples").empty()) fail("key 's'/'samples': lists must not be empty");
      break;
    }
    case ExperimentKind::TrainTraj:
    case ExperimentKind::TrainFreeze:
      if (c.get_int("checkpoint_every") > c.get_int("steps")) fail("key 'checkpoint_every': must be <= steps");
      if (c.get_int("probe_max_samples") < c.get_int("probe_initial_samples"))
        fail("key 'probe_max_samples': must be >= probe_initial_samples");
      if (c.kind == ExperimentKind::TrainFreeze)
        for (auto l : c.get_ints("layers"))
          if (l > c.get_int("depth") + 1) fail("key 'layers': layer " + std::to_string(l) + " exceeds depth + 1");
      break;
  }
}

void apply_global(ExperimentConfig& c, const std::string& name, const YAML::Node& node) {
  if (!node || node.IsNull()) throw ConfigError("key '" + name + "': missing value");
  if (name == "seed") {
    c.seed = scalar_as<std::uint64_t>(node, name, ValueType::Int);
  } else if (name == "threads") {
    c.threads = scalar_as<unsigned>(node, name, ValueType::Int);
    if (c.threads == 0) throw ConfigError("key 'threads': must be >= 1");
  } else {
    c.out = scalar_as<std::string>(node, name, ValueType::Text);
  }
}

}  // namespace

std::string_view to_string(ExperimentKind kind) {
  for (const auto& [k, name] : kNames)
    if (k == kind) return name;
  return "?";
}

std::optional<ExperimentKind> parse_kind(std::string_view name) {
  for (const auto& [k, n] : kNames)
    if (n == name) return k;
  return std::nullopt;
}

const std::vector<ExperimentKind>& all_kinds() {
  static const std::vector<ExperimentKind> kinds = [] {
    std::vector<ExperimentKind> v;
    for (const auto& [k, name] : kNames) v.push_back(k);
    return v;
  }();
  return kinds;
}

const std::vector<KeySpec>& schema(ExperimentKind kind) {
  static const std::map<ExperimentKind, std::vector<KeySpec>> table = [] {
    std::map<ExperimentKind, std::vector<KeySpec>> t;
    for (const auto& [k, name] : kNames) t[k] = build_schema(k);
    return t;
  }();
  return table.at(kind);
}

std::string flag_name(const std::string& key) {
  std::string f = key;
  std::replace(f.begin(), f.end(), '_', '-');
  return f;
}

ExperimentConfig build_config_from_text(ExperimentKind kind, std::string_view yaml_text, const Overrides& overrides) {
  ExperimentConfig c;
  c.kind = kind;
  const auto& keys = schema(kind);
  auto find_spec = [&](const std::string& name) -> const KeySpec* {
    for (const auto& k : keys)
      if (k.name == name) return &k;
    return nullptr;
  };

  std::map<std::string, YAML::Node> given;
  YAML::Node root;
  try {
    root = YAML::Load(std::string(yaml_text));
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config: malformed YAML: ") + e.what());
  }
  if (root && !root.IsNull()) {
    if (!root.IsMap()) throw ConfigError("config: expected a flat mapping of key: value pairs");
    for (const auto& entry : root) {
      const auto name = entry.first.as<std::string>();
      if (name == "kind") {
        const auto declared = entry.second.as<std::string>();
        if (parse_kind(declared) != kind)
          throw ConfigError("key 'kind': file declares '" + declared + "' but the subcommand is '" +
                            std::string(to_string(kind)) + "'");
        continue;
      }
      if (!find_spec(name) && !kGlobalKeys.count(name))
        throw ConfigError("unknown key '" + name + "' for " + std::string(to_string(kind)));
      if (entry.second.IsMap()) throw ConfigError("key '" + name + "': nested mappings are not supported");
      given[name] = entry.second;
    }
  }
  for (const auto& [name, text] : overrides) {
    if (!find_spec(name) && !kGlobalKeys.count(name))
      throw ConfigError("unknown key '" + name + "' for " + std::string(to_string(kind)));
    given[name] = parse_override(name, text);
  }

  for (const auto& [name, node] : given)
    if (kGlobalKeys.count(name)) apply_global(c, name, node);
  for (const auto& spec : keys) {
    const auto it = given.find(spec.name);
    Value v;
    if (it != given.end()) {
      v = convert(spec, it->second);
    } else if (spec.default_value) {
      v = *spec.default_value;
    } else {
      throw ConfigError("missing required key '" + spec.name + "' for " + std::string(to_string(kind)));
    }
    check(spec, v);
    c.values[spec.name] = std::move(v);
  }

  if (c.values.count("data_dir") && std::get<std::string>(c.values["data_dir"]).empty()) {
    const char* env = std::getenv("NETEXPR_DATA_DIR");
    c.values["data_dir"] = std::string(env && *env ? env : "data");
  }
  check_conflicts(c);
  return c;
}

ExperimentConfig build_config(ExperimentKind kind, const std::optional<std::filesystem::path>& file,
                              const Overrides& overrides) {
  std::string text;
  if (file) {
    std::ifstream in(*file);
    if (!in) throw ConfigError("config: cannot read " + file->string());
    std::ostringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  return build_config_from_text(kind, text, overrides);
}

std::int64_t ExperimentConfig::get_int(const std::string& k) const { return get_as<std::int64_t>(*this, k); }
std::size_t ExperimentConfig::get_size(const std::string& k) const { return to_size(get_int(k), k); }
double ExperimentConfig::get_real(const std::string& k) const { return get_as<double>(*this, k); }
const std::string& ExperimentConfig::get_text(const std::string& k) const { return get_as<std::string>(*this, k); }
bool ExperimentConfig::get_bool(const std::string& k) const { return get_as<bool>(*this, k); }
std::vector<std::int64_t> ExperimentConfig::get_ints(const std::string& k) const { return get_as<Ints>(*this, k); }
std::vector<double> ExperimentConfig::get_reals(const std::string& k) const { return get_as<Reals>(*this, k); }

std::vector<std::size_t> ExperimentConfig::get_sizes(const std::string& k) const {
  std::vector<std::size_t> out;
  for (auto v : get_ints(k)) out.push_back(to_size(v, k));
  return out;
}

nlohmann::ordered_json ExperimentConfig::to_json() const {
  nlohmann::ordered_json j;
  j["kind"] = std::string(to_string(kind));
  j["seed"] = seed;
  j["threads"] = threads;
  for (const auto& spec : schema(kind)) std::visit([&](const auto& v) { j[spec.name] = v; }, values.at(spec.name));
  return j;
}

}  // namespace netexpr::cli

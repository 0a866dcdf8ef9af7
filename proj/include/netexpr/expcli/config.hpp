#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace netexpr::cli {

enum class ExperimentKind { TrajGrowth, Transitions, Regions, Boundaries, Dichotomies, TrainTraj, TrainFreeze };

std::string_view to_string(ExperimentKind kind);
std::optional<ExperimentKind> parse_kind(std::string_view name);
const std::vector<ExperimentKind>& all_kinds();

// Schema violations; the message names the offending key.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

enum class ValueType { Int, Real, Text, Bool, IntList, RealList };

using Value = std::variant<std::int64_t, double, std::string, bool, std::vector<std::int64_t>, std::vector<double>>;

struct KeySpec {
  std::string name;  // snake_case in files; --kebab-case as a flag
  ValueType type;
  std::optional<Value> default_value;  // nullopt = required
  std::string help;
  // Optional range/choice checks.
  std::optional<double> min;
  bool min_exclusive = false;
  std::vector<std::string> choices;
};

// Keys accepted for a kind, in documentation order. The global keys seed,
// threads and out are accepted by every kind and are not listed here.
const std::vector<KeySpec>& schema(ExperimentKind kind);

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::TrajGrowth;
  std::map<std::string, Value> values;  // every schema key, defaults filled
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::filesystem::path out;

  std::int64_t get_int(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  double get_real(const std::string& key) const;
  const std::string& get_text(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<std::int64_t> get_ints(const std::string& key) const;
  std::vector<std::size_t> get_sizes(const std::string& key) const;
  std::vector<double> get_reals(const std::string& key) const;

  // Effective configuration, including the global keys.
  nlohmann::ordered_json to_json() const;
};

// Key/value overrides in textual form, e.g. {"sigma_w2", "16"} or
// {"k", "[32, 128]"}; values are parsed like YAML scalars or flow lists.
using Overrides = std::vector<std::pair<std::string, std::string>>;

// Builds the effective configuration: schema defaults, then the YAML file
// (a flat mapping), then overrides. The file may carry `kind`, which must
// match. Throws ConfigError.
ExperimentConfig build_config(ExperimentKind kind, const std::optional<std::filesystem::path>& file,
                              const Overrides& overrides);

// Same, from YAML text (used by tests and by build_config).
ExperimentConfig build_config_from_text(ExperimentKind kind, std::string_view yaml_text, const Overrides& overrides);

std::string flag_name(const std::string& key);  // sigma_w2 -> sigma-w2

}  // namespace netexpr::cli

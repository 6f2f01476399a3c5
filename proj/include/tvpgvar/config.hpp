#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tvpgvar/core.hpp"
#include "tvpgvar/forecast.hpp"
#include "tvpgvar/ingest.hpp"
#include "tvpgvar/io.hpp"
#include "tvpgvar/tvp.hpp"

namespace tvpgvar {

inline constexpr int kConfigSchemaVersion = 1;

enum class WeightProvider { equal, rolling_share, csv };

struct WeightConfig {
  WeightProvider provider = WeightProvider::equal;
  std::string variable;  // rolling_share
  Index window = 12;     // rolling_share
  std::string path;      // csv
};

struct ShockConfig {
  std::string name;
  std::vector<std::string> targets;  // panel column names, e.g. "USA:CPI"
};

struct IRFConfig {
  Index horizon = 6;
  double level = 0.95;
  std::vector<std::string> dates;  // YYYY-MM or YYYY-MM-01
  std::vector<ShockConfig> shocks;
  std::optional<Index> sample_size;  // default: T - 1
};

struct ForecastSettings {
  Index holdout = 6;
  std::vector<ForecasterConfig> forecasters;
};

struct RunConfig {
  std::filesystem::path base_dir;  // relative paths resolve against this
  std::string data_path;
  CsvSchema schema;
  std::vector<std::string> regions;
  std::vector<std::string> variables;
  std::vector<std::string> activities;
  Imputation imputation = Imputation::linear;
  std::map<std::string, Transform> transforms;
  WeightConfig weights;
  double condition_cap = 1e12;
  TVPOptions tvp;
  IRFConfig irf;
  ForecastSettings forecast;
  std::string output_dir = "out";
  bool time_invariant = false;

  std::filesystem::path resolve(const std::string& p) const {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  }
  std::filesystem::path out_dir() const { return resolve(output_dir); }
  PanelLayout layout() const { return {regions, variables, activities}; }
};

namespace detail {

using json = nlohmann::json;

inline void reject_unknown_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ValidationError("config: " + where + " must be an object");
  for (const auto& item : j.items()) {
    if (!allowed.count(item.key())) throw ValidationError("config: unknown key '" + where + "." + item.key() + "'");
  }
}

template <class T>
T get_field(const json& j, const std::string& key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError("config: '" + where + "." + key + "' is missing or has the wrong type");
  }
}

template <class T>
void read_optional(const json& j, const std::string& key, const std::string& where, T& out) {
  if (j.contains(key)) out = get_field<T>(j, key, where);
}

inline void require_unique(const std::vector<std::string>& v, const std::string& what) {
  std::set<std::string> seen;
  for (const auto& s : v) {
    if (s.empty()) throw ValidationError("config: empty name in " + what);
    if (!seen.insert(s).second) throw ValidationError("config: duplicate '" + s + "' in " + what);
  }
}

inline ForecasterConfig parse_forecaster(const json& j, std::size_t i) {
  const std::string where = "forecast.forecasters[" + std::to_string(i) + "]";
  reject_unknown_keys(j,
                      {"kind", "name", "lag_window", "lambda_grid", "grid_size", "grid_ratio", "cv_folds", "pooled",
                       "path"},
                      where);
  ForecasterConfig f;
  f.kind = parse_forecaster_kind(get_field<std::string>(j, "kind", where));
  read_optional(j, "name", where, f.name);
  read_optional(j, "lag_window", where, f.lag_window);
  read_optional(j, "lambda_grid", where, f.lambda_grid);
  read_optional(j, "grid_size", where, f.grid_size);
  read_optional(j, "grid_ratio", where, f.grid_ratio);
  read_optional(j, "cv_folds", where, f.cv_folds);
  read_optional(j, "pooled", where, f.pooled);
  read_optional(j, "path", where, f.external_path);
  if (f.kind == ForecasterKind::external && f.external_path.empty()) {
    throw ValidationError("config: " + where + ": external forecaster needs 'path'");
  }
  return f;
}

}  // namespace detail

// Parses and validates a config document. File references are resolved
// against `base_dir`; existence is checked by check_files().
inline RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir,
                              const std::string& source = "config") {
  using detail::get_field;
  using detail::read_optional;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(source + ": invalid JSON: " + e.what());
  }
  detail::reject_unknown_keys(j,
                              {"schema_version", "data", "regions", "variables", "activities", "imputation",
                               "transforms", "weights", "condition_cap", "tvp", "irf", "forecast", "output_dir"},
                              "config");
  const int version = get_field<int>(j, "schema_version", "config");
  if (version != kConfigSchemaVersion) {
    throw ValidationError("config: unsupported schema_version " + std::to_string(version));
  }

  RunConfig c;
  c.base_dir = base_dir;

  if (!j.contains("data")) throw ValidationError("config: 'data' section is missing");
  const auto& data = j.at("data");
  detail::reject_unknown_keys(data, {"path", "schema"}, "data");
  c.data_path = get_field<std::string>(data, "path", "data");
  if (data.contains("schema")) {
    const auto& s = data.at("schema");
    detail::reject_unknown_keys(s, {"date", "region", "variable", "value"}, "data.schema");
    read_optional(s, "date", "data.schema", c.schema.date);
    read_optional(s, "region", "data.schema", c.schema.region);
    read_optional(s, "variable", "data.schema", c.schema.variable);
    read_optional(s, "value", "data.schema", c.schema.value);
  }

  c.regions = get_field<std::vector<std::string>>(j, "regions", "config");
  c.variables = get_field<std::vector<std::string>>(j, "variables", "config");
  read_optional(j, "activities", "config", c.activities);
  if (c.regions.empty() || c.variables.empty()) throw ValidationError("config: regions and variables must be non-empty");
  detail::require_unique(c.regions, "regions");
  detail::require_unique(c.variables, "variables");
  detail::require_unique(c.activities, "activities");

  if (j.contains("imputation")) c.imputation = parse_imputation(get_field<std::string>(j, "imputation", "config"));
  if (j.contains("transforms")) {
    const auto& t = j.at("transforms");
    if (!t.is_object()) throw ValidationError("config: transforms must be an object");
    for (const auto& item : t.items()) {
      if (std::find(c.variables.begin(), c.variables.end(), item.key()) == c.variables.end() &&
          std::find(c.activities.begin(), c.activities.end(), item.key()) == c.activities.end()) {
        throw ValidationError("config: transform for unknown variable '" + item.key() + "'");
      }
      c.transforms[item.key()] = parse_transform(get_field<std::string>(t, item.key(), "transforms"));
    }
  }

  if (j.contains("weights")) {
    const auto& w = j.at("weights");
    detail::reject_unknown_keys(w, {"provider", "variable", "window", "path"}, "weights");
    const auto provider = get_field<std::string>(w, "provider", "weights");
    if (provider == "equal") {
      c.weights.provider = WeightProvider::equal;
    } else if (provider == "rolling_share") {
      c.weights.provider = WeightProvider::rolling_share;
      c.weights.variable = get_field<std::string>(w, "variable", "weights");
      read_optional(w, "window", "weights", c.weights.window);
      if (c.weights.window < 1) throw ValidationError("config: weights.window must be >= 1");
      if (std::find(c.variables.begin(), c.variables.end(), c.weights.variable) == c.variables.end()) {
        throw ValidationError("config: weights.variable '" + c.weights.variable + "' is not a configured variable");
      }
    } else if (provider == "csv") {
      c.weights.provider = WeightProvider::csv;
      c.weights.path = get_field<std::string>(w, "path", "weights");
    } else {
      throw ValidationError("config: unknown weight provider '" + provider + "'");
    }
  }

  read_optional(j, "condition_cap", "config", c.condition_cap);
  if (!(c.condition_cap > 1.0)) throw ValidationError("config: condition_cap must exceed 1");

  if (j.contains("tvp")) {
    const auto& t = j.at("tvp");
    detail::reject_unknown_keys(t, {"iters", "seed", "sampler", "threads"}, "tvp");
    read_optional(t, "iters", "tvp", c.tvp.iters);
    read_optional(t, "seed", "tvp", c.tvp.seed);
    read_optional(t, "threads", "tvp", c.tvp.threads);
    if (t.contains("sampler")) c.tvp.sampler = parse_state_sampler(get_field<std::string>(t, "sampler", "tvp"));
    if (c.tvp.iters < 1) throw ValidationError("config: tvp.iters must be >= 1");
  }

  if (j.contains("irf")) {
    const auto& r = j.at("irf");
    detail::reject_unknown_keys(r, {"horizon", "level", "dates", "shocks", "sample_size"}, "irf");
    read_optional(r, "horizon", "irf", c.irf.horizon);
    read_optional(r, "level", "irf", c.irf.level);
    read_optional(r, "dates", "irf", c.irf.dates);
    if (r.contains("sample_size")) c.irf.sample_size = get_field<Index>(r, "sample_size", "irf");
    if (r.contains("shocks")) {
      const auto& shocks = r.at("shocks");
      if (!shocks.is_array()) throw ValidationError("config: irf.shocks must be an array");
      for (std::size_t i = 0; i < shocks.size(); ++i) {
        const std::string where = "irf.shocks[" + std::to_string(i) + "]";
        detail::reject_unknown_keys(shocks[i], {"name", "targets"}, where);
        ShockConfig s;
        s.name = get_field<std::string>(shocks[i], "name", where);
        s.targets = get_field<std::vector<std::string>>(shocks[i], "targets", where);
        if (s.targets.empty()) throw ValidationError("config: " + where + " has no targets");
        c.irf.shocks.push_back(std::move(s));
      }
    }
    std::vector<std::string> names;
    for (const auto& s : c.irf.shocks) names.push_back(s.name);
    detail::require_unique(names, "irf.shocks names");
    for (const auto& d : c.irf.dates) {
      if (!parse_year_month(d, true)) throw ValidationError("config: malformed irf date '" + d + "'");
    }
    if (c.irf.horizon < 0) throw ValidationError("config: irf.horizon must be >= 0");
    if (!(c.irf.level > 0.0 && c.irf.level < 1.0)) throw ValidationError("config: irf.level must lie in (0, 1)");
  }

  if (j.contains("forecast")) {
    const auto& f = j.at("forecast");
    detail::reject_unknown_keys(f, {"holdout", "forecasters"}, "forecast");
    read_optional(f, "holdout", "forecast", c.forecast.holdout);
    if (c.forecast.holdout < 1) throw ValidationError("config: forecast.holdout must be >= 1");
    if (f.contains("forecasters")) {
      const auto& list = f.at("forecasters");
      if (!list.is_array()) throw ValidationError("config: forecast.forecasters must be an array");
      for (std::size_t i = 0; i < list.size(); ++i) {
        auto fc = detail::parse_forecaster(list[i], i);
        fc.horizon = c.forecast.holdout;
        validate_forecaster(fc);
        c.forecast.forecasters.push_back(std::move(fc));
      }
    }
    std::vector<std::string> labels;
    for (const auto& fc : c.forecast.forecasters) labels.push_back(fc.label());
    detail::require_unique(labels, "forecaster names");
  }

  read_optional(j, "output_dir", "config", c.output_dir);
  return c;
}

inline RunConfig load_config(const std::string& path) {
  const auto base = std::filesystem::path(path).parent_path();
  return parse_config(io::read_file(path), base, path);
}

inline void check_files(const RunConfig& c) {
  auto need = [&](const std::string& p, const std::string& what) {
    const auto full = c.resolve(p);
    if (!std::filesystem::is_regular_file(full)) {
      throw ValidationError(what + " not found: " + full.string());
    }
  };
  need(c.data_path, "data file");
  if (c.weights.provider == WeightProvider::csv) need(c.weights.path, "weight file");
  for (const auto& f : c.forecast.forecasters)
    if (f.kind == ForecasterKind::external) need(f.external_path, "external forecast file");
}

}  // namespace tvpgvar

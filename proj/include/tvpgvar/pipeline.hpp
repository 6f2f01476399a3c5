#pragma once

#include <algorithm>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tvpgvar/config.hpp"
#include "tvpgvar/core.hpp"
#include "tvpgvar/forecast.hpp"
#include "tvpgvar/gvar.hpp"
#include "tvpgvar/ingest.hpp"
#include "tvpgvar/io.hpp"
#include "tvpgvar/irf.hpp"
#include "tvpgvar/tvp.hpp"
#include "tvpgvar/weights.hpp"

// Batch commands. Each reads the artifacts of the previous stage from the
// output directory and writes its own; nothing depends on wall-clock time.
namespace tvpgvar::pipeline {

namespace fs = std::filesystem;

inline fs::path artifact(const RunConfig& c, const std::string& name) { return c.out_dir() / name; }

inline void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw ValidationError("cannot create directory " + p.string() + ": " + ec.message());
}

inline std::string dump_json(const nlohmann::json& j) { return j.dump(2) + "\n"; }

inline TimeSeriesPanel load_ingested_panel(const RunConfig& c) {
  const auto path = artifact(c, "panel.csv");
  if (!fs::is_regular_file(path)) throw ValidationError("missing " + path.string() + " (run ingest first)");
  return read_panel_csv(path.string());
}

inline WeightSequence load_ingested_weights(const RunConfig& c, const TimeSeriesPanel& panel, bool time_invariant) {
  const auto path = artifact(c, "weights.csv");
  if (!fs::is_regular_file(path)) throw ValidationError("missing " + path.string() + " (run ingest first)");
  auto w = parse_weight_csv(io::read_file(path.string()), path.string(), panel);
  validate_weights(w, panel.dims(), panel.periods());
  return time_invariant ? make_time_invariant(w) : w;
}

inline std::vector<std::string> column_names(const TimeSeriesPanel& panel) {
  std::vector<std::string> out;
  for (Index j = 0; j < panel.dims().width(); ++j) out.push_back(panel.column_name(j));
  return out;
}

// --- ingest ----------------------------------------------------------------

inline WeightSequence build_weights(const RunConfig& c, const TimeSeriesPanel& raw) {
  const Dims d = raw.dims();
  switch (c.weights.provider) {
    case WeightProvider::equal:
      return equal_weights(d, raw.periods());
    case WeightProvider::rolling_share:
      return rolling_share_weights(auxiliary_from_panel(raw, c.weights.variable), c.weights.window, d.activities);
    case WeightProvider::csv: {
      const auto path = c.resolve(c.weights.path).string();
      return parse_weight_csv(io::read_file(path), path, raw);
    }
  }
  throw ValidationError("unknown weight provider");
}

struct IngestResult {
  TimeSeriesPanel panel;
  ValidationReport report;
};

// Aligns the raw long CSV, validates it, derives weights from the
// untransformed levels and writes panel.csv, weights.csv and validation.txt.
inline IngestResult cmd_ingest(const RunConfig& c) {
  check_files(c);
  ensure_dir(c.out_dir());
  const auto series = load_panel(c.resolve(c.data_path).string(), c.schema);
  IngestResult res;
  res.panel = align_frequencies(series, c.imputation, c.layout());
  res.report = validate_panel(res.panel);
  const auto report_path = artifact(c, "validation.txt");
  io::write_file(report_path.string(), res.report.str());
  if (!res.report.ok()) throw ValidationError("panel validation failed, see " + report_path.string());

  const auto w = build_weights(c, res.panel);
  validate_weights(w, res.panel.dims(), res.panel.periods());
  io::write_file(artifact(c, "weights.csv").string(), write_weight_csv(w, res.panel));

  for (const auto& [variable, tr] : c.transforms) apply_transform(res.panel, variable, tr);
  io::write_file(artifact(c, "panel.csv").string(), write_panel_csv(res.panel));
  return res;
}

// --- estimate --------------------------------------------------------------

// Constant per-column AR(1) by OLS, repeated over the sample; the
// time-invariant counterpart of a TVP trajectory.
inline Matrix constant_ar1_path(const Vector& y, const std::string& label) {
  const auto fit = fit_var1(Matrix(y), label);
  Matrix path(y.size(), 2);
  path.col(0).setConstant(fit.intercept(0));
  path.col(1).setConstant(fit.f1(0, 0));
  return path;
}

struct EstimateResult {
  StructuralFit fit;
  ParameterPaths paths;
  std::vector<std::string> errors;  // per column, empty when ok
};

inline EstimateResult cmd_estimate(const RunConfig& c) {
  const auto panel = load_ingested_panel(c);
  const auto w = load_ingested_weights(c, panel, c.time_invariant);
  EstimateResult res;
  res.fit = estimate_structural(panel, w);

  nlohmann::json coef;
  coef["time_invariant"] = c.time_invariant;
  coef["columns"] = column_names(panel);
  coef["structural"] = structural_fit_to_json(res.fit);
  const auto last = stack_system(res.fit, w, panel.periods() - 1, {c.condition_cap});
  const auto stab = stability_check(last.f1);
  coef["last_period"] = {{"date", panel.time_index.back().str()},
                         {"spectral_radius", stab.spectral_radius},
                         {"stable", stab.stable},
                         {"condition", last.condition}};
  io::write_file(artifact(c, "coefficients.json").string(), dump_json(coef));

  res.paths.dates = panel.time_index;
  res.errors.assign(static_cast<std::size_t>(panel.dims().width()), "");
  nlohmann::json traj;
  if (c.time_invariant) {
    traj["mode"] = "time_invariant";
    traj["columns"] = nlohmann::json::array();
    for (Index j = 0; j < panel.dims().width(); ++j) {
      const auto name = panel.column_name(j);
      try {
        res.paths.paths.push_back(constant_ar1_path(panel.values.col(j), name));
        res.paths.columns.push_back(name);
        traj["columns"].push_back({{"column", name},
                                   {"b", res.paths.paths.back()(0, 0)},
                                   {"f1", res.paths.paths.back()(0, 1)}});
      } catch (const std::exception& e) {
        res.errors[static_cast<std::size_t>(j)] = e.what();
        traj["columns"].push_back({{"column", name}, {"error", e.what()}});
      }
    }
  } else {
    const auto est = estimate_all(panel, c.tvp);
    const auto names = column_names(panel);
    for (std::size_t j = 0; j < names.size(); ++j) {
      if (const auto& tr = est.trajectories[j]) {
        res.paths.columns.push_back(names[j]);
        res.paths.paths.push_back(tr->theta);
      }
    }
    res.errors = est.errors;
    traj = trajectories_to_json(est, names, c.tvp);
  }
  io::write_file(artifact(c, "trajectories.csv").string(), write_parameter_csv(res.paths));
  io::write_file(artifact(c, "trajectories.json").string(), dump_json(traj));

  std::string failures;
  for (std::size_t j = 0; j < res.errors.size(); ++j) {
    if (!res.errors[j].empty()) failures += panel.column_name(static_cast<Index>(j)) + ": " + res.errors[j] + "\n";
  }
  const auto err_path = artifact(c, "estimate_errors.txt");
  if (fs::exists(err_path)) fs::remove(err_path);
  if (!failures.empty()) {
    io::write_file(err_path.string(), failures);
    throw NumericalError("estimation failed for some equations:\n" + failures);
  }
  return res;
}

// --- irf -------------------------------------------------------------------

struct IRFOutput {
  std::string date;
  std::string shock;
  IRFResult result;
  fs::path json_path;
  fs::path csv_path;
};

inline std::vector<IRFOutput> cmd_irf(const RunConfig& c) {
  const auto panel = load_ingested_panel(c);
  const auto coef_path = artifact(c, "coefficients.json");
  if (!fs::is_regular_file(coef_path)) throw ValidationError("missing " + coef_path.string() + " (run estimate first)");
  nlohmann::json coef;
  try {
    coef = nlohmann::json::parse(io::read_file(coef_path.string()));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(coef_path.string() + ": " + e.what());
  }
  const bool time_invariant = coef.value("time_invariant", false);
  const auto w = load_ingested_weights(c, panel, time_invariant);
  const auto fit = structural_fit_from_json(coef.at("structural"));
  if (!(fit.dims == panel.dims())) throw ValidationError("coefficients.json does not match panel.csv");

  if (c.irf.dates.empty() || c.irf.shocks.empty()) throw ValidationError("irf: no dates or shocks configured");
  std::vector<ShockSpec> shocks;
  for (const auto& s : c.irf.shocks) {
    ShockSpec spec;
    spec.horizon = c.irf.horizon;
    spec.level = c.irf.level;
    for (const auto& t : s.targets) spec.targets.push_back(panel.column_index(t));
    validate_shock(spec, panel.dims().width());
    shocks.push_back(std::move(spec));
  }
  const Index sample = c.irf.sample_size.value_or(panel.periods() - 1);

  ensure_dir(artifact(c, "irf"));
  const auto names = column_names(panel);
  std::vector<IRFOutput> out;
  std::string skipped;
  for (const auto& text : c.irf.dates) {
    const auto date = parse_year_month(text, true);
    const auto row = date ? panel.row_of(*date) : std::nullopt;
    if (!row) {
      throw ValidationError("irf date " + text + " outside sample " + panel.time_index.front().str() + ".." +
                            panel.time_index.back().str());
    }
    StackedSystem system;
    try {
      system = stack_system(fit, w, *row, {c.condition_cap});
    } catch (const SingularSystemError& e) {
      skipped += date->str() + "," + e.what() + "\n";
      continue;
    }
    const auto inputs = estimate_asymptotic_inputs(panel.values, system);
    for (std::size_t s = 0; s < shocks.size(); ++s) {
      IRFOutput o;
      o.date = date->str();
      o.shock = c.irf.shocks[s].name;
      o.result = asymptotic_bands(system, shocks[s], sample, inputs);
      const std::string stem = "irf_" + o.date + "_" + o.shock;
      o.json_path = artifact(c, "irf") / (stem + ".json");
      o.csv_path = artifact(c, "irf") / (stem + ".csv");
      auto j = irf_to_json(o.result, o.date, c.irf.shocks[s].targets);
      j["shock"] = o.shock;
      j["columns"] = names;
      io::write_file(o.json_path.string(), dump_json(j));
      io::write_file(o.csv_path.string(), irf_to_csv(o.result, names));
      out.push_back(std::move(o));
    }
  }
  // Periods whose G0 exceeds the condition cap are listed, not computed.
  const auto skip_path = artifact(c, "irf") / "skipped.csv";
  if (!skipped.empty()) {
    io::write_file(skip_path.string(), "date,reason\n" + skipped);
  } else if (fs::exists(skip_path)) {
    fs::remove(skip_path);
  }
  return out;
}

// --- forecast --------------------------------------------------------------

struct ForecastRun {
  std::vector<ForecastResult> results;
  std::map<std::string, double> pooled;  // method -> pooled MSE
  std::string selected;
  std::vector<YearMonth> future_dates;
};

// Rows `method,series,mse`, then one `method,ALL,<pooled>` row per method.
inline std::string mse_report_csv(const std::vector<ForecastResult>& results, const std::vector<std::string>& names) {
  std::string out = "method,series,mse\n";
  for (const auto& r : results)
    for (const auto& [col, m] : r.mse_per_series)
      out += r.model + "," + names[static_cast<std::size_t>(col)] + "," + io::format_double(m) + "\n";
  for (const auto& r : results)
    out += r.model + ",ALL," + io::format_double(r.pooled_mse.value_or(std::numeric_limits<double>::quiet_NaN())) + "\n";
  return out;
}

inline ParameterForecast external_parameters(const RunConfig& c, const ForecasterConfig& f,
                                             const std::vector<std::string>& names,
                                             const std::vector<YearMonth>& future) {
  const auto path = c.resolve(f.external_path).string();
  const auto pp = parse_parameter_csv(io::read_file(path), path);
  if (pp.dates != future) {
    throw ValidationError(path + ": dates must be the " + std::to_string(future.size()) + " months " +
                          future.front().str() + ".." + future.back().str());
  }
  ParameterForecast out;
  out.paths.resize(names.size());
  out.errors.resize(names.size());
  for (std::size_t j = 0; j < names.size(); ++j) {
    const auto it = std::find(pp.columns.begin(), pp.columns.end(), names[j]);
    if (it == pp.columns.end()) {
      out.errors[j] = "column missing from " + path;
    } else {
      out.paths[j] = pp.paths[static_cast<std::size_t>(it - pp.columns.begin())];
    }
  }
  return out;
}

// Holds out the final `holdout` months, re-estimates the TVP paths on the
// rest, and scores every configured forecaster against the held-out values.
inline ForecastRun cmd_forecast(const RunConfig& c, std::ostream* log = nullptr) {
  const auto panel = load_ingested_panel(c);
  const Index h = c.forecast.holdout;
  const Index T = panel.periods();
  if (c.forecast.forecasters.empty()) throw ValidationError("forecast: no forecasters configured");
  if (T - h < 3) {
    throw ValidationError("forecast: insufficient data for a " + std::to_string(h) + "-month holdout (" +
                          std::to_string(T) + " periods)");
  }
  const auto train = panel.slice(0, T - h);
  const Matrix actual = panel.values.bottomRows(h);
  const auto names = column_names(panel);

  const auto est = estimate_all(train, c.tvp);
  std::vector<Matrix> theta;
  std::string failures;
  for (std::size_t j = 0; j < names.size(); ++j) {
    if (est.trajectories[j]) {
      theta.push_back(est.trajectories[j]->theta);
    } else {
      failures += names[j] + ": " + est.errors[j] + "\n";
    }
  }
  if (!failures.empty()) throw NumericalError("forecast: TVP estimation failed on the training window:\n" + failures);

  const auto dir = artifact(c, "forecast");
  ensure_dir(dir);
  ParameterPaths train_paths{train.time_index, names, theta};
  io::write_file((dir / "train_trajectories.csv").string(), write_parameter_csv(train_paths));

  ForecastRun run;
  run.future_dates.assign(panel.time_index.end() - h, panel.time_index.end());
  const Vector last = train.values.bottomRows(1).transpose();
  std::string avp = "method,date,column,actual,predicted\n";
  std::string errors;
  for (const auto& f : c.forecast.forecasters) {
    ForecastResult r;
    if (f.kind == ForecasterKind::external) {
      r = assemble_forecast(f.label(), last, external_parameters(c, f, names, run.future_dates), actual,
                            static_cast<Index>(run.future_dates.size()));
    } else {
      r = two_stage_forecast(train.values, theta, f, actual);
    }
    ParameterPaths params;
    params.dates = run.future_dates;
    TimeSeriesPanel predicted;
    predicted.layout = panel.layout;
    predicted.time_index = run.future_dates;
    predicted.values = r.variable_paths;
    for (std::size_t j = 0; j < names.size(); ++j) {
      if (r.param_paths[j]) {
        params.columns.push_back(names[j]);
        params.paths.push_back(*r.param_paths[j]);
      } else {
        errors += r.model + "," + names[j] + "," + r.errors[j] + "\n";
      }
    }
    io::write_file((dir / (r.model + "_params.csv")).string(), write_parameter_csv(params));
    io::write_file((dir / (r.model + "_paths.csv")).string(), write_panel_csv(predicted));
    for (Index s = 0; s < h; ++s)
      for (std::size_t j = 0; j < names.size(); ++j)
        avp += r.model + "," + run.future_dates[static_cast<std::size_t>(s)].str() + "," + names[j] + "," +
               io::format_double(actual(s, static_cast<Index>(j))) + "," +
               io::format_double(r.variable_paths(s, static_cast<Index>(j))) + "\n";
    if (r.pooled_mse) run.pooled[r.model] = *r.pooled_mse;
    run.results.push_back(std::move(r));
  }
  io::write_file((dir / "actual_vs_predicted.csv").string(), avp);
  io::write_file((dir / "mse_report.csv").string(), mse_report_csv(run.results, names));
  if (!errors.empty()) io::write_file((dir / "forecast_errors.csv").string(), "method,column,error\n" + errors);
  if (run.pooled.empty()) throw NumericalError("forecast: every forecaster failed, see forecast_errors.csv");
  run.selected = select_model(run.pooled);
  io::write_file((dir / "selected_model.txt").string(), run.selected + "\n");
  if (log) *log << "selected model: " << run.selected << "\n";
  return run;
}

// --- report ----------------------------------------------------------------

// Plain-text digest of whatever artifacts exist in the output directory.
inline std::string cmd_report(const RunConfig& c) {
  ensure_dir(c.out_dir());
  std::string out = "tvpgvar run summary\n===================\n\n";
  const auto panel_path = artifact(c, "panel.csv");
  if (fs::is_regular_file(panel_path)) {
    const auto panel = read_panel_csv(panel_path.string());
    out += "panel: " + std::to_string(panel.periods()) + " months (" + panel.time_index.front().str() + ".." +
           panel.time_index.back().str() + "), " + std::to_string(panel.dims().width()) + " columns\n";
  } else {
    out += "panel: not found\n";
  }
  const auto coef_path = artifact(c, "coefficients.json");
  if (fs::is_regular_file(coef_path)) {
    const auto coef = nlohmann::json::parse(io::read_file(coef_path.string()));
    const auto& lp = coef.at("last_period");
    out += "structural fit: time_invariant=" + std::string(coef.value("time_invariant", false) ? "true" : "false") +
           ", spectral radius at " + lp.at("date").get<std::string>() + " = " +
           io::format_double(lp.at("spectral_radius").get<double>()) + "\n";
  }
  const auto irf_dir = artifact(c, "irf");
  if (fs::is_directory(irf_dir)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(irf_dir))
      if (e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    out += "\nimpulse responses:\n";
    for (const auto& f : files) {
      const auto j = nlohmann::json::parse(io::read_file(f.string()));
      out += "  " + f.filename().string() + ": stable=" + (j.at("stable").get<bool>() ? "true" : "false") +
             ", spectral radius " + io::format_double(j.at("spectral_radius").get<double>()) + "\n";
    }
  }
  const auto mse_path = artifact(c, "forecast") / "mse_report.csv";
  if (fs::is_regular_file(mse_path)) {
    const auto table = io::read_csv(mse_path.string());
    out += "\nforecast MSE (pooled over series):\n";
    for (const auto& row : table.rows)
      if (row.fields[1] == "ALL") out += "  " + row.fields[0] + ": " + row.fields[2] + "\n";
    const auto sel = artifact(c, "forecast") / "selected_model.txt";
    if (fs::is_regular_file(sel)) out += "selected model: " + std::string(io::trim(io::read_file(sel.string()))) + "\n";
  }
  io::write_file(artifact(c, "report.txt").string(), out);
  return out;
}

}  // namespace tvpgvar::pipeline

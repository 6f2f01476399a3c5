#pragma once

#include <algorithm>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tvpgvar/core.hpp"
#include "tvpgvar/gvar.hpp"
#include "tvpgvar/io.hpp"
#include "tvpgvar/lasso.hpp"

namespace tvpgvar {

enum class ForecasterKind { constant, var1, lasso, external };

inline std::string_view to_string(ForecasterKind k) {
  switch (k) {
    case ForecasterKind::constant: return "constant";
    case ForecasterKind::var1: return "var1";
    case ForecasterKind::lasso: return "lasso";
    case ForecasterKind::external: return "external";
  }
  return "unknown";
}

inline ForecasterKind parse_forecaster_kind(std::string_view s) {
  if (s == "constant") return ForecasterKind::constant;
  if (s == "var1") return ForecasterKind::var1;
  if (s == "lasso") return ForecasterKind::lasso;
  if (s == "external") return ForecasterKind::external;
  throw ValidationError("unknown forecaster kind '" + std::string(s) + "'");
}

struct ForecasterConfig {
  ForecasterKind kind = ForecasterKind::constant;
  std::string name;                 // report label; defaults to the kind
  Index horizon = 6;
  Index lag_window = 3;             // lasso
  std::vector<double> lambda_grid;  // lasso; empty = geometric grid from lambda_max
  Index grid_size = 50;
  double grid_ratio = 1e-4;
  Index cv_folds = 5;
  bool pooled = false;              // lasso: one model over all parameter series
  std::string external_path;        // external: predicted-path CSV

  std::string label() const { return name.empty() ? std::string(to_string(kind)) : name; }
};

inline void validate_forecaster(const ForecasterConfig& c) {
  if (c.horizon < 1) throw ValidationError("forecast horizon must be >= 1");
  if (c.kind == ForecasterKind::lasso) {
    if (c.lag_window < 1) throw ValidationError("lasso lag_window must be >= 1");
    if (c.cv_folds < 2) throw ValidationError("lasso cv_folds must be >= 2");
    for (std::size_t i = 0; i < c.lambda_grid.size(); ++i) {
      if (!(c.lambda_grid[i] > 0.0)) throw ValidationError("lambda grid values must be positive");
      if (i > 0 && !(c.lambda_grid[i] < c.lambda_grid[i - 1])) {
        throw ValidationError("lambda grid must be strictly descending");
      }
    }
    if (c.lambda_grid.empty() && (c.grid_size < 1 || !(c.grid_ratio > 0.0 && c.grid_ratio <= 1.0))) {
      throw ValidationError("lambda grid size/ratio invalid");
    }
  }
}

// Repeats the final in-sample parameter row h times.
inline Matrix forecast_constant(const Matrix& theta, Index h) {
  if (h < 1) throw ValidationError("forecast_constant: horizon must be >= 1");
  if (theta.rows() == 0) throw ValidationError("forecast_constant: empty trajectory");
  return theta.bottomRows(1).replicate(h, 1);
}

// Joint VAR(1) on all columns' (b, f1) paths stacked side by side.
inline std::vector<Matrix> forecast_var1(const std::vector<Matrix>& paths, Index h) {
  if (h < 1) throw ValidationError("forecast_var1: horizon must be >= 1");
  if (paths.empty()) throw ValidationError("forecast_var1: no parameter paths");
  const Index T = paths.front().rows();
  const Index state = 2 * static_cast<Index>(paths.size());
  if (T < 2 * state) {
    throw ValidationError("forecast_var1: " + std::to_string(T) + " periods for a " + std::to_string(state) +
                          "-dimensional VAR (need >= " + std::to_string(2 * state) + ")");
  }
  Matrix stacked(T, state);
  for (std::size_t c = 0; c < paths.size(); ++c) {
    if (paths[c].rows() != T || paths[c].cols() != 2) throw ValidationError("forecast_var1: ragged paths");
    stacked.middleCols(2 * static_cast<Index>(c), 2) = paths[c];
  }
  const auto fit = fit_var1(stacked, "parameter VAR(1)");
  Matrix fc(h, state);
  Vector last = stacked.row(T - 1).transpose();
  for (Index s = 0; s < h; ++s) {
    last = fit.intercept + fit.f1 * last;
    fc.row(s) = last.transpose();
  }
  std::vector<Matrix> out;
  for (std::size_t c = 0; c < paths.size(); ++c) out.push_back(fc.middleCols(2 * static_cast<Index>(c), 2));
  return out;
}

struct LassoForecast {
  std::vector<Vector> forecasts;  // one h-vector per input series
  double lambda = 0.0;
  std::vector<double> grid;
  std::vector<double> cv_mse;     // per grid point
};

namespace detail {

// Lagged design over one or more series: features [y_{t-1}, ..., y_{t-L}],
// target y_t; `time` records t for time-ordered folds.
struct LagDesign {
  Matrix X;
  Vector y;
  std::vector<Index> time;
};

inline LagDesign lag_design(const std::vector<Vector>& series, Index L) {
  Index rows = 0;
  for (const auto& s : series) rows += std::max<Index>(0, s.size() - L);
  LagDesign d;
  d.X.resize(rows, L);
  d.y.resize(rows);
  d.time.reserve(static_cast<std::size_t>(rows));
  // Interleave by time so contiguous row blocks are contiguous in time.
  Index max_len = 0;
  for (const auto& s : series) max_len = std::max(max_len, s.size());
  Index r = 0;
  for (Index t = L; t < max_len; ++t) {
    for (const auto& s : series) {
      if (t >= s.size()) continue;
      for (Index k = 0; k < L; ++k) d.X(r, k) = s(t - 1 - k);
      d.y(r) = s(t);
      d.time.push_back(t);
      ++r;
    }
  }
  return d;
}

inline LagDesign take_rows(const LagDesign& d, Index first, Index count) {
  return {d.X.middleRows(first, count), d.y.segment(first, count),
          std::vector<Index>(d.time.begin() + first, d.time.begin() + first + count)};
}

}  // namespace detail

// Forward-chaining CV over a descending lambda grid, then a full-sample refit
// and recursive h-step forecasts feeding predictions back as lags. With
// `pooled` one model is shared by all series, otherwise each is fitted alone.
inline LassoForecast forecast_lasso(const std::vector<Vector>& series, const ForecasterConfig& cfg) {
  validate_forecaster(cfg);
  const Index L = cfg.lag_window;
  for (const auto& s : series) {
    if (s.size() <= L + cfg.cv_folds) {
      throw ValidationError("forecast_lasso: insufficient history (" + std::to_string(s.size()) +
                            " values, need > lag_window + cv_folds = " + std::to_string(L + cfg.cv_folds) + ")");
    }
  }
  const auto design = detail::lag_design(series, L);
  LassoForecast out;
  out.grid = cfg.lambda_grid;
  if (out.grid.empty()) {
    const double lmax = lasso_lambda_max(design.X, design.y);
    out.grid = lmax > 0.0 ? geometric_grid(lmax, cfg.grid_ratio, cfg.grid_size) : std::vector<double>{0.0};
  }

  // Folds are contiguous blocks of distinct time points.
  std::vector<Index> times = design.time;
  times.erase(std::unique(times.begin(), times.end()), times.end());
  const Index n_times = static_cast<Index>(times.size());
  const Index block = n_times / (cfg.cv_folds + 1);
  if (block < 1) throw ValidationError("forecast_lasso: too few samples for the requested folds");
  auto first_row_at = [&](Index time_pos) {
    const Index t = times[static_cast<std::size_t>(time_pos)];
    return static_cast<Index>(std::lower_bound(design.time.begin(), design.time.end(), t) - design.time.begin());
  };

  out.cv_mse.assign(out.grid.size(), 0.0);
  for (Index f = 1; f <= cfg.cv_folds; ++f) {
    const Index train_rows = first_row_at(f * block);
    const Index val_end = f == cfg.cv_folds ? design.X.rows() : first_row_at((f + 1) * block);
    const auto train = detail::take_rows(design, 0, train_rows);
    const auto val = detail::take_rows(design, train_rows, val_end - train_rows);
    const auto path = lasso_path(train.X, train.y, out.grid);
    for (std::size_t g = 0; g < path.size(); ++g) {
      double sse = 0.0;
      for (Index r = 0; r < val.X.rows(); ++r) {
        const double e = val.y(r) - path[g].predict(val.X.row(r));
        sse += e * e;
      }
      out.cv_mse[g] += sse / static_cast<double>(val.X.rows()) / static_cast<double>(cfg.cv_folds);
    }
  }
  // Ties keep the larger lambda (earlier grid point).
  std::size_t best = 0;
  for (std::size_t g = 1; g < out.cv_mse.size(); ++g)
    if (out.cv_mse[g] < out.cv_mse[best]) best = g;
  out.lambda = out.grid[best];

  auto recursive = [&](const LassoFit& fit, const Vector& s) {
    Vector fc(cfg.horizon);
    std::vector<double> history(s.data(), s.data() + s.size());
    for (Index step = 0; step < cfg.horizon; ++step) {
      RowVector x(L);
      for (Index k = 0; k < L; ++k) x(k) = history[history.size() - 1 - static_cast<std::size_t>(k)];
      fc(step) = fit.predict(x);
      history.push_back(fc(step));
    }
    return fc;
  };

  const std::vector<double> refit_grid(out.grid.begin(), out.grid.begin() + static_cast<std::ptrdiff_t>(best) + 1);
  if (cfg.pooled) {
    const auto fit = lasso_path(design.X, design.y, refit_grid).back();
    for (const auto& s : series) out.forecasts.push_back(recursive(fit, s));
  } else if (series.size() == 1) {
    const auto fit = lasso_path(design.X, design.y, refit_grid).back();
    out.forecasts.push_back(recursive(fit, series.front()));
  } else {
    for (const auto& s : series) {
      ForecasterConfig single = cfg;
      single.pooled = false;
      out.forecasts.push_back(forecast_lasso({s}, single).forecasts.front());
    }
  }
  return out;
}

// Stage 1 for every column: predicted (b, f1) over the next h periods.
// Per-column failures are recorded and leave that column empty.
struct ParameterForecast {
  std::vector<std::optional<Matrix>> paths;  // h x 2
  std::vector<std::string> errors;
};

inline ParameterForecast forecast_parameters(const std::vector<Matrix>& theta, const ForecasterConfig& cfg) {
  validate_forecaster(cfg);
  ParameterForecast out;
  out.paths.resize(theta.size());
  out.errors.resize(theta.size());
  switch (cfg.kind) {
    case ForecasterKind::constant:
      for (std::size_t c = 0; c < theta.size(); ++c) {
        try {
          out.paths[c] = forecast_constant(theta[c], cfg.horizon);
        } catch (const std::exception& e) {
          out.errors[c] = e.what();
        }
      }
      break;
    case ForecasterKind::var1:
      try {
        auto fc = forecast_var1(theta, cfg.horizon);
        for (std::size_t c = 0; c < theta.size(); ++c) out.paths[c] = std::move(fc[c]);
      } catch (const std::exception& e) {
        for (auto& err : out.errors) err = e.what();
      }
      break;
    case ForecasterKind::lasso:
      if (cfg.pooled) {
        try {
          std::vector<Vector> b_series;
          std::vector<Vector> f_series;
          for (const auto& th : theta) {
            b_series.push_back(th.col(0));
            f_series.push_back(th.col(1));
          }
          const auto fb = forecast_lasso(b_series, cfg);
          const auto ff = forecast_lasso(f_series, cfg);
          for (std::size_t c = 0; c < theta.size(); ++c) {
            Matrix m(cfg.horizon, 2);
            m << fb.forecasts[c], ff.forecasts[c];
            out.paths[c] = std::move(m);
          }
        } catch (const std::exception& e) {
          for (auto& err : out.errors) err = e.what();
        }
      } else {
        for (std::size_t c = 0; c < theta.size(); ++c) {
          try {
            Matrix m(cfg.horizon, 2);
            m.col(0) = forecast_lasso({Vector(theta[c].col(0))}, cfg).forecasts.front();
            m.col(1) = forecast_lasso({Vector(theta[c].col(1))}, cfg).forecasts.front();
            out.paths[c] = std::move(m);
          } catch (const std::exception& e) {
            out.errors[c] = e.what();
          }
        }
      }
      break;
    case ForecasterKind::external:
      throw ValidationError("external forecasts are read from file, not computed");
  }
  return out;
}

// Stage 2: x_{T+s} = b_{T+s} + f1_{T+s} x_{T+s-1}, started from the last
// observed value. Returns h values.
inline Vector propagate_scalar(double last_value, const Matrix& params) {
  Vector out(params.rows());
  double x = last_value;
  for (Index s = 0; s < params.rows(); ++s) {
    x = params(s, 0) + params(s, 1) * x;
    out(s) = x;
  }
  return out;
}

inline double mse(const Eigen::Ref<const Vector>& actual, const Eigen::Ref<const Vector>& predicted) {
  if (actual.size() != predicted.size()) {
    throw ValidationError("mse: length mismatch (" + std::to_string(actual.size()) + " vs " +
                          std::to_string(predicted.size()) + ")");
  }
  if (actual.size() == 0) throw ValidationError("mse: empty input");
  return (actual - predicted).squaredNorm() / static_cast<double>(actual.size());
}

struct ForecastResult {
  std::string model;
  std::vector<std::optional<Matrix>> param_paths;  // h x 2 per column
  Matrix variable_paths;                            // h x N, NaN for failed columns
  std::map<Index, double> mse_per_series;           // column -> MSE (when actuals given)
  std::optional<double> pooled_mse;                 // over all successful columns and steps
  std::vector<std::string> errors;                  // per column, empty when ok
};

// Propagates stage-1 parameter paths through the scalar equations and scores
// them against held-out actuals (h x N) when provided.
inline ForecastResult assemble_forecast(const std::string& model, const Vector& last_values,
                                        const ParameterForecast& params, const std::optional<Matrix>& actual,
                                        Index horizon) {
  const Index N = last_values.size();
  if (static_cast<Index>(params.paths.size()) != N) throw ValidationError("forecast: column count mismatch");
  const Index h = horizon;
  for (const auto& p : params.paths)
    if (p && p->rows() != h) throw ValidationError("forecast: parameter path length differs from the horizon");
  ForecastResult res;
  res.model = model;
  res.param_paths = params.paths;
  res.errors = params.errors;
  res.variable_paths = Matrix::Constant(h, N, std::numeric_limits<double>::quiet_NaN());
  double sse = 0.0;
  Index count = 0;
  for (Index c = 0; c < N; ++c) {
    const auto& p = params.paths[static_cast<std::size_t>(c)];
    if (!p) continue;
    res.variable_paths.col(c) = propagate_scalar(last_values(c), *p);
    if (actual) {
      if (actual->rows() != h || actual->cols() != N) throw ValidationError("forecast: held-out block has wrong shape");
      const double m = mse(actual->col(c), res.variable_paths.col(c));
      res.mse_per_series[c] = m;
      sse += m * static_cast<double>(h);
      count += h;
    }
  }
  if (actual && count > 0) res.pooled_mse = sse / static_cast<double>(count);
  return res;
}

inline ForecastResult two_stage_forecast(const Matrix& in_sample, const std::vector<Matrix>& theta,
                                         const ForecasterConfig& cfg, const std::optional<Matrix>& actual = {}) {
  if (in_sample.rows() == 0) throw ValidationError("two_stage_forecast: empty in-sample panel");
  for (const auto& th : theta) {
    if (th.rows() != in_sample.rows()) throw ValidationError("two_stage_forecast: trajectories must cover the sample");
  }
  const auto params = forecast_parameters(theta, cfg);
  return assemble_forecast(cfg.label(), in_sample.bottomRows(1).transpose(), params, actual, cfg.horizon);
}

namespace detail {

inline int model_rank(const std::string& name) {
  if (name == "constant") return 0;
  if (name == "var1") return 1;
  if (name == "lasso") return 2;
  return 3;
}

}  // namespace detail

// Argmin by MSE; ties go to the earlier of constant < var1 < lasso < others
// (others alphabetically).
inline std::string select_model(const std::map<std::string, double>& results) {
  if (results.empty()) throw ValidationError("select_model: no results");
  const std::pair<const std::string, double>* best = nullptr;
  for (const auto& entry : results) {
    if (!std::isfinite(entry.second)) throw ValidationError("select_model: non-finite MSE for " + entry.first);
    if (!best || entry.second < best->second ||
        (entry.second == best->second &&
         std::make_pair(detail::model_rank(entry.first), entry.first) <
             std::make_pair(detail::model_rank(best->first), best->first))) {
      best = &entry;
    }
  }
  return best->first;
}

}  // namespace tvpgvar

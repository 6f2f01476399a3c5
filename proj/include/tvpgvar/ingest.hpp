#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tvpgvar/core.hpp"
#include "tvpgvar/io.hpp"

namespace tvpgvar {

// Region code reserved for common-activity series (e.g. oil price).
inline constexpr std::string_view kCommonRegion = "__COMMON__";

struct YearMonth {
  int year = 2000;
  int month = 1;  // 1..12

  int ordinal() const { return year * 12 + (month - 1); }
  static YearMonth from_ordinal(int ord) {
    const int y = ord >= 0 ? ord / 12 : -((-ord + 11) / 12);
    return {y, ord - y * 12 + 1};
  }
  YearMonth plus_months(int n) const { return from_ordinal(ordinal() + n); }
  // First month of the calendar quarter containing this month.
  YearMonth quarter_anchor() const { return {year, ((month - 1) / 3) * 3 + 1}; }

  std::string str() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02d", year, month);
    return buf;
  }

  friend auto operator<=>(const YearMonth& a, const YearMonth& b) {
    return a.ordinal() <=> b.ordinal();
  }
  friend bool operator==(const YearMonth&, const YearMonth&) = default;
};

// Strict `YYYY-MM`. With allow_day, a trailing `-01` day is also accepted.
inline std::optional<YearMonth> parse_year_month(std::string_view text, bool allow_day = false) {
  text = io::trim(text);
  auto digits = [](std::string_view s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
  };
  if (allow_day && text.size() == 10 && text[7] == '-') {
    if (!digits(text.substr(8, 2)) || text.substr(8, 2) != "01") return std::nullopt;
    text = text.substr(0, 7);
  }
  if (text.size() != 7 || text[4] != '-') return std::nullopt;
  if (!digits(text.substr(0, 4)) || !digits(text.substr(5, 2))) return std::nullopt;
  const int year = std::stoi(std::string(text.substr(0, 4)));
  const int month = std::stoi(std::string(text.substr(5, 2)));
  if (month < 1 || month > 12) return std::nullopt;
  return YearMonth{year, month};
}

enum class Frequency { monthly, quarterly };

inline std::string_view to_string(Frequency f) {
  return f == Frequency::monthly ? "monthly" : "quarterly";
}

// One observed (region, variable) series, dates strictly increasing.
struct RawSeries {
  std::string region;
  std::string variable;
  Frequency frequency = Frequency::monthly;
  std::vector<YearMonth> dates;
  std::vector<double> values;

  std::size_t size() const { return dates.size(); }
  bool is_activity() const { return region == kCommonRegion; }
};

struct CsvSchema {
  std::string date = "date";
  std::string region = "region";
  std::string variable = "variable";
  std::string value = "value";
};

namespace detail {

inline Frequency infer_frequency(const RawSeries& s, const std::string& source) {
  if (s.dates.size() < 2) return Frequency::monthly;
  const int first_gap = s.dates[1].ordinal() - s.dates[0].ordinal();
  if (first_gap != 1 && first_gap != 3) {
    throw ValidationError(source + ": series " + s.region + "/" + s.variable +
                          " has spacing of " + std::to_string(first_gap) +
                          " months; expected 1 (monthly) or 3 (quarterly)");
  }
  for (std::size_t i = 1; i < s.dates.size(); ++i) {
    const int gap = s.dates[i].ordinal() - s.dates[i - 1].ordinal();
    if (gap != first_gap) {
      throw ValidationError(source + ": series " + s.region + "/" + s.variable +
                            " has irregular spacing at " + s.dates[i].str());
    }
  }
  return first_gap == 1 ? Frequency::monthly : Frequency::quarterly;
}

}  // namespace detail

// Parses long-format CSV text. Series are returned in order of first
// appearance, each sorted by date.
inline std::vector<RawSeries> parse_long_csv(const std::string& text, const std::string& source,
                                             const CsvSchema& schema = {}) {
  const auto table = io::parse_csv(text, source);
  const auto c_date = table.column(schema.date, source);
  const auto c_region = table.column(schema.region, source);
  const auto c_var = table.column(schema.variable, source);
  const auto c_value = table.column(schema.value, source);

  struct Obs {
    YearMonth date;
    double value;
    std::size_t line;
  };
  std::vector<std::pair<std::string, std::string>> order;
  std::map<std::pair<std::string, std::string>, std::vector<Obs>> groups;

  for (const auto& row : table.rows) {
    const auto where = source + ": row " + std::to_string(row.line);
    const auto date = parse_year_month(row.fields[c_date]);
    if (!date) throw ValidationError(where + ": malformed date '" + row.fields[c_date] + "'");
    double value = 0.0;
    if (!io::parse_double(row.fields[c_value], value) || !std::isfinite(value)) {
      throw ValidationError(where + ": non-numeric value '" + row.fields[c_value] + "'");
    }
    const auto& region = row.fields[c_region];
    const auto& variable = row.fields[c_var];
    if (region.empty() || variable.empty()) throw ValidationError(where + ": empty region or variable");
    auto key = std::make_pair(region, variable);
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) order.push_back(key);
    it->second.push_back({*date, value, row.line});
  }

  std::vector<RawSeries> out;
  out.reserve(order.size());
  for (const auto& key : order) {
    auto& obs = groups[key];
    std::stable_sort(obs.begin(), obs.end(), [](const Obs& a, const Obs& b) { return a.date < b.date; });
    for (std::size_t i = 1; i < obs.size(); ++i) {
      if (obs[i].date == obs[i - 1].date) {
        throw ValidationError(source + ": row " + std::to_string(obs[i].line) + ": duplicate (" +
                              key.first + ", " + key.second + ", " + obs[i].date.str() +
                              ") also at row " + std::to_string(obs[i - 1].line));
      }
    }
    RawSeries s;
    s.region = key.first;
    s.variable = key.second;
    for (const auto& o : obs) {
      s.dates.push_back(o.date);
      s.values.push_back(o.value);
    }
    s.frequency = detail::infer_frequency(s, source);
    out.push_back(std::move(s));
  }
  return out;
}

inline std::vector<RawSeries> load_panel(const std::string& path, const CsvSchema& schema = {}) {
  return parse_long_csv(io::read_file(path), path, schema);
}

// Column order of the aligned panel: region-major, variable-minor, activities last.
struct PanelLayout {
  std::vector<std::string> regions;
  std::vector<std::string> variables;
  std::vector<std::string> activities;

  Dims dims() const {
    return {static_cast<Index>(regions.size()), static_cast<Index>(variables.size()),
            static_cast<Index>(activities.size())};
  }
};

inline std::string column_name(const PanelLayout& layout, Index j) {
  const auto d = layout.dims();
  if (j < 0 || j >= d.width()) throw ValidationError("column index out of range");
  if (j < d.regions * d.variables) {
    return layout.regions[static_cast<std::size_t>(j / d.variables)] + ":" +
           layout.variables[static_cast<std::size_t>(j % d.variables)];
  }
  return std::string(kCommonRegion) + ":" +
         layout.activities[static_cast<std::size_t>(j - d.regions * d.variables)];
}

struct TimeSeriesPanel {
  std::vector<YearMonth> time_index;
  PanelLayout layout;
  Matrix values;  // T x (Kp + l)

  Dims dims() const { return layout.dims(); }
  Index periods() const { return static_cast<Index>(time_index.size()); }
  std::string column_name(Index j) const { return tvpgvar::column_name(layout, j); }

  Index column_index(std::string_view name) const {
    for (Index j = 0; j < dims().width(); ++j) {
      if (column_name(j) == name) return j;
    }
    throw ValidationError("unknown panel column '" + std::string(name) + "'");
  }

  std::optional<Index> row_of(const YearMonth& date) const {
    if (time_index.empty()) return std::nullopt;
    const int off = date.ordinal() - time_index.front().ordinal();
    if (off < 0 || off >= static_cast<int>(time_index.size())) return std::nullopt;
    if (time_index[static_cast<std::size_t>(off)] != date) return std::nullopt;
    return off;
  }

  // Rows [first, first + count).
  TimeSeriesPanel slice(Index first, Index count) const {
    TimeSeriesPanel out;
    out.layout = layout;
    out.time_index.assign(time_index.begin() + first, time_index.begin() + first + count);
    out.values = values.middleRows(first, count);
    return out;
  }
};

enum class Imputation { linear, repeat_last };

inline Imputation parse_imputation(std::string_view s) {
  if (s == "linear" || s == "linear-interpolate") return Imputation::linear;
  if (s == "repeat_last" || s == "repeat-last") return Imputation::repeat_last;
  throw ValidationError("unknown imputation method '" + std::string(s) + "'");
}

// Layout from first appearance: regions and their variables in file order,
// activity series (region `__COMMON__`) last.
inline PanelLayout infer_layout(const std::vector<RawSeries>& series) {
  PanelLayout layout;
  auto push_unique = [](std::vector<std::string>& v, const std::string& s) {
    if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
  };
  for (const auto& s : series) {
    if (s.is_activity()) {
      push_unique(layout.activities, s.variable);
    } else {
      push_unique(layout.regions, s.region);
      push_unique(layout.variables, s.variable);
    }
  }
  return layout;
}

namespace detail {

// Monthly values of one series over [start, end]; quarterly observations are
// anchored to the first month of their quarter.
inline std::vector<double> expand_to_monthly(const RawSeries& s, YearMonth start, YearMonth end,
                                             Imputation method) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(end.ordinal() - start.ordinal() + 1));
  if (s.frequency == Frequency::monthly) {
    const int base = s.dates.front().ordinal();
    for (int ord = start.ordinal(); ord <= end.ordinal(); ++ord) {
      out.push_back(s.values[static_cast<std::size_t>(ord - base)]);
    }
    return out;
  }
  std::vector<int> anchors;
  anchors.reserve(s.dates.size());
  for (const auto& d : s.dates) anchors.push_back(d.quarter_anchor().ordinal());
  std::size_t seg = 0;
  for (int ord = start.ordinal(); ord <= end.ordinal(); ++ord) {
    while (seg + 1 < anchors.size() && anchors[seg + 1] <= ord) ++seg;
    if (anchors[seg] == ord || seg + 1 == anchors.size()) {
      out.push_back(s.values[seg]);
      continue;
    }
    if (method == Imputation::repeat_last) {
      out.push_back(s.values[seg]);
    } else {
      const double w = static_cast<double>(ord - anchors[seg]) /
                       static_cast<double>(anchors[seg + 1] - anchors[seg]);
      out.push_back(s.values[seg] + w * (s.values[seg + 1] - s.values[seg]));
    }
  }
  return out;
}

inline std::pair<YearMonth, YearMonth> coverage(const RawSeries& s) {
  if (s.frequency == Frequency::quarterly) {
    return {s.dates.front().quarter_anchor(), s.dates.back().quarter_anchor()};
  }
  return {s.dates.front(), s.dates.back()};
}

}  // namespace detail

// Aligns every series onto the monthly grid of the common date range. Months
// outside the intersection are dropped, never extrapolated.
inline TimeSeriesPanel align_frequencies(const std::vector<RawSeries>& series, Imputation method,
                                         std::optional<PanelLayout> layout_opt = std::nullopt) {
  const PanelLayout layout = layout_opt ? *layout_opt : infer_layout(series);
  const Dims d = layout.dims();
  if (d.width() == 0) throw ValidationError("align_frequencies: no series to align");

  auto find = [&](const std::string& region, const std::string& variable) -> const RawSeries& {
    for (const auto& s : series) {
      if (s.region == region && s.variable == variable) return s;
    }
    throw ValidationError("align_frequencies: missing series " + region + "/" + variable);
  };

  std::vector<const RawSeries*> columns;
  columns.reserve(static_cast<std::size_t>(d.width()));
  for (const auto& r : layout.regions)
    for (const auto& v : layout.variables) columns.push_back(&find(r, v));
  for (const auto& a : layout.activities) columns.push_back(&find(std::string(kCommonRegion), a));

  YearMonth start = YearMonth::from_ordinal(-1'000'000);
  YearMonth end = YearMonth::from_ordinal(1'000'000);
  for (const auto* s : columns) {
    if (s->size() < 2) {
      throw ValidationError("align_frequencies: series " + s->region + "/" + s->variable +
                            " has fewer than 2 observations");
    }
    const auto [first, last] = detail::coverage(*s);
    start = std::max(start, first);
    end = std::min(end, last);
  }
  if (end < start) throw ValidationError("align_frequencies: empty common date range");

  TimeSeriesPanel panel;
  panel.layout = layout;
  const int T = end.ordinal() - start.ordinal() + 1;
  for (int i = 0; i < T; ++i) panel.time_index.push_back(start.plus_months(i));
  panel.values.resize(T, d.width());
  for (Index j = 0; j < d.width(); ++j) {
    const auto col = detail::expand_to_monthly(*columns[static_cast<std::size_t>(j)], start, end, method);
    for (int i = 0; i < T; ++i) panel.values(i, j) = col[static_cast<std::size_t>(i)];
  }
  return panel;
}

struct ValidationReport {
  std::vector<std::string> issues;
  Index width = 0;
  Index expected_width = 0;

  bool ok() const { return issues.empty(); }
  std::string str() const {
    std::string out = "width " + std::to_string(width) + " (expected " + std::to_string(expected_width) + ")\n";
    if (issues.empty()) return out + "no issues\n";
    for (const auto& i : issues) out += i + "\n";
    return out;
  }
};

inline ValidationReport validate_panel(const TimeSeriesPanel& panel) {
  ValidationReport report;
  const Dims d = panel.dims();
  report.width = panel.values.cols();
  report.expected_width = d.width();
  if (report.width != report.expected_width) {
    report.issues.push_back("panel width " + std::to_string(report.width) + " != Kp+l = " +
                            std::to_string(report.expected_width));
  }
  if (panel.values.rows() != panel.periods()) {
    report.issues.push_back("row count " + std::to_string(panel.values.rows()) +
                            " does not match time index length " + std::to_string(panel.periods()));
  }
  if (panel.periods() < 3) {
    report.issues.push_back("fewer than 3 periods (T = " + std::to_string(panel.periods()) + ")");
  }
  for (std::size_t i = 1; i < panel.time_index.size(); ++i) {
    if (panel.time_index[i].ordinal() != panel.time_index[i - 1].ordinal() + 1) {
      report.issues.push_back("time index not consecutive monthly at " + panel.time_index[i].str());
    }
  }
  auto check_unique = [&](const std::vector<std::string>& names, const char* what) {
    for (std::size_t i = 0; i < names.size(); ++i)
      for (std::size_t j = i + 1; j < names.size(); ++j)
        if (names[i] == names[j]) report.issues.push_back(std::string("duplicate ") + what + " '" + names[i] + "'");
  };
  check_unique(panel.layout.regions, "region");
  check_unique(panel.layout.variables, "variable");
  check_unique(panel.layout.activities, "activity");
  if (report.width == report.expected_width && panel.values.rows() == panel.periods()) {
    for (Index t = 0; t < panel.values.rows(); ++t) {
      for (Index j = 0; j < panel.values.cols(); ++j) {
        if (!std::isfinite(panel.values(t, j))) {
          report.issues.push_back("non-finite value at (" + panel.time_index[static_cast<std::size_t>(t)].str() +
                                  ", " + panel.column_name(j) + ")");
        }
      }
    }
  }
  return report;
}

enum class Transform { none, log };

inline Transform parse_transform(std::string_view s) {
  if (s == "none") return Transform::none;
  if (s == "log") return Transform::log;
  throw ValidationError("unknown transform '" + std::string(s) + "'");
}

// Applies a per-variable transform to every region's column of that variable
// (or to the activity of that name).
inline void apply_transform(TimeSeriesPanel& panel, const std::string& variable, Transform tr) {
  if (tr == Transform::none) return;
  const Dims d = panel.dims();
  std::vector<Index> cols;
  for (Index k = 0; k < d.regions; ++k)
    for (Index v = 0; v < d.variables; ++v)
      if (panel.layout.variables[static_cast<std::size_t>(v)] == variable) cols.push_back(d.region_column(k, v));
  for (Index m = 0; m < d.activities; ++m)
    if (panel.layout.activities[static_cast<std::size_t>(m)] == variable) cols.push_back(d.activity_column(m));
  if (cols.empty()) throw ValidationError("transform: unknown variable '" + variable + "'");
  for (Index j : cols) {
    if ((panel.values.col(j).array() <= 0.0).any()) {
      throw ValidationError("log transform of non-positive values in column " + panel.column_name(j));
    }
    panel.values.col(j) = panel.values.col(j).array().log().matrix();
  }
}

// Wide panel CSV: `date,<REGION:VAR>...,__COMMON__:<ACT>...`.
inline std::string write_panel_csv(const TimeSeriesPanel& panel) {
  std::string out = "date";
  for (Index j = 0; j < panel.values.cols(); ++j) out += "," + panel.column_name(j);
  out += "\n";
  for (Index t = 0; t < panel.values.rows(); ++t) {
    out += panel.time_index[static_cast<std::size_t>(t)].str();
    for (Index j = 0; j < panel.values.cols(); ++j) out += "," + io::format_double(panel.values(t, j));
    out += "\n";
  }
  return out;
}

inline TimeSeriesPanel parse_panel_csv(const std::string& text, const std::string& source) {
  const auto table = io::parse_csv(text, source);
  if (table.header.empty() || table.header.front() != "date") {
    throw ValidationError(source + ": panel CSV must start with a 'date' column");
  }
  TimeSeriesPanel panel;
  PanelLayout& layout = panel.layout;
  bool in_activities = false;
  for (std::size_t c = 1; c < table.header.size(); ++c) {
    const auto& name = table.header[c];
    const auto colon = name.find(':');
    if (colon == std::string::npos) throw ValidationError(source + ": bad column name '" + name + "'");
    const auto region = name.substr(0, colon);
    const auto var = name.substr(colon + 1);
    if (region == kCommonRegion) {
      in_activities = true;
      layout.activities.push_back(var);
      continue;
    }
    if (in_activities) throw ValidationError(source + ": region column after activity columns");
    if (layout.regions.empty() || layout.regions.back() != region) layout.regions.push_back(region);
    if (layout.regions.size() == 1) layout.variables.push_back(var);
  }
  panel.values.resize(static_cast<Index>(table.rows.size()), static_cast<Index>(table.header.size() - 1));
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const auto date = parse_year_month(row.fields[0]);
    if (!date) throw ValidationError(source + ": row " + std::to_string(row.line) + ": malformed date");
    panel.time_index.push_back(*date);
    for (std::size_t c = 1; c < row.fields.size(); ++c) {
      double v = 0.0;
      if (!io::parse_double(row.fields[c], v)) {
        throw ValidationError(source + ": row " + std::to_string(row.line) + ": non-numeric value");
      }
      panel.values(static_cast<Index>(r), static_cast<Index>(c - 1)) = v;
    }
  }
  for (Index j = 0; j < panel.values.cols(); ++j) {
    if (panel.column_name(j) != table.header[static_cast<std::size_t>(j + 1)]) {
      throw ValidationError(source + ": column order is not region-major with activities last");
    }
  }
  return panel;
}

inline TimeSeriesPanel read_panel_csv(const std::string& path) {
  return parse_panel_csv(io::read_file(path), path);
}

}  // namespace tvpgvar

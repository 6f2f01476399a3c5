#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "tvpgvar/core.hpp"
#include "tvpgvar/ingest.hpp"
#include "tvpgvar/io.hpp"

namespace tvpgvar {

// Per-period trade weights. we[t](i, k) is the weight of region i in region
// k's foreign aggregate; wb[t](k, m) is the weight of region k in activity m's
// country aggregate. Columns sum to one.
struct WeightSequence {
  std::vector<Matrix> we;  // K x K per period
  std::vector<Matrix> wb;  // K x l per period

  Index periods() const { return static_cast<Index>(we.size()); }
  Index regions() const { return we.empty() ? 0 : we.front().rows(); }
  Index activities() const { return wb.empty() ? 0 : wb.front().cols(); }
};

// Throws ValidationError describing the first broken invariant. A single
// region has no foreign block, so its W^(E) must be zero rather than
// column-stochastic.
inline void validate_weights(const WeightSequence& w, const Dims& dims, Index periods, double tol = 1e-12) {
  if (w.periods() != periods || static_cast<Index>(w.wb.size()) != periods) {
    throw ValidationError("weights cover " + std::to_string(w.periods()) + " periods, panel has " +
                          std::to_string(periods));
  }
  for (Index t = 0; t < periods; ++t) {
    const auto& we = w.we[static_cast<std::size_t>(t)];
    const auto& wb = w.wb[static_cast<std::size_t>(t)];
    const auto at = " at period " + std::to_string(t);
    if (we.rows() != dims.regions || we.cols() != dims.regions)
      throw ValidationError("W^(E) has wrong shape" + at);
    if (wb.rows() != dims.regions || wb.cols() != dims.activities)
      throw ValidationError("W^(B) has wrong shape" + at);
    if (!we.allFinite() || !wb.allFinite()) throw ValidationError("non-finite weight" + at);
    if ((we.array() < 0.0).any() || (wb.array() < 0.0).any()) throw ValidationError("negative weight" + at);
    if (we.diagonal().cwiseAbs().maxCoeff() > tol) throw ValidationError("non-zero diagonal in W^(E)" + at);
    for (Index k = 0; k < dims.regions; ++k) {
      const double target = dims.regions > 1 ? 1.0 : 0.0;
      if (std::abs(we.col(k).sum() - target) > tol) {
        throw ValidationError("W^(E) column " + std::to_string(k) + " sums to " +
                              io::format_double(we.col(k).sum()) + at);
      }
    }
    for (Index m = 0; m < dims.activities; ++m) {
      if (std::abs(wb.col(m).sum() - 1.0) > tol) {
        throw ValidationError("W^(B) column " + std::to_string(m) + " sums to " +
                              io::format_double(wb.col(m).sum()) + at);
      }
    }
  }
}

// Off-diagonal 1/(K-1) for W^(E), 1/K for W^(B).
inline WeightSequence equal_weights(const Dims& dims, Index periods) {
  const Index K = dims.regions;
  Matrix we = Matrix::Zero(K, K);
  if (K > 1) {
    we.setConstant(1.0 / static_cast<double>(K - 1));
    we.diagonal().setZero();
  }
  Matrix wb = Matrix::Constant(K, dims.activities, K > 0 ? 1.0 / static_cast<double>(K) : 0.0);
  WeightSequence w;
  w.we.assign(static_cast<std::size_t>(periods), we);
  w.wb.assign(static_cast<std::size_t>(periods), wb);
  return w;
}

// Shares from a positive auxiliary series per region (e.g. GDP), averaged
// over a trailing window that is truncated at the start of the sample.
inline WeightSequence rolling_share_weights(const Matrix& aux, Index window, Index activities) {
  if (window < 1) throw ValidationError("rolling share window must be >= 1");
  if ((aux.array() <= 0.0).any() || !aux.allFinite()) {
    throw ValidationError("rolling share weights need a strictly positive auxiliary series");
  }
  const Index T = aux.rows();
  const Index K = aux.cols();
  WeightSequence w;
  w.we.reserve(static_cast<std::size_t>(T));
  w.wb.reserve(static_cast<std::size_t>(T));
  for (Index t = 0; t < T; ++t) {
    const Index first = std::max<Index>(0, t - window + 1);
    const Vector share = aux.middleRows(first, t - first + 1).colwise().mean().transpose();
    Matrix we = Matrix::Zero(K, K);
    if (K > 1) {
      for (Index k = 0; k < K; ++k) {
        const double denom = share.sum() - share(k);
        for (Index i = 0; i < K; ++i) {
          if (i != k) we(i, k) = share(i) / denom;
        }
      }
    }
    Matrix wb(K, activities);
    for (Index m = 0; m < activities; ++m) wb.col(m) = share / share.sum();
    w.we.push_back(std::move(we));
    w.wb.push_back(std::move(wb));
  }
  return w;
}

// Aux matrix for rolling shares: one column per region holding `variable`.
inline Matrix auxiliary_from_panel(const TimeSeriesPanel& panel, const std::string& variable) {
  const Dims d = panel.dims();
  const auto& vars = panel.layout.variables;
  const auto it = std::find(vars.begin(), vars.end(), variable);
  if (it == vars.end()) throw ValidationError("weight auxiliary variable '" + variable + "' not in panel");
  const Index v = it - vars.begin();
  Matrix aux(panel.periods(), d.regions);
  for (Index k = 0; k < d.regions; ++k) aux.col(k) = panel.values.col(d.region_column(k, v));
  return aux;
}

// Weight CSV: `date,from,to,weight`. `to` is a region code for W^(E) or
// `__COMMON__:<activity>` for W^(B). A date's weights hold until the next
// date listed; unlisted pairs are zero.
inline WeightSequence parse_weight_csv(const std::string& text, const std::string& source,
                                       const TimeSeriesPanel& panel) {
  const auto table = io::parse_csv(text, source);
  const auto c_date = table.column("date", source);
  const auto c_from = table.column("from", source);
  const auto c_to = table.column("to", source);
  const auto c_w = table.column("weight", source);
  const Dims d = panel.dims();
  auto region_index = [&](const std::string& code, std::size_t line) {
    const auto& r = panel.layout.regions;
    const auto it = std::find(r.begin(), r.end(), code);
    if (it == r.end()) {
      throw ValidationError(source + ": row " + std::to_string(line) + ": unknown region '" + code + "'");
    }
    return static_cast<Index>(it - r.begin());
  };
  const std::string common_prefix = std::string(kCommonRegion) + ":";

  std::map<int, std::pair<Matrix, Matrix>> by_date;
  for (const auto& row : table.rows) {
    const auto date = parse_year_month(row.fields[c_date], true);
    if (!date) throw ValidationError(source + ": row " + std::to_string(row.line) + ": malformed date");
    double value = 0.0;
    if (!io::parse_double(row.fields[c_w], value) || !std::isfinite(value)) {
      throw ValidationError(source + ": row " + std::to_string(row.line) + ": non-numeric weight");
    }
    auto [it, inserted] = by_date.try_emplace(date->ordinal());
    if (inserted) {
      it->second.first = Matrix::Zero(d.regions, d.regions);
      it->second.second = Matrix::Zero(d.regions, d.activities);
    }
    const Index from = region_index(row.fields[c_from], row.line);
    const auto& to = row.fields[c_to];
    if (to.rfind(common_prefix, 0) == 0) {
      const auto act = to.substr(common_prefix.size());
      const auto& acts = panel.layout.activities;
      const auto a = std::find(acts.begin(), acts.end(), act);
      if (a == acts.end()) {
        throw ValidationError(source + ": row " + std::to_string(row.line) + ": unknown activity '" + act + "'");
      }
      it->second.second(from, a - acts.begin()) = value;
    } else {
      it->second.first(from, region_index(to, row.line)) = value;
    }
  }
  if (by_date.empty()) throw ValidationError(source + ": no weight rows");

  WeightSequence w;
  for (const auto& date : panel.time_index) {
    auto it = by_date.upper_bound(date.ordinal());
    if (it == by_date.begin()) {
      throw ValidationError(source + ": no weights on or before " + date.str());
    }
    --it;
    w.we.push_back(it->second.first);
    w.wb.push_back(it->second.second);
  }
  // Typed decimals (0.333...) rarely sum to one at full precision: accept a
  // loose sum, then renormalize so the 1e-12 invariant holds downstream.
  // Sums already within 1e-14 are left alone so written weights re-read exactly.
  validate_weights(w, d, panel.periods(), 1e-6);
  auto renormalize = [](Matrix& m) {
    for (Index k = 0; k < m.cols(); ++k) {
      const double sum = m.col(k).sum();
      if (sum > 0.0 && std::abs(sum - 1.0) > 1e-14) m.col(k) /= sum;
    }
  };
  for (auto& we : w.we) renormalize(we);
  for (auto& wb : w.wb) renormalize(wb);
  return w;
}

inline std::string write_weight_csv(const WeightSequence& w, const TimeSeriesPanel& panel) {
  const auto& regions = panel.layout.regions;
  const auto& acts = panel.layout.activities;
  std::string out = "date,from,to,weight\n";
  for (std::size_t t = 0; t < panel.time_index.size(); ++t) {
    const auto date = panel.time_index[t].str();
    for (std::size_t i = 0; i < regions.size(); ++i) {
      for (std::size_t k = 0; k < regions.size(); ++k) {
        out += date + "," + regions[i] + "," + regions[k] + "," +
               io::format_double(w.we[t](static_cast<Index>(i), static_cast<Index>(k))) + "\n";
      }
      for (std::size_t m = 0; m < acts.size(); ++m) {
        out += date + "," + regions[i] + "," + std::string(kCommonRegion) + ":" + acts[m] + "," +
               io::format_double(w.wb[t](static_cast<Index>(i), static_cast<Index>(m))) + "\n";
      }
    }
  }
  return out;
}

// Replaces every period with the time average, giving constant b and F_1.
inline WeightSequence make_time_invariant(const WeightSequence& w) {
  if (w.we.empty()) return w;
  Matrix we = Matrix::Zero(w.we.front().rows(), w.we.front().cols());
  Matrix wb = Matrix::Zero(w.wb.front().rows(), w.wb.front().cols());
  for (const auto& m : w.we) we += m;
  for (const auto& m : w.wb) wb += m;
  we /= static_cast<double>(w.we.size());
  wb /= static_cast<double>(w.wb.size());
  WeightSequence out;
  out.we.assign(w.we.size(), we);
  out.wb.assign(w.wb.size(), wb);
  return out;
}

}  // namespace tvpgvar

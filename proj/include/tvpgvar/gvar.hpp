#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>

#include "tvpgvar/core.hpp"
#include "tvpgvar/ingest.hpp"
#include "tvpgvar/weights.hpp"

namespace tvpgvar {

class SingularSystemError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

namespace detail {

inline void check_period(Index t, const WeightSequence& w) {
  if (t < 0 || t >= w.periods()) {
    throw ValidationError("time index " + std::to_string(t) + " outside [0, " +
                          std::to_string(w.periods()) + ")");
  }
}

}  // namespace detail

// Maps x_t to z_{k,t} = [x_k; x*_k; x^(B)] for region k (0-based).
inline Matrix link_matrix_country(Index k, Index t, const WeightSequence& w, const Dims& d) {
  if (k < 0 || k >= d.regions) throw ValidationError("region index " + std::to_string(k) + " out of range");
  detail::check_period(t, w);
  const Index p = d.variables;
  const Index l = d.activities;
  const auto& we = w.we[static_cast<std::size_t>(t)];
  Matrix L = Matrix::Zero(2 * p + l, d.width());
  L.block(0, k * p, p, p).setIdentity();
  for (Index i = 0; i < d.regions; ++i) {
    L.block(p, i * p, p, p) = we(i, k) * Matrix::Identity(p, p);
  }
  if (l > 0) L.block(2 * p, d.regions * p, l, l).setIdentity();
  return L;
}

// Maps x_t to z_{m,t} = [x^(B)_m; x*^(B,E)_m] for activity m (0-based).
inline Matrix link_matrix_activity(Index m, Index t, const WeightSequence& w, const Dims& d) {
  if (m < 0 || m >= d.activities) throw ValidationError("activity index " + std::to_string(m) + " out of range");
  detail::check_period(t, w);
  const Index p = d.variables;
  const auto& wb = w.wb[static_cast<std::size_t>(t)];
  Matrix L = Matrix::Zero(p + 1, d.width());
  L(0, d.activity_column(m)) = 1.0;
  for (Index k = 0; k < d.regions; ++k) {
    L.block(1, k * p, p, p) = wb(k, m) * Matrix::Identity(p, p);
  }
  return L;
}

struct CountryCoefficients {
  Vector a;         // p
  Matrix phi1;      // p x p, own lag
  Matrix gamma_e0;  // p x p, contemporaneous foreign
  Matrix gamma_e1;  // p x p, lagged foreign
  Matrix gamma_b0;  // p x l, contemporaneous activities
  Matrix gamma_b1;  // p x l, lagged activities

  // A_{k0} = [I, -Γe0, -Γb0], A_{k1} = [Φ1, Γe1, Γb1].
  Matrix a0() const {
    const Index p = a.size();
    Matrix A(p, 2 * p + gamma_b0.cols());
    A << Matrix::Identity(p, p), -gamma_e0, -gamma_b0;
    return A;
  }
  Matrix a1() const {
    const Index p = a.size();
    Matrix A(p, 2 * p + gamma_b1.cols());
    A << phi1, gamma_e1, gamma_b1;
    return A;
  }
};

struct ActivityCoefficients {
  double a = 0.0;
  double phi_b = 0.0;
  RowVector gamma_be0;  // 1 x p
  RowVector gamma_be1;  // 1 x p

  RowVector a0() const {
    RowVector A(1 + gamma_be0.size());
    A << 1.0, -gamma_be0;
    return A;
  }
  RowVector a1() const {
    RowVector A(1 + gamma_be1.size());
    A << phi_b, gamma_be1;
    return A;
  }
};

struct StructuralFit {
  Dims dims;
  std::vector<CountryCoefficients> countries;
  std::vector<ActivityCoefficients> activities;
  Matrix residuals;     // (T-1) x (Kp+l), row r is period r+1
  Matrix sigma_u;       // unbiased residual covariance
  Index residual_dof = 0;
  Index max_regressors = 0;
};

// Least squares via column-pivoting QR; the caller names the equation for errors.
inline Matrix ols(const Matrix& X, const Matrix& Y, const std::string& equation) {
  if (X.rows() < X.cols()) {
    throw RankDeficientError("rank-deficient regressors in " + equation + ": " + std::to_string(X.rows()) +
                             " observations for " + std::to_string(X.cols()) + " regressors");
  }
  Eigen::ColPivHouseholderQR<Matrix> qr(X);
  qr.setThreshold(1e-10);
  if (qr.rank() < X.cols()) {
    throw RankDeficientError("rank-deficient regressors in " + equation + ": rank " +
                             std::to_string(qr.rank()) + " < " + std::to_string(X.cols()));
  }
  return qr.solve(Y);
}

namespace detail {

inline Vector foreign_aggregate(const Matrix& values, Index t, Index k, const Matrix& we, const Dims& d) {
  Vector out = Vector::Zero(d.variables);
  for (Index i = 0; i < d.regions; ++i) {
    out += we(i, k) * values.row(t).segment(i * d.variables, d.variables).transpose();
  }
  return out;
}

inline Vector activity_aggregate(const Matrix& values, Index t, Index m, const Matrix& wb, const Dims& d) {
  Vector out = Vector::Zero(d.variables);
  for (Index k = 0; k < d.regions; ++k) {
    out += wb(k, m) * values.row(t).segment(k * d.variables, d.variables).transpose();
  }
  return out;
}

}  // namespace detail

inline Index country_regressor_count(const Dims& d) {
  return 1 + d.variables + (d.regions > 1 ? 2 * d.variables : 0) + 2 * d.activities;
}

inline Index activity_regressor_count(const Dims& d) { return 2 + 2 * d.variables; }

// Full-sample OLS of every country and activity equation. Starred regressors
// at lag j use the weights of period t-j.
inline StructuralFit estimate_structural(const TimeSeriesPanel& panel, const WeightSequence& w) {
  const Dims d = panel.dims();
  const Index T = panel.periods();
  const Index p = d.variables;
  const Index l = d.activities;
  validate_weights(w, d, T);
  if (T < 3) throw ValidationError("estimate_structural: need at least 3 periods");
  const Matrix& x = panel.values;
  const Index n = T - 1;
  const bool foreign = d.regions > 1;

  StructuralFit fit;
  fit.dims = d;
  fit.residuals.resize(n, d.width());

  for (Index k = 0; k < d.regions; ++k) {
    const Index q = country_regressor_count(d);
    Matrix X(n, q);
    Matrix Y(n, p);
    for (Index r = 0; r < n; ++r) {
      const Index t = r + 1;
      Index c = 0;
      X(r, c++) = 1.0;
      X.row(r).segment(c, p) = x.row(t - 1).segment(k * p, p);
      c += p;
      if (foreign) {
        X.row(r).segment(c, p) = detail::foreign_aggregate(x, t, k, w.we[static_cast<std::size_t>(t)], d).transpose();
        c += p;
        X.row(r).segment(c, p) =
            detail::foreign_aggregate(x, t - 1, k, w.we[static_cast<std::size_t>(t - 1)], d).transpose();
        c += p;
      }
      if (l > 0) {
        X.row(r).segment(c, l) = x.row(t).tail(l);
        c += l;
        X.row(r).segment(c, l) = x.row(t - 1).tail(l);
      }
      Y.row(r) = x.row(t).segment(k * p, p);
    }
    const Matrix B = ols(X, Y, "country equation for " + panel.layout.regions[static_cast<std::size_t>(k)]);
    CountryCoefficients cc;
    cc.a = B.row(0).transpose();
    cc.phi1 = B.middleRows(1, p).transpose();
    Index c = 1 + p;
    if (foreign) {
      cc.gamma_e0 = B.middleRows(c, p).transpose();
      cc.gamma_e1 = B.middleRows(c + p, p).transpose();
      c += 2 * p;
    } else {
      cc.gamma_e0 = Matrix::Zero(p, p);
      cc.gamma_e1 = Matrix::Zero(p, p);
    }
    cc.gamma_b0 = B.middleRows(c, l).transpose();
    cc.gamma_b1 = B.middleRows(c + l, l).transpose();
    fit.residuals.middleCols(k * p, p) = Y - X * B;
    fit.countries.push_back(std::move(cc));
  }

  for (Index m = 0; m < l; ++m) {
    const Index q = activity_regressor_count(d);
    Matrix X(n, q);
    Vector y(n);
    const Index col = d.activity_column(m);
    for (Index r = 0; r < n; ++r) {
      const Index t = r + 1;
      X(r, 0) = 1.0;
      X(r, 1) = x(t - 1, col);
      X.row(r).segment(2, p) = detail::activity_aggregate(x, t, m, w.wb[static_cast<std::size_t>(t)], d).transpose();
      X.row(r).segment(2 + p, p) =
          detail::activity_aggregate(x, t - 1, m, w.wb[static_cast<std::size_t>(t - 1)], d).transpose();
      y(r) = x(t, col);
    }
    const Vector B = ols(X, y, "activity equation for " + panel.layout.activities[static_cast<std::size_t>(m)]);
    ActivityCoefficients ac;
    ac.a = B(0);
    ac.phi_b = B(1);
    ac.gamma_be0 = B.segment(2, p).transpose();
    ac.gamma_be1 = B.segment(2 + p, p).transpose();
    fit.residuals.col(col) = y - X * B;
    fit.activities.push_back(std::move(ac));
  }

  fit.max_regressors = d.regions > 0 ? country_regressor_count(d) : 0;
  if (l > 0) fit.max_regressors = std::max(fit.max_regressors, activity_regressor_count(d));
  fit.residual_dof = n - fit.max_regressors;
  if (fit.residual_dof < 1) {
    throw RankDeficientError("estimate_structural: no residual degrees of freedom (T = " + std::to_string(T) + ")");
  }
  fit.sigma_u = symmetrize(fit.residuals.transpose() * fit.residuals / static_cast<double>(fit.residual_dof));
  return fit;
}

// Global system at one period plus its reduced form
//   G0 x_t = a + G1 x_{t-1} + u_t,   x_t = b + F1 x_{t-1} + eps_t.
struct StackedSystem {
  Matrix g0;
  Matrix g1;
  Vector a;
  Matrix sigma_u;
  Matrix sigma_eps;
  Vector b;
  Matrix f1;
  double condition = 1.0;

  Index dim() const { return g0.rows(); }
  Matrix g0_inverse() const { return g0.partialPivLu().inverse(); }
};

struct StackOptions {
  double condition_cap = 1e12;
};

namespace detail {

inline void finish_reduced_form(StackedSystem& s, const StackOptions& opt) {
  Eigen::JacobiSVD<Matrix> svd(s.g0);
  const auto& sv = svd.singularValues();
  s.condition = sv(sv.size() - 1) > 0.0 ? sv(0) / sv(sv.size() - 1) : HUGE_VAL;
  if (!(s.condition <= opt.condition_cap)) {
    throw SingularSystemError("G0 condition number " + io::format_double(s.condition) + " exceeds cap " +
                              io::format_double(opt.condition_cap));
  }
  const auto lu = s.g0.partialPivLu();
  s.f1 = lu.solve(s.g1);
  s.b = lu.solve(s.a);
  const Matrix g0inv = lu.inverse();
  s.sigma_eps = symmetrize(g0inv * s.sigma_u * g0inv.transpose());

  const double f_err = max_abs(s.g0 * s.f1 - s.g1);
  const double b_err = max_abs(s.g0 * s.b - s.a);
  if (f_err > 1e-10 * std::max(1.0, max_abs(s.g1)) || b_err > 1e-10 * std::max(1.0, max_abs(s.a))) {
    throw NumericalError("reduced form does not reproduce G0 F1 = G1 / G0 b = a (residuals " +
                         io::format_double(f_err) + ", " + io::format_double(b_err) + ")");
  }
}

}  // namespace detail

// Stacks all unit equations at period t using W_t.
inline StackedSystem stack_system(const StructuralFit& fit, const WeightSequence& w, Index t,
                                  const StackOptions& opt = {}) {
  const Dims& d = fit.dims;
  detail::check_period(t, w);
  const Index N = d.width();
  const Index p = d.variables;
  StackedSystem s;
  s.g0.resize(N, N);
  s.g1.resize(N, N);
  s.a.resize(N);
  for (Index k = 0; k < d.regions; ++k) {
    const auto& c = fit.countries[static_cast<std::size_t>(k)];
    const Matrix L = link_matrix_country(k, t, w, d);
    s.g0.middleRows(k * p, p) = c.a0() * L;
    s.g1.middleRows(k * p, p) = c.a1() * L;
    s.a.segment(k * p, p) = c.a;
  }
  for (Index m = 0; m < d.activities; ++m) {
    const auto& c = fit.activities[static_cast<std::size_t>(m)];
    const Matrix L = link_matrix_activity(m, t, w, d);
    const Index row = d.activity_column(m);
    s.g0.row(row) = c.a0() * L;
    s.g1.row(row) = c.a1() * L;
    s.a(row) = c.a;
  }
  s.sigma_u = fit.sigma_u;
  detail::finish_reduced_form(s, opt);
  return s;
}

// A plain reduced-form VAR(1) viewed as a stacked system with G0 = I.
inline StackedSystem system_from_var(const Vector& intercept, const Matrix& f1, const Matrix& sigma) {
  StackedSystem s;
  const Index N = f1.rows();
  s.g0 = Matrix::Identity(N, N);
  s.g1 = f1;
  s.a = intercept;
  s.sigma_u = sigma;
  detail::finish_reduced_form(s, {});
  return s;
}

// [B_0, ..., B_S] with B_0 = I and B_s = F1 B_{s-1}.
inline std::vector<Matrix> ma_coefficients(const Matrix& f1, Index horizon) {
  if (horizon < 0) throw ValidationError("ma_coefficients: negative horizon");
  std::vector<Matrix> B;
  B.reserve(static_cast<std::size_t>(horizon + 1));
  B.push_back(Matrix::Identity(f1.rows(), f1.cols()));
  for (Index s = 1; s <= horizon; ++s) B.push_back(f1 * B.back());
  return B;
}

struct Stability {
  double spectral_radius = 0.0;
  bool stable = false;
};

inline Stability stability_check(const Matrix& f1) {
  if (f1.rows() != f1.cols()) throw ValidationError("stability_check: matrix is not square");
  if (f1.size() == 0) return {0.0, true};
  Eigen::EigenSolver<Matrix> es(f1, false);
  const double r = es.eigenvalues().cwiseAbs().maxCoeff();
  return {r, r < 1.0};
}

// Deterministic part d_{t+s}: the reduced form iterated from x0 with zero shocks.
inline Matrix deterministic_path(const Vector& b, const Matrix& f1, const Vector& x0, Index steps) {
  Matrix out(steps + 1, x0.size());
  out.row(0) = x0.transpose();
  for (Index s = 1; s <= steps; ++s) out.row(s) = (b + f1 * out.row(s - 1).transpose()).transpose();
  return out;
}

struct Var1Fit {
  Vector intercept;
  Matrix f1;
  Matrix residuals;  // (T-1) x d
  Matrix sigma;      // unbiased, divisor (T-1) - (d+1)
};

// OLS VAR(1) with intercept on the rows of `data` (T x d).
inline Var1Fit fit_var1(const Matrix& data, const std::string& label = "VAR(1)") {
  const Index T = data.rows();
  const Index dim = data.cols();
  if (T < 2) throw ValidationError(label + ": need at least 2 observations");
  Matrix X(T - 1, dim + 1);
  X.col(0).setOnes();
  X.rightCols(dim) = data.topRows(T - 1);
  const Matrix Y = data.bottomRows(T - 1);
  const Matrix B = ols(X, Y, label);
  Var1Fit fit;
  fit.intercept = B.row(0).transpose();
  fit.f1 = B.bottomRows(dim).transpose();
  fit.residuals = Y - X * B;
  const Index dof = std::max<Index>(1, T - 1 - (dim + 1));
  fit.sigma = symmetrize(fit.residuals.transpose() * fit.residuals / static_cast<double>(dof));
  return fit;
}

// --- JSON (row-major nested arrays) --------------------------------------

namespace detail {

inline nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline nlohmann::json vector_to_json(const Eigen::Ref<const Vector>& v) {
  nlohmann::json arr = nlohmann::json::array();
  for (Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

inline Matrix matrix_from_json(const nlohmann::json& j, Index rows, Index cols, const std::string& what) {
  if (!j.is_array() || static_cast<Index>(j.size()) != rows) throw ValidationError("bad shape for " + what);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Index>(row.size()) != cols) throw ValidationError("bad shape for " + what);
    for (Index c = 0; c < cols; ++c) m(i, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

inline Vector vector_from_json(const nlohmann::json& j, Index n, const std::string& what) {
  if (!j.is_array() || static_cast<Index>(j.size()) != n) throw ValidationError("bad shape for " + what);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = j[static_cast<std::size_t>(i)].get<double>();
  return v;
}

}  // namespace detail

inline nlohmann::json structural_fit_to_json(const StructuralFit& fit) {
  using detail::matrix_to_json;
  using detail::vector_to_json;
  nlohmann::json j;
  j["dims"] = {{"regions", fit.dims.regions}, {"variables", fit.dims.variables}, {"activities", fit.dims.activities}};
  j["countries"] = nlohmann::json::array();
  for (const auto& c : fit.countries) {
    j["countries"].push_back({{"a", vector_to_json(c.a)},
                              {"phi1", matrix_to_json(c.phi1)},
                              {"gamma_e0", matrix_to_json(c.gamma_e0)},
                              {"gamma_e1", matrix_to_json(c.gamma_e1)},
                              {"gamma_b0", matrix_to_json(c.gamma_b0)},
                              {"gamma_b1", matrix_to_json(c.gamma_b1)}});
  }
  j["activities"] = nlohmann::json::array();
  for (const auto& a : fit.activities) {
    j["activities"].push_back({{"a", a.a},
                               {"phi_b", a.phi_b},
                               {"gamma_be0", vector_to_json(a.gamma_be0.transpose())},
                               {"gamma_be1", vector_to_json(a.gamma_be1.transpose())}});
  }
  j["sigma_u"] = matrix_to_json(fit.sigma_u);
  j["residual_dof"] = fit.residual_dof;
  j["max_regressors"] = fit.max_regressors;
  j["residuals"] = matrix_to_json(fit.residuals);
  return j;
}

inline StructuralFit structural_fit_from_json(const nlohmann::json& j) {
  using detail::matrix_from_json;
  using detail::vector_from_json;
  StructuralFit fit;
  try {
    fit.dims = {j.at("dims").at("regions").get<Index>(), j.at("dims").at("variables").get<Index>(),
                j.at("dims").at("activities").get<Index>()};
    const Index p = fit.dims.variables;
    const Index l = fit.dims.activities;
    const Index N = fit.dims.width();
    if (static_cast<Index>(j.at("countries").size()) != fit.dims.regions ||
        static_cast<Index>(j.at("activities").size()) != l) {
      throw ValidationError("coefficient JSON: unit counts do not match dims");
    }
    for (const auto& c : j.at("countries")) {
      CountryCoefficients cc;
      cc.a = vector_from_json(c.at("a"), p, "a");
      cc.phi1 = matrix_from_json(c.at("phi1"), p, p, "phi1");
      cc.gamma_e0 = matrix_from_json(c.at("gamma_e0"), p, p, "gamma_e0");
      cc.gamma_e1 = matrix_from_json(c.at("gamma_e1"), p, p, "gamma_e1");
      cc.gamma_b0 = l > 0 ? matrix_from_json(c.at("gamma_b0"), p, l, "gamma_b0") : Matrix(p, 0);
      cc.gamma_b1 = l > 0 ? matrix_from_json(c.at("gamma_b1"), p, l, "gamma_b1") : Matrix(p, 0);
      fit.countries.push_back(std::move(cc));
    }
    for (const auto& a : j.at("activities")) {
      ActivityCoefficients ac;
      ac.a = a.at("a").get<double>();
      ac.phi_b = a.at("phi_b").get<double>();
      ac.gamma_be0 = vector_from_json(a.at("gamma_be0"), p, "gamma_be0").transpose();
      ac.gamma_be1 = vector_from_json(a.at("gamma_be1"), p, "gamma_be1").transpose();
      fit.activities.push_back(std::move(ac));
    }
    fit.sigma_u = matrix_from_json(j.at("sigma_u"), N, N, "sigma_u");
    fit.residual_dof = j.at("residual_dof").get<Index>();
    fit.max_regressors = j.at("max_regressors").get<Index>();
    const auto& res = j.at("residuals");
    fit.residuals = matrix_from_json(res, static_cast<Index>(res.size()), N, "residuals");
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("coefficient JSON: ") + e.what());
  }
  return fit;
}

}  // namespace tvpgvar

#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>

#include "tvpgvar/core.hpp"
#include "tvpgvar/gvar.hpp"
#include "tvpgvar/io.hpp"
#include "tvpgvar/matrix_calculus.hpp"

namespace tvpgvar {

// Lower-triangular P with P P' = sigma and positive diagonal.
inline Matrix cholesky_lower(const Matrix& sigma) {
  if (sigma.rows() != sigma.cols() || sigma.size() == 0) {
    throw ValidationError("cholesky_lower: matrix must be square and non-empty");
  }
  if (!sigma.allFinite()) throw NumericalError("cholesky_lower: non-finite covariance");
  const double scale = std::max(1.0, max_abs(sigma));
  if (max_abs(sigma - sigma.transpose()) > 1e-10 * scale) {
    throw NumericalError("cholesky_lower: matrix is not symmetric");
  }
  const Matrix sym = symmetrize(sigma);
  const double min_eig = Eigen::SelfAdjointEigenSolver<Matrix>(sym, Eigen::EigenvaluesOnly).eigenvalues()(0);
  if (!(min_eig > 1e-12 * sym.trace())) {
    throw NumericalError("cholesky_lower: covariance is not positive definite (min eigenvalue " +
                         io::format_double(min_eig) + ")");
  }
  Eigen::LLT<Matrix> llt(sym);
  if (llt.info() != Eigen::Success) throw NumericalError("cholesky_lower: factorization failed");
  return llt.matrixL();
}

struct ShockSpec {
  std::vector<Index> targets;  // 0-based panel columns
  Index horizon = 6;
  double level = 0.95;
};

inline void validate_shock(const ShockSpec& shock, Index dim) {
  if (shock.targets.empty()) throw ValidationError("shock has no targets");
  if (shock.horizon < 0) throw ValidationError("shock horizon must be >= 0");
  if (!(shock.level > 0.0 && shock.level < 1.0)) throw ValidationError("confidence level must be in (0, 1)");
  auto sorted = shock.targets;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw ValidationError("shock targets must be distinct");
  }
  if (sorted.front() < 0 || sorted.back() >= dim) throw ValidationError("shock target out of range");
}

namespace detail {

// Rounds every entry of m onto one power-of-two grid, coarse enough that any
// sum of up to m.cols() entries of a row is computed without rounding. Sums
// over target sets are then exactly additive; the grid step is a few ulps of
// the largest entry.
inline Matrix snap_to_common_grid(const Matrix& m) {
  const double scale = max_abs(m);
  if (scale == 0.0 || !std::isfinite(scale)) return m;
  int exponent = 0;
  std::frexp(scale, &exponent);  // scale < 2^exponent
  const int headroom = static_cast<int>(std::ceil(std::log2(static_cast<double>(std::max<Index>(m.cols(), 1))))) + 1;
  const double quantum = std::ldexp(1.0, exponent - 53 + headroom);
  return m.unaryExpr([quantum](double v) { return std::nearbyint(v / quantum) * quantum; });
}

}  // namespace detail

// Per-horizon impact matrices B_s G0^{-1} P (columns are single-shock responses).
inline std::vector<Matrix> orthogonal_impacts(const StackedSystem& system, Index horizon) {
  const Matrix impact = system.g0.partialPivLu().solve(cholesky_lower(system.sigma_u));
  const auto B = ma_coefficients(system.f1, horizon);
  std::vector<Matrix> out;
  out.reserve(B.size());
  for (const auto& Bs : B) out.push_back(detail::snap_to_common_grid(Bs * impact));
  return out;
}

// Row s holds B_s G0^{-1} P sum_{j in targets} e_j.
inline Matrix oirf_point(const StackedSystem& system, const ShockSpec& shock) {
  validate_shock(shock, system.dim());
  auto targets = shock.targets;
  std::sort(targets.begin(), targets.end());
  const auto impacts = orthogonal_impacts(system, shock.horizon);
  Matrix out = Matrix::Zero(shock.horizon + 1, system.dim());
  for (Index s = 0; s <= shock.horizon; ++s) {
    for (Index j : targets) out.row(s) += impacts[static_cast<std::size_t>(s)].col(j).transpose();
  }
  return out;
}

// Generalized response to a one-standard-deviation shock in equation j under
// Gaussian errors: B_s G0^{-1} Sigma_u e_j / sqrt(sigma_jj).
inline Matrix girf_point(const StackedSystem& system, Index j, Index horizon) {
  if (j < 0 || j >= system.dim()) throw ValidationError("girf_point: shock index out of range");
  if (horizon < 0) throw ValidationError("girf_point: negative horizon");
  const double sjj = system.sigma_u(j, j);
  if (!(sjj > 0.0)) throw NumericalError("girf_point: non-positive shock variance");
  const Vector impact = system.g0.partialPivLu().solve(system.sigma_u.col(j) / std::sqrt(sjj));
  const auto B = ma_coefficients(system.f1, horizon);
  Matrix out(horizon + 1, system.dim());
  for (Index s = 0; s <= horizon; ++s) out.row(s) = (B[static_cast<std::size_t>(s)] * impact).transpose();
  return out;
}

// G_n = d vec(B_n) / d vec(F1)' = sum_{m<n} (F1')^{n-1-m} kron B_m.
inline Matrix derivative_Gn(const Matrix& f1, const std::vector<Matrix>& B, Index n) {
  const Index N = f1.rows();
  Matrix G = Matrix::Zero(N * N, N * N);
  if (n <= 0) return G;
  if (static_cast<Index>(B.size()) < n) throw ValidationError("derivative_Gn: MA sequence too short");
  Matrix power = Matrix::Identity(N, N);  // (F1')^{n-1-m}, built from m = n-1 downwards
  const Matrix f1t = f1.transpose();
  for (Index m = n - 1; m >= 0; --m) {
    G += kron(power, B[static_cast<std::size_t>(m)]);
    power = power * f1t;
  }
  return G;
}

// H = d vec(P) / d vech(Sigma)' = L'{L (I + K)(P kron I) L'}^{-1}.
inline Matrix derivative_H(const Matrix& P) {
  const Index m = P.rows();
  if (P.cols() != m || m == 0) throw ValidationError("derivative_H: P must be square");
  if ((P.diagonal().array() <= 0.0).any()) throw NumericalError("derivative_H: P has a non-positive diagonal");
  const Matrix L = elimination_matrix(m);
  const Matrix K = commutation_matrix(m, m);
  const Matrix I2 = Matrix::Identity(m * m, m * m);
  const Matrix inner = L * (I2 + K) * kron(P, Matrix::Identity(m, m)) * L.transpose();
  Eigen::FullPivLU<Matrix> lu(inner);
  if (!lu.isInvertible()) throw NumericalError("derivative_H: inner matrix is singular");
  return L.transpose() * lu.inverse();
}

inline double normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

struct AsymptoticInputs {
  Matrix sigma_alpha;  // N^2 x N^2, covariance of vec(F1)
  Matrix sigma_sigma;  // N(N+1)/2 square, covariance of vech(Sigma_eps)
};

// Gaussian VAR OLS asymptotics: (centred second moment of x_{t-1})^{-1}
// kron Sigma_eps, and 2 D+ (Sigma kron Sigma) D+'.
inline AsymptoticInputs estimate_asymptotic_inputs(const Matrix& lagged, const Matrix& sigma_eps) {
  const Index N = sigma_eps.rows();
  if (lagged.cols() != N) throw ValidationError("estimate_asymptotic_inputs: dimension mismatch");
  if (lagged.rows() < 2) throw ValidationError("estimate_asymptotic_inputs: need at least 2 rows");
  const Matrix centred = lagged.rowwise() - lagged.colwise().mean();
  const Matrix gamma = centred.transpose() * centred / static_cast<double>(lagged.rows());
  Eigen::FullPivLU<Matrix> lu(gamma);
  lu.setThreshold(1e-12);
  if (!lu.isInvertible()) {
    throw NumericalError("estimate_asymptotic_inputs: singular regressor moment matrix");
  }
  AsymptoticInputs out;
  out.sigma_alpha = kron(symmetrize(lu.inverse()), sigma_eps);
  const Matrix Dp = duplication_pinv(N);
  out.sigma_sigma = 2.0 * Dp * kron(sigma_eps, sigma_eps) * Dp.transpose();
  return out;
}

// Panel form: x_{t-1} are rows 0..T-2 of the panel.
inline AsymptoticInputs estimate_asymptotic_inputs(const Matrix& panel_values, const StackedSystem& system) {
  return estimate_asymptotic_inputs(Matrix(panel_values.topRows(panel_values.rows() - 1)), system.sigma_eps);
}

struct IRFResult {
  Matrix point;       // (n+1) x N
  Matrix half_width;  // (n+1) x N
  bool stable = true;
  double spectral_radius = 0.0;
  std::vector<Index> targets;
  double level = 0.95;
  double z = 0.0;
  Index sample_size = 0;
  bool pointwise_in_t = true;

  Matrix lower() const { return point - half_width; }
  Matrix upper() const { return point + half_width; }
};

// Point OIRF with delta-method bands: variance of vec(OImp(n)) is
// C_n S_a C_n' + Cbar_n S_s Cbar_n' with C_0 = 0,
// C_n = (P_eps' kron I) G_n, Cbar_n = (I kron B_n) H; half-width
// z_{1-a/2} sqrt(var / T). For several targets the variance of the summed
// response includes the cross-shock covariances.
inline IRFResult asymptotic_bands(const StackedSystem& system, const ShockSpec& shock, Index sample_size,
                                  const AsymptoticInputs& inputs) {
  validate_shock(shock, system.dim());
  if (sample_size < 1) throw ValidationError("asymptotic_bands: sample size must be >= 1");
  const Index N = system.dim();
  const Index n = shock.horizon;
  if (inputs.sigma_alpha.rows() != N * N || inputs.sigma_sigma.rows() != N * (N + 1) / 2) {
    throw ValidationError("asymptotic_bands: covariance inputs have the wrong shape");
  }

  IRFResult res;
  res.point = oirf_point(system, shock);
  res.targets = shock.targets;
  res.level = shock.level;
  res.sample_size = sample_size;
  const auto stab = stability_check(system.f1);
  res.stable = stab.stable;
  res.spectral_radius = stab.spectral_radius;
  res.z = normal_quantile(1.0 - (1.0 - shock.level) / 2.0);

  const Matrix P_eps = cholesky_lower(system.sigma_eps);
  const Matrix H = derivative_H(P_eps);
  const auto B = ma_coefficients(system.f1, n);
  const Matrix I = Matrix::Identity(N, N);

  // Rows of `select` pick element i of the summed response out of vec(OImp).
  Matrix select = Matrix::Zero(N, N * N);
  for (Index j : shock.targets)
    for (Index i = 0; i < N; ++i) select(i, N * j + i) = 1.0;

  res.half_width.resize(n + 1, N);
  const double tol = -1e-10;
  for (Index s = 0; s <= n; ++s) {
    const Matrix cbar = select * kron(I, B[static_cast<std::size_t>(s)]) * H;
    Matrix var = cbar * inputs.sigma_sigma * cbar.transpose();
    if (s > 0) {
      const Matrix c = select * kron(P_eps.transpose(), I) * derivative_Gn(system.f1, B, s);
      var += c * inputs.sigma_alpha * c.transpose();
    }
    for (Index i = 0; i < N; ++i) {
      double v = var(i, i);
      if (v < 0.0) {
        if (v < tol * std::max(1.0, var.diagonal().cwiseAbs().maxCoeff())) {
          throw NumericalError("asymptotic_bands: negative variance " + io::format_double(v) + " at horizon " +
                               std::to_string(s));
        }
        v = 0.0;
      }
      res.half_width(s, i) = res.z * std::sqrt(v) / std::sqrt(static_cast<double>(sample_size));
    }
  }
  return res;
}

// JSON: responses/lower/upper indexed [column][horizon].
inline nlohmann::json irf_to_json(const IRFResult& r, const std::string& at_time,
                                  const std::vector<std::string>& target_names) {
  auto by_column = [](const Matrix& m) {
    nlohmann::json out = nlohmann::json::array();
    for (Index j = 0; j < m.cols(); ++j) {
      nlohmann::json col = nlohmann::json::array();
      for (Index s = 0; s < m.rows(); ++s) col.push_back(m(s, j));
      out.push_back(std::move(col));
    }
    return out;
  };
  nlohmann::json j;
  j["at_time"] = at_time;
  j["targets"] = target_names;
  j["level"] = r.level;
  j["z"] = r.z;
  j["sample_size"] = r.sample_size;
  nlohmann::json horizons = nlohmann::json::array();
  for (Index s = 0; s < r.point.rows(); ++s) horizons.push_back(s);
  j["horizons"] = horizons;
  j["responses"] = by_column(r.point);
  j["lower"] = by_column(r.lower());
  j["upper"] = by_column(r.upper());
  j["stable"] = r.stable;
  j["spectral_radius"] = r.spectral_radius;
  j["pointwise_in_t"] = r.pointwise_in_t;
  return j;
}

// Long format `horizon,column,point,lower,upper`.
inline std::string irf_to_csv(const IRFResult& r, const std::vector<std::string>& column_names) {
  std::string out = "horizon,column,point,lower,upper\n";
  const Matrix lo = r.lower();
  const Matrix hi = r.upper();
  for (Index s = 0; s < r.point.rows(); ++s) {
    for (Index j = 0; j < r.point.cols(); ++j) {
      out += std::to_string(s) + "," + column_names[static_cast<std::size_t>(j)] + "," +
             io::format_double(r.point(s, j)) + "," + io::format_double(lo(s, j)) + "," +
             io::format_double(hi(s, j)) + "\n";
    }
  }
  return out;
}

}  // namespace tvpgvar

#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "tvpgvar/core.hpp"

namespace tvpgvar {

struct LassoOptions {
  double tol = 1e-7;       // max coefficient change per sweep (standardized scale)
  Index max_iter = 100000;  // sweeps
  std::optional<Vector> warm_start;  // standardized coefficients
};

struct LassoFit {
  double intercept = 0.0;
  Vector beta;       // original feature scale
  Vector beta_std;   // standardized feature scale
  Index sweeps = 0;
  bool converged = false;
  std::vector<double> objective;  // after each sweep, standardized problem

  double predict(const Eigen::Ref<const RowVector>& x) const { return intercept + x.dot(beta); }
};

inline double soft_threshold(double z, double gamma) {
  if (z > gamma) return z - gamma;
  if (z < -gamma) return z + gamma;
  return 0.0;
}

namespace detail {

struct Standardized {
  Matrix Z;
  Vector mean;
  Vector scale;  // 0 for constant columns
  Vector yc;
  double y_mean = 0.0;
};

inline Standardized standardize(const Matrix& X, const Vector& y) {
  if (X.rows() != y.size()) throw ValidationError("lasso: X and y have different row counts");
  if (X.rows() == 0) throw ValidationError("lasso: no observations");
  if (!X.allFinite() || !y.allFinite()) throw ValidationError("lasso: non-finite input");
  const double n = static_cast<double>(X.rows());
  Standardized s;
  s.mean = X.colwise().mean().transpose();
  s.Z = X.rowwise() - s.mean.transpose();
  s.scale.resize(X.cols());
  for (Index j = 0; j < X.cols(); ++j) {
    const double sd = std::sqrt(s.Z.col(j).squaredNorm() / n);
    // Columns that are constant up to rounding carry no signal.
    if (sd > 1e-12 * std::max(1.0, std::abs(s.mean(j)))) {
      s.scale(j) = sd;
      s.Z.col(j) /= sd;
    } else {
      s.scale(j) = 0.0;
      s.Z.col(j).setZero();
    }
  }
  s.y_mean = y.mean();
  s.yc = y.array() - s.y_mean;
  return s;
}

inline double lasso_objective(const Vector& r, const Vector& beta, double lambda) {
  return r.squaredNorm() / (2.0 * static_cast<double>(r.size())) + lambda * beta.lpNorm<1>();
}

}  // namespace detail

// Smallest lambda giving the all-zero solution: max_j |z_j' y_c| / n.
inline double lasso_lambda_max(const Matrix& X, const Vector& y) {
  const auto s = detail::standardize(X, y);
  if (s.Z.cols() == 0) return 0.0;
  return (s.Z.transpose() * s.yc).cwiseAbs().maxCoeff() / static_cast<double>(X.rows());
}

// Cyclic coordinate descent on (1/2n)||y_c - Z b||^2 + lambda ||b||_1 with
// standardized Z; the intercept is recovered unpenalized.
inline LassoFit lasso_fit(const Matrix& X, const Vector& y, double lambda, const LassoOptions& opt = {}) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ValidationError("lasso: lambda must be finite and >= 0");
  const auto s = detail::standardize(X, y);
  const Index p = X.cols();
  const double n = static_cast<double>(X.rows());

  LassoFit fit;
  fit.beta_std = Vector::Zero(p);
  if (opt.warm_start) {
    if (opt.warm_start->size() != p) throw ValidationError("lasso: warm start has wrong size");
    fit.beta_std = *opt.warm_start;
    for (Index j = 0; j < p; ++j)
      if (s.scale(j) == 0.0) fit.beta_std(j) = 0.0;
  }
  Vector r = s.yc - s.Z * fit.beta_std;

  while (fit.sweeps < opt.max_iter) {
    double max_change = 0.0;
    for (Index j = 0; j < p; ++j) {
      if (s.scale(j) == 0.0) continue;
      const double old = fit.beta_std(j);
      const double z = s.Z.col(j).dot(r) / n + old;
      const double updated = soft_threshold(z, lambda);
      if (updated != old) {
        r -= (updated - old) * s.Z.col(j);
        fit.beta_std(j) = updated;
        max_change = std::max(max_change, std::abs(updated - old));
      }
    }
    ++fit.sweeps;
    fit.objective.push_back(detail::lasso_objective(r, fit.beta_std, lambda));
    if (max_change < opt.tol) {
      fit.converged = true;
      break;
    }
  }

  fit.beta.resize(p);
  for (Index j = 0; j < p; ++j) fit.beta(j) = s.scale(j) > 0.0 ? fit.beta_std(j) / s.scale(j) : 0.0;
  fit.intercept = s.y_mean - s.mean.dot(fit.beta);
  return fit;
}

// Fits along a descending grid, each solve warm-started from the previous one.
inline std::vector<LassoFit> lasso_path(const Matrix& X, const Vector& y, const std::vector<double>& grid,
                                        LassoOptions opt = {}) {
  std::vector<LassoFit> out;
  out.reserve(grid.size());
  for (double lambda : grid) {
    out.push_back(lasso_fit(X, y, lambda, opt));
    opt.warm_start = out.back().beta_std;
  }
  return out;
}

// `count` points spaced geometrically from hi down to hi * ratio.
inline std::vector<double> geometric_grid(double hi, double ratio, Index count) {
  std::vector<double> grid;
  if (count < 1) return grid;
  if (count == 1) return {hi};
  for (Index i = 0; i < count; ++i) {
    grid.push_back(hi * std::pow(ratio, static_cast<double>(i) / static_cast<double>(count - 1)));
  }
  return grid;
}

}  // namespace tvpgvar

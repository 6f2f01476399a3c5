#pragma once

// Independent reference computations used by the tests. Nothing here calls
// the library routine it is checking.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "tvpgvar/core.hpp"
#include "tvpgvar/ingest.hpp"
#include "tvpgvar/weights.hpp"

namespace oracle {

using tvpgvar::Index;
using tvpgvar::Matrix;
using tvpgvar::Vector;

inline Matrix random_matrix(Index r, Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(r, c);
  for (Index j = 0; j < c; ++j)
    for (Index i = 0; i < r; ++i) m(i, j) = n(rng);
  return m;
}

inline Matrix random_spd(Index n, std::mt19937_64& rng) {
  const Matrix a = random_matrix(n, n, rng);
  return a * a.transpose() + 0.5 * Matrix::Identity(n, n);
}

// Rescales a random matrix so its spectral radius equals `radius`.
inline Matrix random_stable(Index n, std::mt19937_64& rng, double radius) {
  Matrix f = random_matrix(n, n, rng);
  const double rho = f.eigenvalues().cwiseAbs().maxCoeff();
  return f * (radius / rho);
}

// Shocked-minus-baseline simulation of G0 x_t = a + G1 x_{t-1} + u_t with a
// single impulse u_0 = impulse and no shocks afterwards. Row s is the
// difference at horizon s.
inline Matrix simulate_impulse(const Matrix& g0, const Matrix& g1, const Vector& a, const Vector& impulse,
                               Index horizon) {
  const Index N = g0.rows();
  const Eigen::FullPivLU<Matrix> lu(g0);
  Vector base = Vector::Constant(N, 0.3);
  Vector shocked = base;
  Matrix out(horizon + 1, N);
  for (Index s = 0; s <= horizon; ++s) {
    Vector rhs_b = a + g1 * base;
    Vector rhs_s = a + g1 * shocked;
    if (s == 0) rhs_s += impulse;
    base = lu.solve(rhs_b);
    shocked = lu.solve(rhs_s);
    out.row(s) = (shocked - base).transpose();
  }
  return out;
}

// Central differences of a vector function; column k is d f / d x_k.
inline Matrix jacobian_fd(const std::function<Vector(const Vector&)>& f, const Vector& x, double h) {
  const Vector f0 = f(x);
  Matrix J(f0.size(), x.size());
  for (Index k = 0; k < x.size(); ++k) {
    Vector up = x;
    Vector dn = x;
    up(k) += h;
    dn(k) -= h;
    J.col(k) = (f(up) - f(dn)) / (2.0 * h);
  }
  return J;
}

// Textbook Cholesky–Banachiewicz, row by row.
inline Matrix cholesky_naive(const Matrix& s) {
  const Index n = s.rows();
  Matrix L = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j <= i; ++j) {
      double sum = s(i, j);
      for (Index k = 0; k < j; ++k) sum -= L(i, k) * L(j, k);
      L(i, j) = i == j ? std::sqrt(sum) : sum / L(j, j);
    }
  }
  return L;
}

// OLS by normal equations with intercept prepended.
inline Vector ols_normal_equations(const Matrix& X, const Vector& y) {
  Matrix Z(X.rows(), X.cols() + 1);
  Z.col(0).setOnes();
  Z.rightCols(X.cols()) = X;
  return (Z.transpose() * Z).ldlt().solve(Z.transpose() * y);
}

inline double soft(double z, double g) { return z > g ? z - g : (z < -g ? z + g : 0.0); }

inline Matrix simulate_var1(const Vector& c, const Matrix& f, const Matrix& chol, Index T, std::mt19937_64& rng) {
  const Index n = f.rows();
  std::normal_distribution<double> nd;
  Matrix x(T, n);
  // Start at the stationary mean.
  Vector prev = (Matrix::Identity(n, n) - f).partialPivLu().solve(c);
  for (Index b = 0; b < 200; ++b) {
    Vector e(n);
    for (Index i = 0; i < n; ++i) e(i) = nd(rng);
    prev = c + f * prev + chol * e;
  }
  for (Index t = 0; t < T; ++t) {
    Vector e(n);
    for (Index i = 0; i < n; ++i) e(i) = nd(rng);
    prev = c + f * prev + chol * e;
    x.row(t) = prev.transpose();
  }
  return x;
}

// Structural GVAR data generated equation by equation: at each t the
// contemporaneous block is solved as one dense linear system built from the
// unit equations themselves (no link matrices).
struct GvarTruth {
  tvpgvar::Dims dims;
  std::vector<Vector> a;                    // per country, p
  std::vector<Matrix> phi, ge0, ge1;        // p x p
  std::vector<Matrix> gb0, gb1;             // p x l
  std::vector<double> am, phim;             // per activity
  std::vector<Eigen::RowVectorXd> gbe0, gbe1;  // 1 x p
};

inline GvarTruth random_gvar_truth(const tvpgvar::Dims& d, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto rm = [&](Index r, Index c, double s) {
    Matrix m(r, c);
    for (Index j = 0; j < c; ++j)
      for (Index i = 0; i < r; ++i) m(i, j) = s * u(rng);
    return m;
  };
  GvarTruth g;
  g.dims = d;
  const Index p = d.variables;
  const Index l = d.activities;
  for (Index k = 0; k < d.regions; ++k) {
    g.a.push_back(rm(p, 1, 0.5).col(0));
    g.phi.push_back(rm(p, p, 0.2));
    g.ge0.push_back(rm(p, p, 0.15));
    g.ge1.push_back(rm(p, p, 0.15));
    g.gb0.push_back(rm(p, l, 0.2));
    g.gb1.push_back(rm(p, l, 0.2));
  }
  for (Index m = 0; m < l; ++m) {
    g.am.push_back(0.5 * u(rng));
    g.phim.push_back(0.3 * u(rng));
    g.gbe0.push_back(rm(1, p, 0.15).row(0));
    g.gbe1.push_back(rm(1, p, 0.15).row(0));
  }
  return g;
}

// Weights drawn afresh each period (Dirichlet-like via normalized uniforms).
inline tvpgvar::WeightSequence random_weights(const tvpgvar::Dims& d, Index T, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.1, 1.0);
  tvpgvar::WeightSequence w;
  for (Index t = 0; t < T; ++t) {
    Matrix we = Matrix::Zero(d.regions, d.regions);
    if (d.regions > 1) {
      for (Index k = 0; k < d.regions; ++k) {
        for (Index i = 0; i < d.regions; ++i)
          if (i != k) we(i, k) = u(rng);
        we.col(k) /= we.col(k).sum();
      }
    }
    Matrix wb(d.regions, d.activities);
    for (Index m = 0; m < d.activities; ++m) {
      for (Index k = 0; k < d.regions; ++k) wb(k, m) = u(rng);
      wb.col(m) /= wb.col(m).sum();
    }
    w.we.push_back(we);
    w.wb.push_back(wb);
  }
  return w;
}

// Noise-free structural simulation. Unknowns x_t are ordered like the panel.
inline Matrix simulate_gvar(const GvarTruth& g, const tvpgvar::WeightSequence& w, const Vector& x0, Index T) {
  const auto& d = g.dims;
  const Index p = d.variables;
  const Index l = d.activities;
  const Index N = d.width();
  Matrix x(T, N);
  x.row(0) = x0.transpose();
  for (Index t = 1; t < T; ++t) {
    const Matrix& we = w.we[static_cast<std::size_t>(t)];
    const Matrix& we1 = w.we[static_cast<std::size_t>(t - 1)];
    const Matrix& wb = w.wb[static_cast<std::size_t>(t)];
    const Matrix& wb1 = w.wb[static_cast<std::size_t>(t - 1)];
    const Vector prev = x.row(t - 1).transpose();
    Matrix M = Matrix::Identity(N, N);
    Vector rhs = Vector::Zero(N);
    for (Index k = 0; k < d.regions; ++k) {
      const Index r0 = k * p;
      Vector star1 = Vector::Zero(p);
      for (Index i = 0; i < d.regions; ++i) {
        star1 += we1(i, k) * prev.segment(i * p, p);
        // -ge0 * w(i,k) * x_i,t moves to the left-hand side
        M.block(r0, i * p, p, p) -= we(i, k) * g.ge0[static_cast<std::size_t>(k)];
      }
      rhs.segment(r0, p) = g.a[static_cast<std::size_t>(k)] + g.phi[static_cast<std::size_t>(k)] * prev.segment(r0, p) +
                           g.ge1[static_cast<std::size_t>(k)] * star1 +
                           g.gb1[static_cast<std::size_t>(k)] * prev.tail(l);
      M.block(r0, d.regions * p, p, l) -= g.gb0[static_cast<std::size_t>(k)];
    }
    for (Index m = 0; m < l; ++m) {
      const Index r = d.regions * p + m;
      Vector star1 = Vector::Zero(p);
      for (Index k = 0; k < d.regions; ++k) {
        star1 += wb1(k, m) * prev.segment(k * p, p);
        M.block(r, k * p, 1, p) -= wb(k, m) * g.gbe0[static_cast<std::size_t>(m)];
      }
      rhs(r) = g.am[static_cast<std::size_t>(m)] + g.phim[static_cast<std::size_t>(m)] * prev(r) +
               g.gbe1[static_cast<std::size_t>(m)].dot(star1);
    }
    x.row(t) = M.fullPivLu().solve(rhs).transpose();
  }
  return x;
}

inline tvpgvar::TimeSeriesPanel make_panel(const Matrix& values, const tvpgvar::Dims& d) {
  tvpgvar::TimeSeriesPanel panel;
  for (Index k = 0; k < d.regions; ++k) panel.layout.regions.push_back("R" + std::to_string(k));
  for (Index v = 0; v < d.variables; ++v) panel.layout.variables.push_back("V" + std::to_string(v));
  for (Index m = 0; m < d.activities; ++m) panel.layout.activities.push_back("A" + std::to_string(m));
  for (Index t = 0; t < values.rows(); ++t) panel.time_index.push_back(tvpgvar::YearMonth{2000, 1}.plus_months(static_cast<int>(t)));
  panel.values = values;
  return panel;
}

// Scalar TVP AR(1) data: y_t = b_t + f_t y_{t-1} + sigma e_t.
inline Vector simulate_tvp_ar1(const Vector& b, const Vector& f, double sigma, double y0, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Vector y(b.size());
  y(0) = y0;
  for (Index t = 1; t < y.size(); ++t) y(t) = b(t) + f(t) * y(t - 1) + sigma * nd(rng);
  return y;
}

}  // namespace oracle

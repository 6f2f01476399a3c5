#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <thread>
#include <tuple>
#include <vector>

#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>

#include "tvpgvar/core.hpp"
#include "tvpgvar/ingest.hpp"
#include "tvpgvar/io.hpp"

namespace tvpgvar {

using Vector2 = Eigen::Vector2d;
using Vector4 = Eigen::Vector4d;
using Matrix2 = Eigen::Matrix2d;
using Matrix4 = Eigen::Matrix4d;
using Rng = std::mt19937_64;

// Priors of the scalar TVP equation y_t = [1, y_{t-1}] theta_t + eps_t in
// non-centred form theta_t = theta0 + sqrt(Omega) theta~_t.
struct TVPPriors {
  Vector2 m0 = Vector2::Zero();               // theta~_0 mean
  Matrix2 P0 = 1e-15 * Matrix2::Identity();   // theta~_0 covariance
  Vector4 a0 = Vector4::Zero();               // (theta0, sqrt_omega) prior mean
  // (theta0, sqrt_omega) prior covariance. Unset: diag{1 / diag((Y'Y)^{-1})}
  // with Y the current step-3 design matrix.
  std::optional<Matrix4> A0;
  double c0 = 0.01;  // precision prior shape
  double C0 = 0.01;  // precision prior rate
};

// Filter output. m and P have T entries with entry 0 the prior; innovations,
// their variances and the gains have T-1 entries, entry t-1 for period t.
struct KalmanState {
  Matrix m;                   // T x 2
  std::vector<Matrix2> P;     // T
  Vector v;                   // T-1
  Vector S;                   // T-1
  Matrix gain;                // (T-1) x 2
};

inline KalmanState kalman_forward(const Vector& y, const Vector2& theta0, const Vector2& sqrt_omega, double sigma2,
                                  const TVPPriors& priors, double state_variance = 1.0) {
  const Index T = y.size();
  if (T < 2) throw ValidationError("kalman_forward: need at least 2 observations");
  if (!(sigma2 > 0.0)) throw ValidationError("kalman_forward: sigma2 must be positive");
  KalmanState ks;
  ks.m.resize(T, 2);
  ks.P.resize(static_cast<std::size_t>(T));
  ks.v.resize(T - 1);
  ks.S.resize(T - 1);
  ks.gain.resize(T - 1, 2);
  ks.m.row(0) = priors.m0.transpose();
  ks.P[0] = priors.P0;
  const Matrix2 Q = state_variance * Matrix2::Identity();
  Vector2 m = priors.m0;
  Matrix2 P = priors.P0;
  for (Index t = 1; t < T; ++t) {
    const Eigen::RowVector2d x(1.0, y(t - 1));
    const double y_star = y(t) - x.dot(theta0);
    const Eigen::RowVector2d H = x.cwiseProduct(sqrt_omega.transpose());
    const Matrix2 P_pred = P + Q;
    const double v = y_star - H.dot(m);
    const double S = H * P_pred * H.transpose() + sigma2;
    if (!(S > 0.0) || !std::isfinite(S)) {
      throw NumericalError("kalman_forward: non-positive innovation variance at t = " + std::to_string(t));
    }
    const Vector2 K = P_pred * H.transpose() / S;
    m = m + K * v;
    P = P_pred - K * S * K.transpose();
    P = 0.5 * (P + P.transpose()).eval();
    const double min_eig = Eigen::SelfAdjointEigenSolver<Matrix2>(P, Eigen::EigenvaluesOnly).eigenvalues()(0);
    if (min_eig < -1e-10 * std::max(1.0, P.trace())) {
      throw NumericalError("kalman_forward: filtered covariance lost PSD at t = " + std::to_string(t));
    }
    ks.m.row(t) = m.transpose();
    ks.P[static_cast<std::size_t>(t)] = P;
    ks.v(t - 1) = v;
    ks.S(t - 1) = S;
    ks.gain.row(t - 1) = K.transpose();
  }
  return ks;
}

namespace detail {

// Symmetric square root via eigendecomposition so singular covariances work.
template <int N>
Eigen::Matrix<double, N, 1> draw_normal(const Eigen::Matrix<double, N, 1>& mean,
                                        const Eigen::Matrix<double, N, N>& cov, Rng& rng) {
  using Mat = Eigen::Matrix<double, N, N>;
  using Vec = Eigen::Matrix<double, N, 1>;
  const Mat sym = 0.5 * (cov + cov.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(sym);
  const Vec evals = es.eigenvalues();
  if (evals.minCoeff() < -1e-10 * std::max(1.0, evals.cwiseAbs().maxCoeff())) {
    throw NumericalError("covariance is not positive semi-definite");
  }
  std::normal_distribution<double> z;
  Vec e;
  for (int i = 0; i < N; ++i) e(i) = z(rng);
  const Vec scaled = evals.cwiseMax(0.0).cwiseSqrt().cwiseProduct(e);
  return mean + es.eigenvectors() * scaled;
}

}  // namespace detail

// Independent draws theta~_t ~ N(m_t, P_t) from the filtered moments.
inline Matrix sample_theta_tilde(const KalmanState& ks, Rng& rng) {
  const Index T = ks.m.rows();
  Matrix out(T, 2);
  for (Index t = 0; t < T; ++t) {
    const Vector2 mean = ks.m.row(t).transpose();
    const auto& P = ks.P[static_cast<std::size_t>(t)];
    if (P.isZero(0.0)) {
      out.row(t) = mean.transpose();
      continue;
    }
    try {
      out.row(t) = detail::draw_normal<2>(mean, P, rng).transpose();
    } catch (const NumericalError&) {
      throw NumericalError("sample_theta_tilde: filtered covariance not PSD at t = " + std::to_string(t));
    }
  }
  return out;
}

// Joint backward sampling (Carter-Kohn) of the random-walk states given all
// observations. This is the default state draw: independent filtered draws
// let sqrt_omega collapse to zero on drifting coefficients.
inline Matrix sample_theta_tilde_backward(const KalmanState& ks, Rng& rng, double state_variance = 1.0) {
  const Index T = ks.m.rows();
  Matrix out(T, 2);
  const Matrix2 Q = state_variance * Matrix2::Identity();
  out.row(T - 1) =
      detail::draw_normal<2>(Vector2(ks.m.row(T - 1).transpose()), ks.P[static_cast<std::size_t>(T - 1)], rng)
          .transpose();
  for (Index t = T - 2; t >= 0; --t) {
    const Matrix2& P = ks.P[static_cast<std::size_t>(t)];
    const Matrix2 J = P * (P + Q).inverse();
    const Vector2 m = ks.m.row(t).transpose();
    const Vector2 mean = m + J * (out.row(t + 1).transpose() - m);
    const Matrix2 cov = P - J * P;
    out.row(t) = detail::draw_normal<2>(mean, cov, rng).transpose();
  }
  return out;
}

// Step-3 regression: y_t on [1, y_{t-1}, theta~_{t,1}, y_{t-1} theta~_{t,2}],
// t = 1..T-1, coefficients (theta0, sqrt_omega).
inline Matrix step3_design(const Vector& y, const Matrix& theta_tilde) {
  const Index T = y.size();
  Matrix X(T - 1, 4);
  for (Index t = 1; t < T; ++t) {
    X(t - 1, 0) = 1.0;
    X(t - 1, 1) = y(t - 1);
    X(t - 1, 2) = theta_tilde(t, 0);
    X(t - 1, 3) = y(t - 1) * theta_tilde(t, 1);
  }
  return X;
}

struct NormalPosterior {
  Vector4 mean;
  Matrix4 cov;
};

// Ridge added to the posterior precision so a constant y_{t-1} (slope
// collinear with the intercept) still gives a proper posterior.
inline constexpr double kPosteriorJitter = 1e-8;

inline Matrix4 default_A0(const Matrix& design) {
  const Matrix4 gram = design.transpose() * design + kPosteriorJitter * Matrix4::Identity();
  const Matrix4 inv = gram.ldlt().solve(Matrix4::Identity());
  return inv.diagonal().cwiseInverse().asDiagonal();
}

// N(a, A): A = (Ys'Ys + A0^{-1})^{-1}, a = A (Ys' y / sigma + A0^{-1} a0),
// Ys the design scaled by 1/sigma.
inline NormalPosterior theta0_omega_posterior(const Vector& y, const Matrix& theta_tilde, double sigma2,
                                              const TVPPriors& priors) {
  if (!(sigma2 > 0.0)) throw ValidationError("theta0_omega_posterior: sigma2 must be positive");
  const Matrix X = step3_design(y, theta_tilde);
  const Vector target = y.tail(y.size() - 1);
  const double sigma = std::sqrt(sigma2);
  const Matrix Xs = X / sigma;
  const Matrix4 A0 = priors.A0 ? *priors.A0 : default_A0(X);
  Eigen::LDLT<Matrix4> a0_ldlt(A0);
  if (a0_ldlt.info() != Eigen::Success) throw NumericalError("theta0_omega_posterior: prior covariance is singular");
  const Matrix4 A0_inv = a0_ldlt.solve(Matrix4::Identity());
  const Matrix4 precision = Xs.transpose() * Xs + A0_inv + kPosteriorJitter * Matrix4::Identity();
  Eigen::LLT<Matrix4> llt(precision);
  if (llt.info() != Eigen::Success) throw RankDeficientError("theta0_omega_posterior: posterior precision not PD");
  NormalPosterior post;
  post.cov = llt.solve(Matrix4::Identity());
  post.cov = 0.5 * (post.cov + post.cov.transpose()).eval();
  post.mean = post.cov * (Xs.transpose() * target / sigma + A0_inv * priors.a0);
  return post;
}

inline std::pair<Vector2, Vector2> sample_theta0_omega(const Vector& y, const Matrix& theta_tilde, double sigma2,
                                                       const TVPPriors& priors, Rng& rng) {
  const auto post = theta0_omega_posterior(y, theta_tilde, sigma2, priors);
  const Vector4 draw = detail::draw_normal<4>(post.mean, post.cov, rng);
  return {draw.head<2>(), draw.tail<2>()};
}

struct GammaPosterior {
  double shape = 0.0;  // c_T
  double rate = 0.0;   // C_T
};

// c_T = c0 + n/2, C_T = C0 + SSR/2 for n residuals.
inline GammaPosterior sigma_posterior(const Vector& residuals, const TVPPriors& priors) {
  if (!residuals.allFinite()) throw NumericalError("sigma_posterior: non-finite residuals");
  GammaPosterior g;
  g.shape = priors.c0 + 0.5 * static_cast<double>(residuals.size());
  g.rate = priors.C0 + 0.5 * residuals.squaredNorm();
  if (!(g.rate > 0.0)) throw NumericalError("sigma_posterior: non-positive rate C_T");
  return g;
}

// Draws precision 1/sigma^2 ~ Gamma(c_T, rate C_T) and returns sigma^2.
inline double sample_sigma(const Vector& y, const Matrix& design, const Vector4& theta_star, const TVPPriors& priors,
                           Rng& rng) {
  const Vector target = y.tail(y.size() - 1);
  const auto g = sigma_posterior(target - design * theta_star, priors);
  std::gamma_distribution<double> gamma(g.shape, 1.0 / g.rate);
  double precision = gamma(rng);
  if (!(precision > 0.0)) precision = std::numeric_limits<double>::min();
  return 1.0 / precision;
}

enum class StateSampler {
  backward,  // Carter-Kohn draw from the smoothed joint distribution
  filtered,  // independent draws from N(m_t, P_t)
};

inline StateSampler parse_state_sampler(std::string_view s) {
  if (s == "backward") return StateSampler::backward;
  if (s == "filtered") return StateSampler::filtered;
  throw ValidationError("unknown state sampler '" + std::string(s) + "'");
}

inline std::string_view to_string(StateSampler s) {
  return s == StateSampler::backward ? "backward" : "filtered";
}

struct TVPEquationSpec {
  Vector y;
  Index iters = 1000;
  std::uint64_t seed = 0;
  TVPPriors priors;
  StateSampler sampler = StateSampler::backward;
};

struct TVPTrajectory {
  Vector2 theta0 = Vector2::Zero();
  Vector2 sqrt_omega = Vector2::Ones();
  Matrix theta_tilde;  // T x 2
  Matrix theta;        // T x 2, columns (b, f1)
  double sigma2 = 0.1;
};

inline Matrix reconstruct_theta(const Vector2& theta0, const Vector2& sqrt_omega, const Matrix& theta_tilde) {
  Matrix theta(theta_tilde.rows(), 2);
  for (Index t = 0; t < theta_tilde.rows(); ++t) {
    theta(t, 0) = theta0(0) + sqrt_omega(0) * theta_tilde(t, 0);
    theta(t, 1) = theta0(1) + sqrt_omega(1) * theta_tilde(t, 1);
  }
  return theta;
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

// Initialise theta0 = 0, Omega = I, sigma^2 = 0.1, then repeat: filter and
// draw theta~ (step 2), draw (theta0, sqrt_omega) (step 3), draw sigma^2
// (step 4). The last iteration's draws are returned.
inline TVPTrajectory run_algorithm1(const TVPEquationSpec& spec) {
  const Index T = spec.y.size();
  if (T < 3) throw ValidationError("run_algorithm1: need at least 3 observations");
  if (spec.iters < 1) throw ValidationError("run_algorithm1: iters must be >= 1");
  if (!spec.y.allFinite()) throw ValidationError("run_algorithm1: non-finite observations");
  Rng rng = make_rng(spec.seed);
  TVPTrajectory tr;
  for (Index it = 0; it < spec.iters; ++it) {
    try {
      const auto ks = kalman_forward(spec.y, tr.theta0, tr.sqrt_omega, tr.sigma2, spec.priors);
      tr.theta_tilde = spec.sampler == StateSampler::backward ? sample_theta_tilde_backward(ks, rng)
                                                              : sample_theta_tilde(ks, rng);
      std::tie(tr.theta0, tr.sqrt_omega) = sample_theta0_omega(spec.y, tr.theta_tilde, tr.sigma2, spec.priors, rng);
      Vector4 star;
      star << tr.theta0, tr.sqrt_omega;
      tr.sigma2 = sample_sigma(spec.y, step3_design(spec.y, tr.theta_tilde), star, spec.priors, rng);
    } catch (const NumericalError& e) {
      throw NumericalError("iteration " + std::to_string(it) + ": " + e.what());
    }
  }
  tr.theta = reconstruct_theta(tr.theta0, tr.sqrt_omega, tr.theta_tilde);
  return tr;
}

struct TVPOptions {
  Index iters = 1000;
  std::uint64_t seed = 0;
  TVPPriors priors;
  StateSampler sampler = StateSampler::backward;
  unsigned threads = 1;
};

struct TVPEstimates {
  std::vector<std::optional<TVPTrajectory>> trajectories;  // panel column order
  std::vector<std::string> errors;                         // empty string when the column succeeded

  bool ok() const {
    for (const auto& e : errors)
      if (!e.empty()) return false;
    return true;
  }
};

// Fits every panel column independently; column i uses RNG stream (seed, i)
// so results do not depend on thread scheduling.
inline TVPEstimates estimate_all(const Matrix& values, const TVPOptions& opt) {
  const Index N = values.cols();
  TVPEstimates out;
  out.trajectories.resize(static_cast<std::size_t>(N));
  out.errors.resize(static_cast<std::size_t>(N));
  std::atomic<Index> next{0};
  auto worker = [&]() {
    for (Index i = next++; i < N; i = next++) {
      TVPEquationSpec spec;
      spec.y = values.col(i);
      spec.iters = opt.iters;
      spec.priors = opt.priors;
      spec.sampler = opt.sampler;
      spec.seed = make_rng(opt.seed, static_cast<std::uint64_t>(i) + 1)();
      try {
        out.trajectories[static_cast<std::size_t>(i)] = run_algorithm1(spec);
      } catch (const std::exception& e) {
        out.errors[static_cast<std::size_t>(i)] = e.what();
      }
    }
  };
  const unsigned n_threads = std::max(1u, std::min<unsigned>(opt.threads, static_cast<unsigned>(std::max<Index>(N, 1))));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned k = 0; k < n_threads; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return out;
}

inline TVPEstimates estimate_all(const TimeSeriesPanel& panel, const TVPOptions& opt) {
  return estimate_all(panel.values, opt);
}

// --- export ----------------------------------------------------------------

// One parameter path per column: T x 2 (b, f1) over `dates`.
struct ParameterPaths {
  std::vector<YearMonth> dates;
  std::vector<std::string> columns;
  std::vector<Matrix> paths;
};

inline std::string write_parameter_csv(const ParameterPaths& pp) {
  std::string out = "date,column,b,f1\n";
  for (std::size_t c = 0; c < pp.columns.size(); ++c) {
    const auto& path = pp.paths[c];
    for (Index t = 0; t < path.rows(); ++t) {
      out += pp.dates[static_cast<std::size_t>(t)].str() + "," + pp.columns[c] + "," +
             io::format_double(path(t, 0)) + "," + io::format_double(path(t, 1)) + "\n";
    }
  }
  return out;
}

inline ParameterPaths parse_parameter_csv(const std::string& text, const std::string& source) {
  const auto table = io::parse_csv(text, source);
  const auto c_date = table.column("date", source);
  const auto c_col = table.column("column", source);
  const auto c_b = table.column("b", source);
  const auto c_f = table.column("f1", source);
  ParameterPaths pp;
  std::vector<std::vector<std::pair<double, double>>> rows;
  std::vector<std::vector<YearMonth>> dates;
  for (const auto& row : table.rows) {
    const auto date = parse_year_month(row.fields[c_date]);
    double b = 0.0;
    double f = 0.0;
    if (!date || !io::parse_double(row.fields[c_b], b) || !io::parse_double(row.fields[c_f], f)) {
      throw ValidationError(source + ": row " + std::to_string(row.line) + ": malformed record");
    }
    const auto& name = row.fields[c_col];
    auto it = std::find(pp.columns.begin(), pp.columns.end(), name);
    if (it == pp.columns.end()) {
      pp.columns.push_back(name);
      rows.emplace_back();
      dates.emplace_back();
      it = pp.columns.end() - 1;
    }
    const auto idx = static_cast<std::size_t>(it - pp.columns.begin());
    rows[idx].emplace_back(b, f);
    dates[idx].push_back(*date);
  }
  if (pp.columns.empty()) throw ValidationError(source + ": no parameter rows");
  pp.dates = dates.front();
  for (std::size_t c = 0; c < pp.columns.size(); ++c) {
    if (dates[c] != pp.dates) throw ValidationError(source + ": columns cover different dates");
    Matrix path(static_cast<Index>(rows[c].size()), 2);
    for (std::size_t t = 0; t < rows[c].size(); ++t) {
      path(static_cast<Index>(t), 0) = rows[c][t].first;
      path(static_cast<Index>(t), 1) = rows[c][t].second;
    }
    pp.paths.push_back(std::move(path));
  }
  return pp;
}

inline nlohmann::json trajectories_to_json(const TVPEstimates& est, const std::vector<std::string>& columns,
                                           const TVPOptions& opt) {
  nlohmann::json j;
  j["seed"] = opt.seed;
  j["iters"] = opt.iters;
  j["sampler"] = std::string(to_string(opt.sampler));
  j["columns"] = nlohmann::json::array();
  for (std::size_t i = 0; i < columns.size(); ++i) {
    nlohmann::json c;
    c["column"] = columns[i];
    if (const auto& tr = est.trajectories[i]) {
      c["theta0"] = {tr->theta0(0), tr->theta0(1)};
      c["sqrt_omega"] = {tr->sqrt_omega(0), tr->sqrt_omega(1)};
      c["sigma2"] = tr->sigma2;
    } else {
      c["error"] = est.errors[i];
    }
    j["columns"].push_back(std::move(c));
  }
  return j;
}

}  // namespace tvpgvar

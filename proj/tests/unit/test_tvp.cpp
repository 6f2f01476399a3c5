#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "support/oracles.hpp"
#include "tvpgvar/tvp.hpp"

using namespace tvpgvar;

TEST(Kalman, SingleStepByHand) {
  const Vector y{{0.8, 1.3}};
  const double t01 = 0.2, t02 = 0.4, s1 = 0.7, s2 = -0.3, r = 0.05;
  TVPPriors pr;
  pr.m0 = Vector2(0.1, -0.2);
  pr.P0 << 0.5, 0.1, 0.1, 0.3;
  const auto ks = kalman_forward(y, Vector2(t01, t02), Vector2(s1, s2), r, pr);

  // Scalar arithmetic of the five update formulas.
  const double p11 = 0.5 + 1.0, p12 = 0.1, p22 = 0.3 + 1.0;
  const double h1 = 1.0 * s1, h2 = 0.8 * s2;
  const double ystar = 1.3 - (t01 + 0.8 * t02);
  const double v = ystar - (h1 * 0.1 + h2 * -0.2);
  const double ph1 = p11 * h1 + p12 * h2;
  const double ph2 = p12 * h1 + p22 * h2;
  const double S = h1 * ph1 + h2 * ph2 + r;
  const double k1 = ph1 / S, k2 = ph2 / S;
  EXPECT_NEAR(ks.v(0), v, 1e-12);
  EXPECT_NEAR(ks.S(0), S, 1e-12);
  EXPECT_NEAR(ks.m(1, 0), 0.1 + k1 * v, 1e-12);
  EXPECT_NEAR(ks.m(1, 1), -0.2 + k2 * v, 1e-12);
  EXPECT_NEAR(ks.P[1](0, 0), p11 - k1 * S * k1, 1e-12);
  EXPECT_NEAR(ks.P[1](0, 1), p12 - k1 * S * k2, 1e-12);
  EXPECT_NEAR(ks.P[1](1, 1), p22 - k2 * S * k2, 1e-12);
}

TEST(Kalman, ZeroLoadingLeavesStateAtPrior) {
  const Vector y = Vector::Constant(20, 2.0);
  TVPPriors pr;
  pr.m0 = Vector2(0.3, -0.1);
  const Vector2 theta0(0.5, 0.25);
  const auto ks = kalman_forward(y, theta0, Vector2::Zero(), 0.1, pr);
  for (Index t = 0; t < 20; ++t) EXPECT_EQ(Vector2(ks.m.row(t).transpose()), pr.m0);
  for (Index t = 0; t < 19; ++t) EXPECT_DOUBLE_EQ(ks.v(t), 2.0 - (0.5 + 0.25 * 2.0));
}

TEST(Kalman, NoStateNoiseIsRecursiveLeastSquares) {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> nd;
  const Index T = 60;
  Vector y(T);
  y(0) = 0.5;
  for (Index t = 1; t < T; ++t) y(t) = 0.2 + 0.6 * y(t - 1) + 0.3 * nd(rng);
  TVPPriors pr;
  pr.m0 = Vector2(0.1, 0.1);
  pr.P0 = 10.0 * Matrix2::Identity();
  const double r = 0.09;
  const auto ks = kalman_forward(y, Vector2::Zero(), Vector2::Ones(), r, pr, 0.0);
  // Batch regularized least squares on the first t observations.
  for (Index t = 1; t < T; ++t) {
    Matrix X(t, 2);
    for (Index s = 1; s <= t; ++s) X.row(s - 1) << 1.0, y(s - 1);
    const Matrix2 prec = pr.P0.inverse() + X.transpose() * X / r;
    const Vector2 rhs = pr.P0.inverse() * pr.m0 + X.transpose() * y.segment(1, t) / r;
    const Vector2 batch = prec.ldlt().solve(rhs);
    EXPECT_LT((Vector2(ks.m.row(t).transpose()) - batch).cwiseAbs().maxCoeff(), 1e-8) << "t = " << t;
  }
}

TEST(Kalman, TracksRandomWalkStates) {
  std::mt19937_64 rng(32);
  std::normal_distribution<double> nd;
  const Index T = 300;
  const Vector2 theta0(0.0, 0.5);
  const Vector2 so(0.2, 0.005);
  Matrix states(T, 2);
  states.row(0).setZero();
  Vector y(T);
  y(0) = 0.0;
  for (Index t = 1; t < T; ++t) {
    states(t, 0) = states(t - 1, 0) + nd(rng);
    states(t, 1) = states(t - 1, 1) + nd(rng);
    y(t) = theta0(0) + so(0) * states(t, 0) + (theta0(1) + so(1) * states(t, 1)) * y(t - 1) + 0.05 * nd(rng);
  }
  const auto ks = kalman_forward(y, theta0, so, 0.0025, TVPPriors{});
  double filt = 0.0, base = 0.0;
  for (Index t = 1; t < T; ++t) {
    filt += std::pow(ks.m(t, 0) - states(t, 0), 2);
    base += std::pow(states(t, 0), 2);
  }
  EXPECT_LT(filt, 0.1 * base);
  for (const auto& P : ks.P) {
    EXPECT_EQ(P, P.transpose());
    EXPECT_GE(Eigen::SelfAdjointEigenSolver<Matrix2>(P).eigenvalues()(0), -1e-10);
  }
}

TEST(Kalman, Preconditions) {
  EXPECT_THROW(kalman_forward(Vector::Ones(1), Vector2::Zero(), Vector2::Ones(), 1.0, {}), ValidationError);
  EXPECT_THROW(kalman_forward(Vector::Ones(5), Vector2::Zero(), Vector2::Ones(), 0.0, {}), ValidationError);
}

TEST(SampleThetaTilde, DegenerateCovarianceReturnsMean) {
  KalmanState ks;
  ks.m = Matrix::Random(5, 2);
  ks.P.assign(5, Matrix2::Zero());
  Rng rng(1);
  EXPECT_EQ(sample_theta_tilde(ks, rng), ks.m);
}

TEST(SampleThetaTilde, DeterministicAndCentred) {
  KalmanState ks;
  ks.m = Matrix(1, 2);
  ks.m << 0.4, -1.2;
  Matrix2 P;
  P << 0.5, 0.2, 0.2, 0.3;
  ks.P = {P};
  Rng a(7), b(7);
  EXPECT_EQ(sample_theta_tilde(ks, a), sample_theta_tilde(ks, b));

  const int n = 100000;
  Rng rng(8);
  Vector2 sum = Vector2::Zero();
  for (int i = 0; i < n; ++i) sum += sample_theta_tilde(ks, rng).row(0).transpose();
  const Vector2 mean = sum / n;
  EXPECT_LT(std::abs(mean(0) - 0.4), 4.0 * std::sqrt(0.5 / n));
  EXPECT_LT(std::abs(mean(1) + 1.2), 4.0 * std::sqrt(0.3 / n));
}

TEST(SampleThetaTilde, BackwardDrawIsDeterministic) {
  const Vector y = Vector::LinSpaced(30, 0.0, 1.0);
  const auto ks = kalman_forward(y, Vector2::Zero(), Vector2(0.1, 0.1), 0.1, {});
  Rng a(3), b(3);
  EXPECT_EQ(sample_theta_tilde_backward(ks, a), sample_theta_tilde_backward(ks, b));
}

TEST(SampleTheta0Omega, FlatPriorZeroNoiseIsOls) {
  std::mt19937_64 rng(33);
  const Index T = 80;
  const Matrix tilde = oracle::random_matrix(T, 2, rng);
  Vector y(T);
  y(0) = 0.3;
  const Vector4 beta(0.2, 0.5, 0.1, -0.05);
  for (Index t = 1; t < T; ++t) {
    y(t) = beta(0) + beta(1) * y(t - 1) + beta(2) * tilde(t, 0) + beta(3) * y(t - 1) * tilde(t, 1);
  }
  TVPPriors pr;
  pr.A0 = 1e12 * Matrix4::Identity();
  const auto post = theta0_omega_posterior(y, tilde, 1.0, pr);
  Matrix X(T - 1, 3);
  for (Index t = 1; t < T; ++t) X.row(t - 1) << y(t - 1), tilde(t, 0), y(t - 1) * tilde(t, 1);
  const Vector ols = oracle::ols_normal_equations(X, y.tail(T - 1));
  EXPECT_LT((post.mean - Vector4(ols)).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT((post.mean - beta).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(SampleTheta0Omega, ZeroStatesFallBackToPrior) {
  const Index T = 50;
  const Vector y = Vector::LinSpaced(T, 0.1, 2.0);
  TVPPriors pr;
  Matrix4 A0 = Matrix4::Zero();
  A0.diagonal() << 4.0, 3.0, 2.0, 0.5;
  pr.A0 = A0;
  const auto post = theta0_omega_posterior(y, Matrix::Zero(T, 2), 0.2, pr);
  EXPECT_NEAR(post.cov(2, 2), 2.0, 1e-6);
  EXPECT_NEAR(post.cov(3, 3), 0.5, 1e-6);
  EXPECT_NEAR(post.cov(2, 3), 0.0, 1e-12);
  Rng rng(4);
  const auto [t0, so] = sample_theta0_omega(y, Matrix::Zero(T, 2), 0.2, pr, rng);
  EXPECT_TRUE(t0.allFinite());
  EXPECT_TRUE(so.allFinite());
}

TEST(SampleTheta0Omega, PosteriorMeanCoversTruth) {
  std::mt19937_64 gen(34);
  std::normal_distribution<double> nd;
  const Index T = 300;
  const Vector2 theta0(0.3, 0.4), so(0.05, 0.02);
  Matrix tilde(T, 2);
  tilde.row(0).setZero();
  Vector y(T);
  y(0) = 0.5;
  for (Index t = 1; t < T; ++t) {
    tilde(t, 0) = tilde(t - 1, 0) + nd(gen);
    tilde(t, 1) = tilde(t - 1, 1) + nd(gen);
    const Vector2 th = theta0 + so.cwiseProduct(Vector2(tilde.row(t).transpose()));
    y(t) = th(0) + th(1) * y(t - 1) + 0.1 * nd(gen);
  }
  const auto post = theta0_omega_posterior(y, tilde, 0.01, {});
  Rng rng(5);
  Vector4 sum = Vector4::Zero();
  Matrix4 sq = Matrix4::Zero();
  const int n = 500;
  for (int i = 0; i < n; ++i) {
    const auto [t0, s] = sample_theta0_omega(y, tilde, 0.01, {}, rng);
    Vector4 d;
    d << t0, s;
    sum += d;
    sq += d * d.transpose();
  }
  const Vector4 mean = sum / n;
  const Vector4 truth(theta0(0), theta0(1), so(0), so(1));
  for (int k = 0; k < 4; ++k) {
    const double sd = std::sqrt(post.cov(k, k));
    EXPECT_LT(std::abs(mean(k) - truth(k)), 3.0 * sd) << "coordinate " << k;
    // Draw moments agree with the stated normal.
    EXPECT_LT(std::abs(mean(k) - post.mean(k)), 4.0 * sd / std::sqrt(n));
    const double var = sq(k, k) / n - mean(k) * mean(k);
    EXPECT_NEAR(var / post.cov(k, k), 1.0, 0.2);
  }
}

TEST(SampleSigma, PlugIn) {
  TVPPriors pr;
  const auto g = sigma_posterior(Vector::Zero(100), pr);
  EXPECT_DOUBLE_EQ(g.shape, 50.01);
  EXPECT_DOUBLE_EQ(g.rate, 0.01);
  std::mt19937_64 rng(35);
  const Vector e = oracle::random_matrix(100, 1, rng).col(0);
  const Vector e2 = std::sqrt(2.0) * e;
  const double ssr = e.squaredNorm();
  EXPECT_NEAR(sigma_posterior(e2, pr).rate - sigma_posterior(e, pr).rate, ssr / 2.0, 1e-12);
}

TEST(SampleSigma, PrecisionMomentsMatchGamma) {
  std::mt19937_64 gen(36);
  const Index T = 41;
  const Vector y = oracle::random_matrix(T, 1, gen).col(0);
  const Matrix X = oracle::random_matrix(T - 1, 4, gen);
  const Vector4 star(0.1, 0.2, 0.0, -0.1);
  TVPPriors pr;
  const auto g = sigma_posterior(y.tail(T - 1) - X * star, pr);
  Rng rng(9);
  const int n = 100000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += 1.0 / sample_sigma(y, X, star, pr, rng);
  EXPECT_NEAR(sum / n, g.shape / g.rate, 0.01 * g.shape / g.rate);
}

TEST(Algorithm1, SingleIterationIsBitIdentical) {
  TVPEquationSpec spec;
  spec.y = Vector::LinSpaced(40, 0.0, 1.0).array().sin();
  spec.iters = 1;
  spec.seed = 42;
  const auto a = run_algorithm1(spec);
  const auto b = run_algorithm1(spec);
  EXPECT_EQ(a.theta, b.theta);
  EXPECT_EQ(a.sigma2, b.sigma2);
}

TEST(Algorithm1, ReconstructionIdentity) {
  std::mt19937_64 gen(37);
  TVPEquationSpec spec;
  spec.y = oracle::simulate_var1(Vector::Constant(1, 0.3), Matrix::Constant(1, 1, 0.5), Matrix::Constant(1, 1, 0.1),
                                 120, gen)
               .col(0);
  spec.iters = 20;
  spec.seed = 1;
  const auto tr = run_algorithm1(spec);
  for (Index t = 0; t < tr.theta.rows(); ++t) {
    EXPECT_EQ(tr.theta(t, 0), tr.theta0(0) + tr.sqrt_omega(0) * tr.theta_tilde(t, 0));
    EXPECT_EQ(tr.theta(t, 1), tr.theta0(1) + tr.sqrt_omega(1) * tr.theta_tilde(t, 1));
  }
  EXPECT_GT(tr.sigma2, 0.0);
}

TEST(Algorithm1, FilteredSamplerRuns) {
  TVPEquationSpec spec;
  spec.y = Vector::LinSpaced(60, 0.0, 1.0).array().cos();
  spec.iters = 5;
  spec.sampler = StateSampler::filtered;
  const auto tr = run_algorithm1(spec);
  EXPECT_TRUE(tr.theta.allFinite());
  EXPECT_THROW(parse_state_sampler("smoothed"), ValidationError);
}

TEST(Algorithm1, Preconditions) {
  TVPEquationSpec spec;
  spec.y = Vector::Ones(2);
  EXPECT_THROW(run_algorithm1(spec), ValidationError);
  spec.y = Vector::Ones(10);
  spec.iters = 0;
  EXPECT_THROW(run_algorithm1(spec), ValidationError);
}

TEST(EstimateAll, ShapesOrderAndDeterminism) {
  std::mt19937_64 gen(38);
  TVPOptions opt;
  opt.iters = 5;
  opt.seed = 11;
  const Matrix one = oracle::random_matrix(50, 1, gen);
  const auto single = estimate_all(one, opt);
  ASSERT_EQ(single.trajectories.size(), 1u);
  EXPECT_TRUE(single.ok());

  Matrix panel = oracle::random_matrix(50, 10, gen);
  const auto a = estimate_all(panel, opt);
  ASSERT_EQ(a.trajectories.size(), 10u);
  opt.threads = 4;
  const auto b = estimate_all(panel, opt);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(a.trajectories[i]->theta, b.trajectories[i]->theta);
    EXPECT_EQ(a.trajectories[i]->theta.rows(), 50);
  }
  // Column 3's fit depends only on column 3 and its position.
  Matrix other = oracle::random_matrix(50, 10, gen);
  other.col(3) = panel.col(3);
  const auto c = estimate_all(other, opt);
  EXPECT_EQ(c.trajectories[3]->theta, a.trajectories[3]->theta);
  EXPECT_NE(c.trajectories[2]->theta, a.trajectories[2]->theta);
}

TEST(EstimateAll, FailuresAreCollected) {
  std::mt19937_64 gen(39);
  Matrix panel = oracle::random_matrix(30, 3, gen);
  panel(4, 1) = std::nan("");
  TVPOptions opt;
  opt.iters = 2;
  const auto est = estimate_all(panel, opt);
  EXPECT_FALSE(est.ok());
  EXPECT_TRUE(est.trajectories[0].has_value());
  EXPECT_FALSE(est.trajectories[1].has_value());
  EXPECT_TRUE(est.trajectories[2].has_value());
  EXPECT_FALSE(est.errors[1].empty());
}

TEST(ParameterCsv, RoundTrip) {
  ParameterPaths pp;
  pp.dates = {{2001, 1}, {2001, 2}, {2001, 3}};
  pp.columns = {"A:X", "__COMMON__:OIL"};
  std::mt19937_64 gen(40);
  pp.paths = {oracle::random_matrix(3, 2, gen), oracle::random_matrix(3, 2, gen)};
  const auto back = parse_parameter_csv(write_parameter_csv(pp), "p.csv");
  EXPECT_EQ(back.dates, pp.dates);
  EXPECT_EQ(back.columns, pp.columns);
  EXPECT_EQ(back.paths[0], pp.paths[0]);
  EXPECT_EQ(back.paths[1], pp.paths[1]);
}

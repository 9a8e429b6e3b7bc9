#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "stgc/f_distribution.hpp"
#include "stgc/granger.hpp"

using namespace stgc;

namespace {

Vector noise(std::mt19937_64& rng, Eigen::Index n, double sd = 1.0) {
  std::normal_distribution<double> g(0.0, sd);
  Vector v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

Vector ar1(std::mt19937_64& rng, Eigen::Index n, double phi) {
  Vector e = noise(rng, n), v(n);
  v(0) = e(0);
  for (Eigen::Index t = 1; t < n; ++t) v(t) = phi * v(t - 1) + e(t);
  return v;
}

}  // namespace

TEST(FTail, ReferenceValues) {
  EXPECT_EQ(f_upper_tail(0.0, 3, 7), 1.0);
  EXPECT_NEAR(f_upper_tail(1.0, 6, 6), 0.5, 1e-12);
  EXPECT_NEAR(f_upper_tail(4.9646, 1, 10), 0.05, 2e-3);
  EXPECT_NEAR(f_upper_tail(3.8415, 1, 1000000), 0.05, 1e-3);
  EXPECT_EQ(f_upper_tail(std::numeric_limits<double>::infinity(), 2, 9), 0.0);
  EXPECT_THROW(f_upper_tail(-1.0, 2, 9), InputError);
}

TEST(FTail, AgreesWithQuadrature) {
  for (double f : {0.2, 0.9, 1.7, 3.0, 6.5}) {
    for (auto [d1, d2] : {std::pair{1, 10}, {3, 40}, {5, 1089}, {12, 25}}) {
      EXPECT_NEAR(f_upper_tail(f, d1, d2), oracle::f_tail_quadrature(f, d1, d2), 1e-8)
          << "f=" << f << " df=" << d1 << "," << d2;
    }
  }
}

TEST(FTail, MonotoneInF) {
  double prev = 1.0;
  for (int i = 0; i <= 1000; ++i) {
    double p = f_upper_tail(i * 0.02, 5, 200);
    ASSERT_LE(p, prev);
    prev = p;
  }
}

TEST(FTail, IncompleteBetaSymmetry) {
  for (double x : {0.1, 0.35, 0.8})
    EXPECT_NEAR(regularized_incomplete_beta(2.5, 4.0, x) + regularized_incomplete_beta(4.0, 2.5, 1.0 - x), 1.0, 1e-13);
}

TEST(Ols, ExactAr1Recovery) {
  Vector y(40);
  y(0) = 8.0;
  for (Eigen::Index t = 1; t < 40; ++t) y(t) = 0.5 * y(t - 1);
  auto fit = fit_restricted(y, 1);
  ASSERT_EQ(fit.status, FitStatus::ok);
  EXPECT_NEAR(fit.coefficients(1), 0.5, 1e-8);
  EXPECT_NEAR(fit.coefficients(0), 0.0, 1e-8);
  EXPECT_NEAR(fit.rss, 0.0, 1e-8);
}

TEST(Ols, WhiteNoiseCoefficientsNearZero) {
  std::mt19937_64 rng(12);
  Vector y = noise(rng, 4000);
  auto fit = fit_restricted(y, 2);
  EXPECT_LT(std::abs(fit.coefficients(1)), 0.05);
  EXPECT_LT(std::abs(fit.coefficients(2)), 0.05);
  const double n = static_cast<double>(fit.n_obs);
  Vector yc = y.tail(fit.n_obs).array() - y.tail(fit.n_obs).mean();
  EXPECT_NEAR(fit.rss / (n * yc.squaredNorm() / n), 1.0, 0.01);
}

TEST(Ols, DegenerateInputs) {
  EXPECT_FALSE(fit_restricted(Vector::Constant(60, 4.0), 2).usable());
  std::mt19937_64 rng(1);
  Vector y = ar1(rng, 100, 0.5);
  EXPECT_FALSE(fit_unrestricted(y, y, 2).usable());
  auto r = granger_test(y, y, GrangerConfig{2, 0.05});
  EXPECT_EQ(r.status, GrangerStatus::degenerate);
  EXPECT_FALSE(r.significant);
  EXPECT_THROW(fit_restricted(Vector::Ones(20), 2), InputError);
}

TEST(Ols, MatchesQrOracle) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const int m = 1 + trial % 5;
    Vector x = ar1(rng, 300, 0.6), y = ar1(rng, 300, 0.3);
    y.tail(299) += 0.4 * x.head(299);
    auto fit = fit_unrestricted(y, x, m);
    auto [beta, rss] = oracle::ols_qr(detail::lagged_design({&y, &x}, m), y.tail(300 - m));
    ASSERT_LT((fit.coefficients - beta).norm(), 1e-8 * (1 + beta.norm()));
    ASSERT_NEAR(fit.rss, rss, 1e-8 * rss);
  }
}

TEST(Ols, CausalCoefficientRecovered) {
  std::mt19937_64 rng(31);
  Vector x = noise(rng, 1000);
  Vector y = Vector::Zero(1000);
  Vector tiny = noise(rng, 1000, 1e-3);
  for (Eigen::Index t = 1; t < 1000; ++t) y(t) = 0.8 * x(t - 1) + tiny(t);
  auto u = fit_unrestricted(y, x, 3);
  auto r = fit_restricted(y, 3);
  // y lags carry x at one extra lag, so only the x lag-1 weight is sharply identified.
  EXPECT_NEAR(u.coefficients(4), 0.8, 1e-3);
  EXPECT_LT(std::abs(u.coefficients(5)), 0.05);
  EXPECT_LT(std::abs(u.coefficients(6)), 0.05);
  EXPECT_LT(u.rss, 1e-4 * r.rss);
  // Higher-precision reference for the whole coefficient vector.
  using LMatrix = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
  const Matrix design = detail::lagged_design({&y, &x}, 3);
  LMatrix a(design.rows(), design.cols() + 1);
  a.col(0).setOnes();
  a.rightCols(design.cols()) = design.cast<long double>();
  Eigen::Matrix<long double, Eigen::Dynamic, 1> target = y.tail(997).cast<long double>();
  Eigen::Matrix<long double, Eigen::Dynamic, 1> beta = a.colPivHouseholderQr().solve(target);
  for (Eigen::Index k = 0; k < beta.size(); ++k) EXPECT_NEAR(u.coefficients(k), static_cast<double>(beta(k)), 1e-6);
}

TEST(Ols, NestingOptimalityAndIndependentCause) {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> order(1, 6);
  int near = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const int m = order(rng);
    Vector y = ar1(rng, 150, 0.5), x = noise(rng, 150);
    auto r = fit_restricted(y, m);
    auto u = fit_unrestricted(y, x, m);
    ASSERT_LE(u.rss, r.rss * (1 + 1e-9));
    if (u.rss > 0.85 * r.rss) ++near;
    for (Eigen::Index k = 0; k < u.coefficients.size(); ++k)
      for (double d : {-1e-3, 1e-3}) {
        Vector c = u.coefficients;
        c(k) += d;
        ASSERT_GE(oracle::lagged_rss(y, {&y, &x}, m, c), u.rss);
      }
  }
  EXPECT_GT(near, 280);
}

TEST(FTest, Contract) {
  RegressionFit r{Vector(), 10.0, 100, 4}, u{Vector(), 10.0, 100, 7};
  auto res = f_test(r, u, 3);
  EXPECT_EQ(res.f_stat, 0.0);
  EXPECT_EQ(res.p_value, 1.0);
  EXPECT_EQ(res.df2, 100 - 7);
  u.rss = 0.0;
  res = f_test(r, u, 3);
  EXPECT_TRUE(std::isinf(res.f_stat));
  EXPECT_EQ(res.p_value, 0.0);
  EXPECT_TRUE(res.significant);
  r.rss = 0.0;
  EXPECT_EQ(f_test(r, u, 3).status, GrangerStatus::undecidable);
  u.rss = 4.0;
  r.rss = 8.0;
  res = f_test(r, u, 3, 0.05);
  EXPECT_NEAR(res.f_stat, (4.0 / 3) / (4.0 / 93), 1e-12);
  EXPECT_EQ(res.significant, res.p_value < 0.05);
}

TEST(Granger, ScaleEquivariance) {
  std::mt19937_64 rng(17);
  Vector x = ar1(rng, 400, 0.7), y = ar1(rng, 400, 0.2);
  y.tail(398) += 0.3 * x.head(398);
  auto base = granger_test(x, y, GrangerConfig{3, 0.05});
  for (double c : {1e-3, 0.5, 7.0, 1e4}) {
    auto s = granger_test(Vector(c * x), Vector(c * y), GrangerConfig{3, 0.05});
    EXPECT_NEAR(s.f_stat, base.f_stat, 1e-8 * base.f_stat);
    EXPECT_NEAR(s.p_value, base.p_value, 1e-8 * std::max(base.p_value, 1e-300));
  }
}

TEST(Granger, DetectsDirection) {
  std::mt19937_64 rng(23);
  Vector x = ar1(rng, 600, 0.5), y = noise(rng, 600, 0.5);
  y.tail(599) += 0.7 * x.head(599);
  EXPECT_TRUE(granger_test(x, y, GrangerConfig{2, 0.05}).significant);
  EXPECT_FALSE(granger_test(y, x, GrangerConfig{2, 0.01}).significant);
}

TEST(Granger, NullRejectionNearAlpha) {
  std::mt19937_64 rng(2024);
  int rejections = 0;
  const int trials = 10000;
  for (int i = 0; i < trials; ++i) {
    Vector x = noise(rng, 200), y = noise(rng, 200);
    rejections += granger_test(x, y, GrangerConfig{5, 0.05}).significant;
  }
  // Binomial sd at 10000 trials is about 0.0022.
  EXPECT_NEAR(rejections / static_cast<double>(trials), 0.05, 0.0066);
}

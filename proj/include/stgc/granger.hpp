#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>

#include "stgc/alignment.hpp"
#include "stgc/data_model.hpp"
#include "stgc/error.hpp"
#include "stgc/f_distribution.hpp"

namespace stgc {

struct GrangerConfig {
  int var_order = 5;    // m: lags of each series in the autoregressions
  double alpha = 0.05;  // significance level

  void validate() const {
    if (var_order < 1) throw InputError("var_order must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("alpha must lie in (0, 1)");
  }
};

enum class FitStatus {
  ok,
  ridge,       // ill-conditioned normal equations, solved with a small ridge term
  degenerate,  // constant or collinear regressors; no coefficients
};

/// OLS fit of y[t] on an intercept and lagged regressors.
/// coefficients = [intercept, y lags 1..m, (x lags 1..m)].
struct RegressionFit {
  Vector coefficients;
  double rss = 0.0;
  std::size_t n_obs = 0;
  std::size_t n_params = 0;
  FitStatus status = FitStatus::ok;

  bool usable() const { return status != FitStatus::degenerate; }
};

namespace detail {

// Relative Cholesky pivots (1 - R^2 of a column on the preceding ones) below
// these thresholds mean exact collinearity / poor conditioning respectively.
inline constexpr double kCollinearPivot = 1e-12;
inline constexpr double kRidgePivot = 1e-8;

/// Lagged design: column block b holds series b at lags 1..m, rows t = m..L-1.
inline Matrix lagged_design(std::initializer_list<const Vector*> series, int m) {
  const auto len = series.begin()[0]->size();
  const auto rows = len - m;
  Matrix x(rows, static_cast<Eigen::Index>(series.size()) * m);
  Eigen::Index col = 0;
  for (const Vector* s : series)
    for (int lag = 1; lag <= m; ++lag) x.col(col++) = s->segment(m - lag, rows);
  return x;
}

inline RegressionFit ols_with_intercept(const Matrix& x, const Vector& y) {
  const auto n = x.rows();
  const auto p = x.cols();
  RegressionFit fit;
  fit.n_obs = static_cast<std::size_t>(n);
  fit.n_params = static_cast<std::size_t>(p + 1);

  // Centering decouples the intercept; scaling to unit column norm makes the
  // pivot thresholds scale-free.
  const Eigen::RowVectorXd x_mean = x.colwise().mean();
  const double y_mean = y.mean();
  const Matrix xc = x.rowwise() - x_mean;
  const Vector yc = y.array() - y_mean;
  const Vector norms = xc.colwise().norm().transpose();
  for (Eigen::Index j = 0; j < p; ++j)
    if (!(norms(j) > 0.0) || norms(j) <= 1e-12 * (std::abs(x_mean(j)) + 1.0) * std::sqrt(double(n))) {
      fit.status = FitStatus::degenerate;
      return fit;
    }
  const Matrix xs = xc * norms.cwiseInverse().asDiagonal();
  Matrix gram = xs.transpose() * xs;
  const Vector rhs = xs.transpose() * yc;

  Eigen::LLT<Matrix> llt(gram);
  double min_pivot = 0.0;
  if (llt.info() == Eigen::Success) {
    min_pivot = llt.matrixLLT().diagonal().array().square().minCoeff();
  } else {
    min_pivot = -1.0;
  }
  if (min_pivot < kCollinearPivot) {
    fit.status = FitStatus::degenerate;
    return fit;
  }
  if (min_pivot < kRidgePivot) {
    gram.diagonal().array() += 1e-8 * gram.trace();
    llt.compute(gram);
    if (llt.info() != Eigen::Success) {
      fit.status = FitStatus::degenerate;
      return fit;
    }
    fit.status = FitStatus::ridge;
  }
  const Vector beta = norms.cwiseInverse().asDiagonal() * llt.solve(rhs);
  const Vector resid = yc - xc * beta;
  fit.rss = resid.squaredNorm();
  fit.coefficients.resize(p + 1);
  fit.coefficients(0) = y_mean - x_mean.dot(beta);
  fit.coefficients.tail(p) = beta;
  return fit;
}

inline void check_fit_length(Eigen::Index len, int m) {
  if (m < 1) throw InputError("var_order must be >= 1");
  if (static_cast<std::size_t>(len) < min_aligned_length(m))
    throw InputError("series of length " + std::to_string(len) + " is too short for var_order " + std::to_string(m) +
                     " (need " + std::to_string(min_aligned_length(m)) + ")");
}

}  // namespace detail

/// Effect-only autoregression: y[t] on (1, y[t-1..t-m]).
inline RegressionFit fit_restricted(const Vector& y, int m) {
  detail::check_fit_length(y.size(), m);
  return detail::ols_with_intercept(detail::lagged_design({&y}, m), y.tail(y.size() - m));
}

/// Augmented autoregression: y[t] on (1, y[t-1..t-m], x[t-1..t-m]).
inline RegressionFit fit_unrestricted(const Vector& y, const Vector& x, int m) {
  if (x.size() != y.size()) throw InputError("cause and effect series must have equal length");
  detail::check_fit_length(y.size(), m);
  return detail::ols_with_intercept(detail::lagged_design({&y, &x}, m), y.tail(y.size() - m));
}

enum class GrangerStatus {
  ok,
  degenerate,   // one of the fits was rank deficient
  undecidable,  // both fits are exact (zero residuals)
};

struct GrangerResult {
  double f_stat = 0.0;
  double p_value = 1.0;
  int df1 = 0;
  int df2 = 0;
  bool significant = false;
  double rss_restricted = 0.0;
  double rss_unrestricted = 0.0;
  bool ridge = false;
  GrangerStatus status = GrangerStatus::ok;
};

/// Nested-model F-test of the augmented fit against the effect-only fit.
inline GrangerResult f_test(const RegressionFit& restricted, const RegressionFit& unrestricted, int m,
                            double alpha = 0.05) {
  GrangerResult r;
  r.df1 = m;
  r.ridge = restricted.status == FitStatus::ridge || unrestricted.status == FitStatus::ridge;
  if (!restricted.usable() || !unrestricted.usable()) {
    r.status = GrangerStatus::degenerate;
    return r;
  }
  if (restricted.n_obs != unrestricted.n_obs) throw InputError("F-test fits must share one observation window");
  const auto df2 = static_cast<long long>(unrestricted.n_obs) - 2LL * m - 1;
  if (df2 < 1) throw InputError("F-test needs n_obs - 2m - 1 >= 1");
  r.df2 = static_cast<int>(df2);
  r.rss_restricted = restricted.rss;
  r.rss_unrestricted = unrestricted.rss;

  if (unrestricted.rss == 0.0) {
    if (restricted.rss == 0.0) {
      r.status = GrangerStatus::undecidable;
      return r;
    }
    r.f_stat = std::numeric_limits<double>::infinity();
    r.p_value = 0.0;
    r.significant = true;
    return r;
  }
  // Nesting guarantees rss_u <= rss_r up to rounding.
  const double gain = std::max(0.0, restricted.rss - unrestricted.rss);
  r.f_stat = (gain / m) / (unrestricted.rss / static_cast<double>(df2));
  r.p_value = f_upper_tail(r.f_stat, m, r.df2);
  r.significant = r.p_value < alpha;
  return r;
}

/// Does `x` Granger-cause `y`? Both series are used as given (no alignment).
inline GrangerResult granger_test(const Vector& x, const Vector& y, const GrangerConfig& cfg) {
  cfg.validate();
  auto restricted = fit_restricted(y, cfg.var_order);
  auto unrestricted = fit_unrestricted(y, x, cfg.var_order);
  return f_test(restricted, unrestricted, cfg.var_order, cfg.alpha);
}

inline GrangerResult granger_test(const AlignedPair& pair, const GrangerConfig& cfg) {
  return granger_test(pair.cause, pair.effect, cfg);
}

}  // namespace stgc

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "narnet/estimation.hpp"
#include "narnet/parallel.hpp"
#include "narnet/rng.hpp"

namespace narnet {

// ---------------------------------------------------------------------------
// Residual bootstrap

struct BootstrapOls {};
struct BootstrapEglsSar {
  Matrix phi;
  SarQmleOptions qmle{};
};
using BootstrapEstimator = std::variant<BootstrapOls, BootstrapEglsSar>;

struct BootstrapOptions {
  int b_reps = 500;
  double level = 0.95;
  std::uint64_t seed = 0;
  int threads = 1;
  /// Burn-in of the bootstrap path when q > 1 (covariates held at zero).
  int burn_in = 50;
  /// Ridge penalty for the fit and every refit.
  std::optional<RidgePenalty> penalty;
};

struct BootstrapResult {
  FitResult fit;            // fit on the observed data
  Matrix draws;             // successful replicates x free coefficients
  std::vector<Interval> percentile_cis;  // padded layout, zero-width at padding
  int b_reps = 0;
  int n_failed = 0;
  double level = 0.95;
};

namespace detail {

/// Order statistic at probability prob (inverse empirical CDF).
inline double empirical_quantile(const std::vector<double>& sorted, double prob) {
  const auto n = static_cast<double>(sorted.size());
  auto idx = static_cast<long>(std::ceil(prob * n - 1e-9)) - 1;
  idx = std::clamp(idx, 0L, static_cast<long>(sorted.size()) - 1);
  return sorted[static_cast<std::size_t>(idx)];
}

/// Bootstrap path X*: T rows driven by resampled residuals, observed Y reused.
inline Matrix bootstrap_path(const NarSpec& fitted, const NarData& data, const Matrix& centered, int burn_in,
                             CounterRng& rng) {
  const int n = fitted.n_nodes;
  const int q = fitted.q();
  const int t_len = data.n_times();
  const auto pool = static_cast<std::uint64_t>(centered.rows());
  auto draw = [&]() -> Vector { return centered.row(static_cast<Eigen::Index>(rng() % pool)).transpose(); };

  std::vector<Matrix> g(q);
  for (int l = 1; l <= q; ++l) g[l - 1] = lag_matrix(fitted, l);
  auto step = [&](const Matrix& hist, int row, const Vector* y_row_gamma) {
    Vector xt = draw();
    for (int l = 1; l <= q; ++l) xt.noalias() += g[l - 1] * hist.row(row - l).transpose();
    if (y_row_gamma) xt += *y_row_gamma;
    return xt;
  };

  if (q == 1) {
    // X*_0 = eps*_1, then the recursion.
    Matrix x(t_len, n);
    x.row(0) = draw().transpose();
    for (int t = 1; t < t_len; ++t) {
      const Vector cov = fitted.gamma.cwiseProduct(data.covariates_at(t)).rowwise().sum();
      x.row(t) = step(x, t, &cov).transpose();
    }
    return x;
  }
  // q initial draws, burn-in with zero covariates, then the observed span.
  const int pre = q + burn_in;
  Matrix hist(pre + t_len, n);
  for (int r = 0; r < q; ++r) hist.row(r) = draw().transpose();
  for (int r = q; r < pre; ++r) hist.row(r) = step(hist, r, nullptr).transpose();
  for (int t = 0; t < t_len; ++t) {
    const Vector cov = fitted.gamma.cwiseProduct(data.covariates_at(t)).rowwise().sum();
    hist.row(pre + t) = step(hist, pre + t, &cov).transpose();
  }
  return hist.bottomRows(t_len);
}

}  // namespace detail

/// Residual bootstrap: fit, center residuals, resample them with replacement,
/// rebuild the path recursively from the fitted model and refit with the same
/// estimator. For EGLS the fitted Sigma(rho_hat) is held fixed in every refit.
inline BootstrapResult residual_bootstrap(const NarData& data, const Matrix& w, LagOrders orders,
                                          const BootstrapEstimator& estimator, const BootstrapOptions& opt = {}) {
  if (opt.b_reps < 100) throw DataError("residual_bootstrap: b_reps must be >= 100");
  detail::require(opt.level > 0.0 && opt.level < 1.0, "residual_bootstrap: level must be in (0, 1)");
  detail::require(opt.burn_in >= 0, "residual_bootstrap: burn_in must be >= 0");

  BootstrapResult out;
  out.b_reps = opt.b_reps;
  out.level = opt.level;
  std::unique_ptr<CovarianceOperator> sigma;
  const bool egls = std::holds_alternative<BootstrapEglsSar>(estimator);
  if (egls) {
    const auto& e = std::get<BootstrapEglsSar>(estimator);
    EglsOptions eo;
    eo.penalty = opt.penalty;
    out.fit = fit_egls(data, w, orders, SarCovSpec{e.phi, e.qmle}, eo);
    const auto& sar = *out.fit.sigma_used.sar;
    sigma = std::make_unique<SarCovariance>(sar.rho_hat, sar.sigma_u2_hat, sar.phi);
  } else {
    out.fit = opt.penalty ? fit_ridge_ols(data, w, orders, *opt.penalty) : fit_ols(data, w, orders);
  }

  Matrix centered = out.fit.residuals;
  centered.rowwise() -= centered.colwise().mean();
  const NarSpec fitted = unflatten(out.fit.beta_hat, w);
  const std::optional<RidgePenalty> pen = out.fit.penalties;

  const auto k = static_cast<Eigen::Index>(out.fit.free_indices.size());
  Matrix all(opt.b_reps, k);
  std::vector<char> ok(static_cast<std::size_t>(opt.b_reps), 0);
  const CounterRng root = CounterRng::stream(opt.seed, {0xB007u});

  parallel_for(opt.b_reps, opt.threads, [&](int b) {
    CounterRng rng = root.substream(static_cast<std::uint64_t>(b));
    NarData star{detail::bootstrap_path(fitted, data, centered, opt.burn_in, rng), data.y};
    FitOptions fo;
    fo.compute_vcov = false;
    try {
      FitResult refit;
      if (egls)
        refit = pen ? fit_ridge_gls(star, w, orders, *sigma, *pen, fo) : fit_gls(star, w, orders, *sigma, fo);
      else
        refit = pen ? fit_ridge_ols(star, w, orders, *pen, fo) : fit_ols(star, w, orders, fo);
      all.row(b) = refit.beta_free().transpose();
      ok[static_cast<std::size_t>(b)] = 1;
    } catch (const NumericalError&) {
    }
  });

  const int n_ok = static_cast<int>(std::count(ok.begin(), ok.end(), 1));
  out.n_failed = opt.b_reps - n_ok;
  if (out.n_failed > 0.05 * opt.b_reps)
    throw NumericalError("residual_bootstrap: " + std::to_string(out.n_failed) + " of " +
                         std::to_string(opt.b_reps) + " replicates failed (more than 5%)");
  out.draws.resize(n_ok, k);
  for (int b = 0, r = 0; b < opt.b_reps; ++b)
    if (ok[static_cast<std::size_t>(b)]) out.draws.row(r++) = all.row(b);

  const double alpha = 1.0 - opt.level;
  out.percentile_cis.assign(static_cast<std::size_t>(out.fit.layout().size()), Interval{});
  std::vector<double> col(static_cast<std::size_t>(n_ok));
  for (Eigen::Index j = 0; j < k; ++j) {
    for (int r = 0; r < n_ok; ++r) col[static_cast<std::size_t>(r)] = out.draws(r, j);
    std::sort(col.begin(), col.end());
    out.percentile_cis[static_cast<std::size_t>(out.fit.free_indices[static_cast<std::size_t>(j)])] = {
        detail::empirical_quantile(col, alpha / 2.0), detail::empirical_quantile(col, 1.0 - alpha / 2.0)};
  }
  return out;
}

// ---------------------------------------------------------------------------
// Lag-order selection

struct LagSelection {
  int q_hat = 0;
  std::vector<double> bic_values;  // index q - 1; NaN where the fit failed
  std::vector<bool> regularized;   // log-determinant needed the delta I ridge
  bool any_regularized() const { return std::any_of(regularized.begin(), regularized.end(), [](bool b) { return b; }); }
};

/// BIC(q) = log|Sigma_hat(q)| + (2Nq + p) log T / T for NAR(q, q), q = 1..qmax,
/// every candidate fitted by OLS on the window of the largest model.
inline LagSelection select_q_bic(const NarData& data, const Matrix& w, int qmax) {
  detail::require(qmax >= 1, "select_q_bic: qmax must be >= 1");
  data.validate();
  if (data.n_times() < qmax + 2) throw DataError("select_q_bic: too few observations for qmax");
  const int n = data.n_nodes();
  LagSelection sel;
  double best = std::numeric_limits<double>::infinity();
  for (int q = 1; q <= qmax; ++q) {
    FitOptions fo;
    fo.compute_vcov = false;
    fo.first_row = qmax;
    double bic = std::numeric_limits<double>::quiet_NaN();
    bool reg = false;
    try {
      const FitResult fit = fit_ols(data, w, {q, q}, fo);
      Matrix s = fit.sigma_hat;
      Eigen::LLT<Matrix> llt(s);
      auto pivots_ok = [&] {
        if (llt.info() != Eigen::Success) return false;
        const Vector d = Matrix(llt.matrixL()).diagonal();
        return d.cwiseAbs2().minCoeff() > 1e-12 * d.cwiseAbs2().maxCoeff();
      };
      if (!pivots_ok()) {
        const double delta = 1e-8 * s.trace() / n;
        if (!(delta > 0.0)) throw SingularGramError("zero residual covariance");
        s.diagonal().array() += delta;
        llt.compute(s);
        reg = true;
        if (llt.info() != Eigen::Success) throw SingularGramError("residual covariance not PD");
      }
      const double logdet = 2.0 * Matrix(llt.matrixL()).diagonal().array().log().sum();
      const double t = fit.t_eff;
      bic = logdet + (2.0 * n * q + data.p()) * std::log(t) / t;
    } catch (const NumericalError&) {
      reg = true;
    }
    sel.bic_values.push_back(bic);
    sel.regularized.push_back(reg);
    if (std::isfinite(bic) && bic < best) {
      best = bic;
      sel.q_hat = q;
    }
  }
  if (sel.q_hat == 0) throw NumericalError("select_q_bic: every candidate lag order is singular");
  return sel;
}

// ---------------------------------------------------------------------------
// Forecasting

/// X_hat_t = Z_{t-1} beta_hat. history holds at least q rows, the last one
/// being X_{t-1}; y_current is the N x p covariate block for the equation.
inline Vector forecast_one_step(const FitResult& fit, const Matrix& w, const Matrix& history, const Matrix& y_current) {
  const CoefLayout& layout = fit.layout();
  const int q = layout.q();
  const int n = layout.n_nodes();
  if (history.rows() < q)
    throw DataError("forecast_one_step: need " + std::to_string(q) + " rows of history, got " +
                    std::to_string(history.rows()));
  detail::require(history.cols() == n, "forecast_one_step: history must have N columns");
  detail::require(y_current.rows() == n && y_current.cols() == layout.p(), "forecast_one_step: y must be N x p");
  const NarSpec spec = unflatten(fit.beta_hat, w);
  Vector out = spec.gamma.cwiseProduct(y_current).rowwise().sum();
  for (int l = 1; l <= q; ++l) out.noalias() += lag_matrix(spec, l) * history.row(history.rows() - l).transpose();
  return out;
}

/// One-step forecasts for rows [test_start, T) from realized lags.
inline Matrix forecast_window(const FitResult& fit, const Matrix& w, const NarData& data, int test_start) {
  const int q = fit.layout().q();
  if (test_start < q) throw DataError("forecast: test window must leave q rows of history");
  if (test_start >= data.n_times()) throw DataError("forecast: test window is empty");
  const RegressorPanel panel(data, w, fit.layout(), test_start);
  return panel.fitted(fit.beta_free());
}

/// (N |test|)^{-1} sum_{t in test} ||X_t - Z_{t-1} beta_hat||^2 with beta_hat fixed.
inline double pmse(const FitResult& fit, const Matrix& w, const NarData& data, int test_start) {
  const Matrix pred = forecast_window(fit, w, data, test_start);
  const Matrix err = data.x.bottomRows(pred.rows()) - pred;
  return err.squaredNorm() / static_cast<double>(err.size());
}

}  // namespace narnet

#pragma once

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "narnet/error_covariance.hpp"
#include "narnet/nar_model.hpp"
#include "narnet/panel.hpp"

namespace narnet {

/// Block-diagonal ridge penalty M: lambda1 on self-lag blocks, lambda2 on
/// network-lag blocks, lambda3 on covariate blocks. Enters as T * M.
struct RidgePenalty {
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double lambda3 = 0.0;

  static RidgePenalty uniform(double lambda) { return {lambda, lambda, lambda}; }

  /// lambda = T^{-0.6}, which is o(1 / sqrt(T)).
  static RidgePenalty default_for(int t_eff) { return uniform(std::pow(static_cast<double>(t_eff), -0.6)); }

  bool is_zero() const { return lambda1 == 0.0 && lambda2 == 0.0 && lambda3 == 0.0; }

  void validate() const {
    if (lambda1 < 0.0 || lambda2 < 0.0 || lambda3 < 0.0) throw DataError("ridge penalties must be >= 0");
  }

  double for_kind(CoefKind kind) const {
    switch (kind) {
      case CoefKind::a: return lambda1;
      case CoefKind::b: return lambda2;
      case CoefKind::gamma: return lambda3;
    }
    return 0.0;
  }

  /// Diagonal of M over the free coefficients of the layout.
  Vector free_diagonal(const CoefLayout& layout) const {
    const auto types = layout.free_types();
    const int n = layout.n_nodes();
    Vector d(static_cast<Eigen::Index>(types.size()) * n);
    for (std::size_t f = 0; f < types.size(); ++f)
      d.segment(static_cast<Eigen::Index>(f) * n, n).setConstant(for_kind(layout.type_info(types[f]).kind));
    return d;
  }
};

enum class EstimatorTag { ols, ridge_ols, gls, ridge_gls, egls_sar, egls_factor };

inline const char* to_string(EstimatorTag tag) {
  switch (tag) {
    case EstimatorTag::ols: return "ols";
    case EstimatorTag::ridge_ols: return "ridge_ols";
    case EstimatorTag::gls: return "gls";
    case EstimatorTag::ridge_gls: return "ridge_gls";
    case EstimatorTag::egls_sar: return "egls_sar";
    case EstimatorTag::egls_factor: return "egls_factor";
  }
  return "?";
}

struct SigmaInfo {
  enum class Kind { identity, plugin, sar, factor };
  Kind kind = Kind::identity;
  std::optional<SarFit> sar;
  std::optional<FactorFit> factor;
};

inline const char* to_string(SigmaInfo::Kind kind) {
  switch (kind) {
    case SigmaInfo::Kind::identity: return "identity";
    case SigmaInfo::Kind::plugin: return "plugin";
    case SigmaInfo::Kind::sar: return "sar";
    case SigmaInfo::Kind::factor: return "factor";
  }
  return "?";
}

struct FitResult {
  EstimatorTag estimator = EstimatorTag::ols;
  CoefVector beta_hat;
  Matrix residuals;  // T_eff x N, row j is equation first_row + j
  int first_row = 0;
  int t_eff = 0;
  SigmaInfo sigma_used;
  std::optional<RidgePenalty> penalties;
  std::vector<int> free_indices;
  Matrix sigma_hat;  // (1/T) sum e e' of this fit's residuals
  // Over the free coefficients; empty when vcov was not requested.
  Matrix vcov;
  Matrix bread;  // sum Z'AZ (+ T M), A = I for OLS, Sigma^{-1} for GLS
  Matrix meat;   // sum Z' Sigma_hat Z for OLS; sum Z' Sigma^{-1} Z for GLS

  const CoefLayout& layout() const { return beta_hat.layout; }

  Vector beta_free() const {
    Vector out(static_cast<Eigen::Index>(free_indices.size()));
    for (std::size_t j = 0; j < free_indices.size(); ++j) out(static_cast<Eigen::Index>(j)) = beta_hat.values(free_indices[j]);
    return out;
  }

  bool has_vcov() const { return vcov.size() > 0; }

  /// Standard errors over the padded layout (zero at padding).
  Vector standard_errors() const {
    Vector se = Vector::Zero(beta_hat.values.size());
    if (!has_vcov()) return se;
    for (std::size_t j = 0; j < free_indices.size(); ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      se(free_indices[j]) = std::sqrt(std::max(0.0, vcov(jj, jj)));
    }
    return se;
  }
};

struct FitOptions {
  bool compute_vcov = true;
  /// Replaces the residual covariance in the OLS sandwich meat.
  std::optional<Matrix> sandwich_sigma;
  /// First equation row; defaults to q. Used to put several lag orders on a
  /// common sample window.
  int first_row = -1;
};

namespace detail {

/// Cholesky solve of a symmetric system after Jacobi scaling, with a
/// diagnosis naming the offending coefficient when the system is singular.
class SpdSolver {
 public:
  template <typename Describe>
  SpdSolver(const Matrix& g, Describe&& describe, const std::string& context) {
    const Eigen::Index k = g.rows();
    scale_.resize(k);
    for (Eigen::Index j = 0; j < k; ++j) {
      if (!(g(j, j) > 0.0) || !std::isfinite(g(j, j)))
        throw SingularGramError(context + ": singular Gram matrix, regressor for " + describe(j) +
                                " has zero variance; consider the ridge estimator");
      scale_(j) = 1.0 / std::sqrt(g(j, j));
    }
    const Matrix gs = scale_.asDiagonal() * g * scale_.asDiagonal();
    llt_.compute(gs);
    Eigen::Index worst = 0;
    bool bad = llt_.info() != Eigen::Success;
    if (!bad) {
      const Vector d = Matrix(llt_.matrixL()).diagonal();
      const double min_pivot = d.cwiseAbs2().minCoeff(&worst);
      bad = !(min_pivot > 1e-12);
    } else {
      Eigen::LDLT<Matrix> ldlt(gs);
      const Vector d = ldlt.vectorD();
      d.minCoeff(&worst);
      Eigen::VectorXi perm = ldlt.transpositionsP().indices();
      // Undo the pivoting to name the original column.
      Eigen::VectorXi order(k);
      for (Eigen::Index j = 0; j < k; ++j) order(j) = static_cast<int>(j);
      for (Eigen::Index j = 0; j < k; ++j) std::swap(order(j), order(perm(j)));
      worst = order(worst);
    }
    if (bad)
      throw SingularGramError(context + ": numerically singular Gram matrix; regressor for " + describe(worst) +
                              " is collinear with the others; consider the ridge estimator");
  }

  Vector solve(const Vector& rhs) const { return scale_.asDiagonal() * llt_.solve(scale_.asDiagonal() * rhs); }

  Matrix inverse() const {
    const Eigen::Index k = scale_.size();
    Matrix inv = scale_.asDiagonal() * llt_.solve(Matrix::Identity(k, k)) * scale_.asDiagonal();
    return 0.5 * (inv + inv.transpose());
  }

 private:
  Vector scale_;
  Eigen::LLT<Matrix> llt_;
};

inline CoefVector scatter(const CoefLayout& layout, const std::vector<int>& free_idx, const Vector& beta_free) {
  CoefVector out{layout, Vector::Zero(layout.size())};
  for (std::size_t j = 0; j < free_idx.size(); ++j) out.values(free_idx[j]) = beta_free(static_cast<Eigen::Index>(j));
  return out;
}

inline void check_fit_inputs(const NarData& data, const Matrix& w, LagOrders orders) {
  data.validate();
  require(w.rows() == data.n_nodes() && w.cols() == data.n_nodes(), "fit: w must be N x N");
  require(w.allFinite(), "fit: w has non-finite entries");
  require(orders.q1 >= 0 && orders.q2 >= 0 && orders.q() >= 1, "fit: need max(q1, q2) >= 1");
  if (data.n_times() < orders.q() + 2)
    throw DataError("fit: need T >= q + 2 observations (T=" + std::to_string(data.n_times()) + ")");
}

inline Matrix residual_covariance(const Matrix& residuals) {
  return residuals.transpose() * residuals / static_cast<double>(residuals.rows());
}

/// Identity-weighted (ridge) least squares; the Gram is block diagonal by
/// node, so each node is solved on its own (2q + p)-dimensional system.
inline FitResult least_squares(const NarData& data, const Matrix& w, LagOrders orders, const RidgePenalty& pen,
                               EstimatorTag tag, const FitOptions& opt) {
  check_fit_inputs(data, w, orders);
  pen.validate();
  const CoefLayout layout(data.n_nodes(), orders, data.p());
  const RegressorPanel panel(data, w, layout, opt.first_row);
  const int n = layout.n_nodes();
  const int m = panel.n_free_types();
  const int t_eff = panel.t_eff();
  const Vector pen_diag = static_cast<double>(t_eff) * pen.free_diagonal(layout);
  const auto free_idx = layout.free_indices();
  auto describe_free = [&](Eigen::Index j) { return layout.describe(free_idx[static_cast<std::size_t>(j)]); };

  Vector beta_free(m * n);
  std::vector<Matrix> node_inv;
  if (opt.compute_vcov) node_inv.reserve(n);
  for (int i = 0; i < n; ++i) {
    const Matrix u = panel.node_regressors(i);
    Matrix g = u.transpose() * u;
    for (int f = 0; f < m; ++f) g(f, f) += pen_diag(f * n + i);
    const SpdSolver solver(
        g, [&](Eigen::Index f) { return describe_free(f * n + i); }, std::string("fit_") + to_string(tag));
    const Vector sol = solver.solve(u.transpose() * panel.targets().col(i));
    for (int f = 0; f < m; ++f) beta_free(f * n + i) = sol(f);
    if (opt.compute_vcov) node_inv.push_back(solver.inverse());
  }

  FitResult fit;
  fit.estimator = tag;
  fit.beta_hat = scatter(layout, free_idx, beta_free);
  fit.residuals = panel.targets() - panel.fitted(beta_free);
  fit.first_row = panel.first_row();
  fit.t_eff = t_eff;
  fit.free_indices = free_idx;
  fit.sigma_hat = residual_covariance(fit.residuals);
  if (!pen.is_zero() || tag == EstimatorTag::ridge_ols) fit.penalties = pen;
  if (opt.compute_vcov) {
    const Matrix cross = panel.cross_products();
    const Matrix& sig = opt.sandwich_sigma ? *opt.sandwich_sigma : fit.sigma_hat;
    require(sig.rows() == n && sig.cols() == n, "fit: sandwich sigma must be N x N");
    fit.meat = panel.weighted_gram(cross, sig);
    fit.bread = panel.weighted_gram(cross, Matrix::Identity(n, n));
    fit.bread.diagonal() += pen_diag;
    Matrix bread_inv = Matrix::Zero(m * n, m * n);
    for (int i = 0; i < n; ++i)
      for (int f = 0; f < m; ++f)
        for (int g = 0; g < m; ++g) bread_inv(f * n + i, g * n + i) = node_inv[i](f, g);
    fit.vcov = bread_inv * fit.meat * bread_inv;
    fit.vcov = 0.5 * (fit.vcov + fit.vcov.transpose());
  }
  return fit;
}

inline FitResult generalized_least_squares(const NarData& data, const Matrix& w, LagOrders orders,
                                           const CovarianceOperator& sigma, const RidgePenalty& pen,
                                           EstimatorTag tag, const FitOptions& opt) {
  check_fit_inputs(data, w, orders);
  pen.validate();
  require(sigma.dim() == data.n_nodes(), "fit_gls: sigma must be N x N");
  const CoefLayout layout(data.n_nodes(), orders, data.p());
  const RegressorPanel panel(data, w, layout, opt.first_row);
  const int t_eff = panel.t_eff();
  const Matrix sigma_inv = sigma.inverse_dense();
  const auto free_idx = layout.free_indices();

  const Matrix cross = panel.cross_products();
  const Matrix gram = panel.weighted_gram(cross, sigma_inv);
  Matrix gram_pen = gram;
  const bool penalized = !pen.is_zero();
  if (penalized) gram_pen.diagonal() += static_cast<double>(t_eff) * pen.free_diagonal(layout);
  const SpdSolver solver(
      gram_pen, [&](Eigen::Index j) { return layout.describe(free_idx[static_cast<std::size_t>(j)]); },
      std::string("fit_") + to_string(tag));
  const Vector beta_free = solver.solve(panel.weighted_moment(sigma_inv, panel.targets()));

  FitResult fit;
  fit.estimator = tag;
  fit.beta_hat = scatter(layout, free_idx, beta_free);
  fit.residuals = panel.targets() - panel.fitted(beta_free);
  fit.first_row = panel.first_row();
  fit.t_eff = t_eff;
  fit.free_indices = free_idx;
  fit.sigma_hat = residual_covariance(fit.residuals);
  fit.sigma_used.kind = SigmaInfo::Kind::plugin;
  if (penalized || tag == EstimatorTag::ridge_gls) fit.penalties = pen;
  if (opt.compute_vcov) {
    const Matrix inv = solver.inverse();
    fit.bread = gram_pen;
    fit.meat = gram;
    fit.vcov = penalized ? Matrix(inv * gram * inv) : inv;
    fit.vcov = 0.5 * (fit.vcov + fit.vcov.transpose());
  }
  return fit;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Estimators

/// beta = (sum Z'Z)^{-1} sum Z'X with sandwich covariance
/// (sum Z'Z)^{-1} (sum Z' Sigma_hat Z) (sum Z'Z)^{-1}.
inline FitResult fit_ols(const NarData& data, const Matrix& w, LagOrders orders, const FitOptions& opt = {}) {
  return detail::least_squares(data, w, orders, RidgePenalty{}, EstimatorTag::ols, opt);
}

/// beta = (sum Z'Z + T M)^{-1} sum Z'X.
inline FitResult fit_ridge_ols(const NarData& data, const Matrix& w, LagOrders orders, const RidgePenalty& pen,
                               const FitOptions& opt = {}) {
  return detail::least_squares(data, w, orders, pen, EstimatorTag::ridge_ols, opt);
}

/// beta = (sum Z' S^{-1} Z)^{-1} sum Z' S^{-1} X with covariance (sum Z' S^{-1} Z)^{-1}.
inline FitResult fit_gls(const NarData& data, const Matrix& w, LagOrders orders, const CovarianceOperator& sigma,
                         const FitOptions& opt = {}) {
  return detail::generalized_least_squares(data, w, orders, sigma, RidgePenalty{}, EstimatorTag::gls, opt);
}

inline FitResult fit_gls(const NarData& data, const Matrix& w, LagOrders orders, const Matrix& sigma,
                         const FitOptions& opt = {}) {
  return fit_gls(data, w, orders, DenseCovariance(sigma), opt);
}

/// beta = (sum Z' S^{-1} Z + T M)^{-1} sum Z' S^{-1} X.
inline FitResult fit_ridge_gls(const NarData& data, const Matrix& w, LagOrders orders,
                               const CovarianceOperator& sigma, const RidgePenalty& pen,
                               const FitOptions& opt = {}) {
  return detail::generalized_least_squares(data, w, orders, sigma, pen, EstimatorTag::ridge_gls, opt);
}

inline FitResult fit_ridge_gls(const NarData& data, const Matrix& w, LagOrders orders, const Matrix& sigma,
                               const RidgePenalty& pen, const FitOptions& opt = {}) {
  return fit_ridge_gls(data, w, orders, DenseCovariance(sigma), pen, opt);
}

// ---------------------------------------------------------------------------
// Feasible GLS

struct SarCovSpec {
  Matrix phi;
  SarQmleOptions qmle{};
};

struct FactorCovSpec {
  int kmax = -1;           // -1: default_kmax(N, T)
  std::optional<int> k;    // fixed factor count, skips selection
  FactorPenalty penalty = default_factor_penalty;
};

using CovKind = std::variant<SarCovSpec, FactorCovSpec>;

struct EglsOptions {
  /// Ridge penalty for both stages. When unset and N > T the default
  /// T^{-0.6} penalty is used.
  std::optional<RidgePenalty> penalty;
  bool iterate = false;
  int max_rounds = 10;
  double tol = 1e-6;
  FitOptions fit{};
};

/// Covariance fitted from residuals, ready for the GLS stage.
struct FittedCovariance {
  SigmaInfo info;
  std::unique_ptr<CovarianceOperator> op;
};

inline FittedCovariance fit_error_covariance(const Matrix& residuals, const CovKind& kind) {
  FittedCovariance out;
  if (const auto* sar = std::get_if<SarCovSpec>(&kind)) {
    SarFit f;
    try {
      f = fit_sar_qmle(residuals, sar->phi, sar->qmle);
    } catch (const std::exception& e) {
      throw NumericalError(std::string("EGLS step 2 (SAR QMLE): ") + e.what());
    }
    out.info.kind = SigmaInfo::Kind::sar;
    out.op = std::make_unique<SarCovariance>(f.rho_hat, f.sigma_u2_hat, f.phi);
    out.info.sar = std::move(f);
  } else {
    const auto& fac = std::get<FactorCovSpec>(kind);
    const int n = static_cast<int>(residuals.cols());
    const int t = static_cast<int>(residuals.rows());
    FactorFit f;
    try {
      int k = 0;
      if (fac.k) {
        k = *fac.k;
      } else {
        const int kmax = fac.kmax < 0 ? default_kmax(n, t) : fac.kmax;
        k = select_k(residuals, kmax, fac.penalty).k_hat;
      }
      f = fit_factor(residuals, k);
      out.op = std::make_unique<FactorCovariance>(f.lambda_hat, f.sigma2_hat);
    } catch (const std::exception& e) {
      throw NumericalError(std::string("EGLS step 2 (factor model): ") + e.what());
    }
    out.info.kind = SigmaInfo::Kind::factor;
    out.info.factor = std::move(f);
  }
  return out;
}

/// Step 1 OLS (ridge when penalized or N > T), step 2 covariance fit on the
/// residuals, step 3 GLS (ridge GLS) with the fitted covariance.
inline FitResult fit_egls(const NarData& data, const Matrix& w, LagOrders orders, const CovKind& kind,
                          const EglsOptions& opt = {}) {
  detail::check_fit_inputs(data, w, orders);
  const int t_eff = data.n_times() - (opt.fit.first_row < 0 ? orders.q() : opt.fit.first_row);
  std::optional<RidgePenalty> pen = opt.penalty;
  if (!pen && data.n_nodes() > t_eff) pen = RidgePenalty::default_for(t_eff);

  FitOptions first = opt.fit;
  first.compute_vcov = false;
  const FitResult ols = pen ? fit_ridge_ols(data, w, orders, *pen, first) : fit_ols(data, w, orders, first);

  const EstimatorTag tag = std::holds_alternative<SarCovSpec>(kind) ? EstimatorTag::egls_sar : EstimatorTag::egls_factor;
  Matrix residuals = ols.residuals;
  Vector previous = ols.beta_hat.values;
  FitResult fit;
  const int rounds = opt.iterate ? opt.max_rounds : 1;
  for (int round = 0; round < rounds; ++round) {
    FittedCovariance cov = fit_error_covariance(residuals, kind);
    FitOptions third = opt.fit;
    if (opt.iterate && round + 1 < rounds) third.compute_vcov = false;
    fit = detail::generalized_least_squares(data, w, orders, *cov.op, pen.value_or(RidgePenalty{}), tag, third);
    fit.sigma_used = std::move(cov.info);
    if (!opt.iterate) break;
    const double change = (fit.beta_hat.values - previous).norm();
    previous = fit.beta_hat.values;
    residuals = fit.residuals;
    if (change < opt.tol) {
      if (!fit.has_vcov() && opt.fit.compute_vcov) {
        FittedCovariance again = fit_error_covariance(residuals, kind);
        fit = detail::generalized_least_squares(data, w, orders, *again.op, pen.value_or(RidgePenalty{}), tag,
                                                opt.fit);
        fit.sigma_used = std::move(again.info);
      }
      break;
    }
  }
  fit.estimator = tag;
  if (pen) fit.penalties = pen;
  return fit;
}

// ---------------------------------------------------------------------------
// Confidence intervals and regions

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double v) const { return lo <= v && v <= hi; }
  double length() const { return hi - lo; }
};

inline double normal_quantile(double prob) {
  return boost::math::quantile(boost::math::normal_distribution<double>(0.0, 1.0), prob);
}

/// beta_i -/+ z_{(1+level)/2} sqrt(vcov_ii) over the padded layout.
inline std::vector<Interval> confidence_intervals(const FitResult& fit, double level = 0.95) {
  detail::require(level > 0.0 && level < 1.0, "confidence_intervals: level must be in (0, 1)");
  if (!fit.has_vcov()) throw DataError("confidence_intervals: fit has no covariance estimate");
  const double z = normal_quantile(0.5 * (1.0 + level));
  const Vector se = fit.standard_errors();
  std::vector<Interval> out(static_cast<std::size_t>(se.size()));
  for (Eigen::Index j = 0; j < se.size(); ++j) {
    const double b = fit.beta_hat.values(j);
    out[static_cast<std::size_t>(j)] = {b - z * se(j), b + z * se(j)};
  }
  return out;
}

/// k x (2Nq + Np) contrast with bounded absolute row sums.
struct ContrastMatrix {
  Matrix d;
  double row_sum_bound = 1.0;

  void validate() const {
    detail::require(d.rows() >= 1, "ContrastMatrix: need at least one row");
    const Vector sums = d.cwiseAbs().rowwise().sum();
    if (sums.maxCoeff() > row_sum_bound)
      throw DataError("ContrastMatrix: a row's absolute sum exceeds the bound " + std::to_string(row_sum_bound));
  }

  /// Rows selecting the given coefficients.
  static ContrastMatrix selection(const CoefLayout& layout, const std::vector<int>& indices) {
    ContrastMatrix c{Matrix::Zero(static_cast<Eigen::Index>(indices.size()), layout.size()), 1.0};
    for (std::size_t r = 0; r < indices.size(); ++r) c.d(static_cast<Eigen::Index>(r), indices[r]) = 1.0;
    return c;
  }
};

/// {beta0 : K'(D Q D')^{-1} K <= chi2_{k, level}}, K = T^{-1/2} D B (beta_hat - beta0),
/// with B the fit's bread and Q = meat / T.
class ConfidenceRegion {
 public:
  ConfidenceRegion(const FitResult& fit, const ContrastMatrix& contrast, double level) {
    contrast.validate();
    detail::require(level > 0.0 && level < 1.0, "confidence_region: level must be in (0, 1)");
    if (!fit.has_vcov()) throw DataError("confidence_region: fit has no covariance estimate");
    detail::require(contrast.d.cols() == fit.layout().size(), "confidence_region: contrast has wrong width");
    const auto& free_idx = fit.free_indices;
    const Eigen::Index k = contrast.d.rows();
    if (k > 5) throw DataError("confidence_region: at most 5 contrasts are supported");
    d_free_.resize(k, static_cast<Eigen::Index>(free_idx.size()));
    std::vector<bool> is_free(static_cast<std::size_t>(fit.layout().size()), false);
    for (std::size_t j = 0; j < free_idx.size(); ++j) {
      d_free_.col(static_cast<Eigen::Index>(j)) = contrast.d.col(free_idx[j]);
      is_free[static_cast<std::size_t>(free_idx[j])] = true;
    }
    for (Eigen::Index c = 0; c < contrast.d.cols(); ++c)
      if (!is_free[static_cast<std::size_t>(c)] && contrast.d.col(c).cwiseAbs().maxCoeff() > 0.0)
        throw DataError("confidence_region: contrast loads on a padded coefficient");

    beta_free_ = fit.beta_free();
    free_idx_ = free_idx;
    h_ = d_free_ * fit.bread;
    const Matrix v = d_free_ * fit.meat * d_free_.transpose();
    v_llt_.compute(v);
    const Vector lii = Matrix(v_llt_.matrixL()).diagonal();
    if (v_llt_.info() != Eigen::Success || lii.minCoeff() <= 1e-12 * lii.maxCoeff())
      throw NumericalError("confidence_region: D Q D' is singular");
    threshold_ = boost::math::quantile(boost::math::chi_squared_distribution<double>(static_cast<double>(k)), level);
    center_ = d_free_ * beta_free_;

    // Shape in theta = D beta coordinates, moving beta along D'(DD')^{-1}.
    const Matrix embed = d_free_.transpose() * (d_free_ * d_free_.transpose()).inverse();
    const Matrix he = h_ * embed;
    shape_ = he.transpose() * v_llt_.solve(he);
    shape_ = 0.5 * (shape_ + shape_.transpose());
  }

  /// Chi-square statistic at beta0 (padded layout).
  double statistic(const Vector& beta0) const {
    Vector delta(beta_free_.size());
    for (std::size_t j = 0; j < free_idx_.size(); ++j)
      delta(static_cast<Eigen::Index>(j)) = beta_free_(static_cast<Eigen::Index>(j)) - beta0(free_idx_[j]);
    const Vector kv = h_ * delta;
    return kv.dot(v_llt_.solve(kv));
  }

  bool contains(const Vector& beta0) const { return statistic(beta0) <= threshold_; }

  const Vector& center() const { return center_; }
  const Matrix& shape() const { return shape_; }
  double threshold() const { return threshold_; }

  /// Lebesgue volume of the ellipsoid {theta : (theta - c)' shape (theta - c) <= threshold}.
  double volume() const {
    const double k = static_cast<double>(shape_.rows());
    const double unit_ball = std::pow(std::numbers::pi, k / 2.0) / std::tgamma(k / 2.0 + 1.0);
    return unit_ball * std::pow(threshold_, k / 2.0) / std::sqrt(shape_.determinant());
  }

 private:
  Matrix d_free_;
  Matrix h_;
  Eigen::LLT<Matrix> v_llt_;
  Vector beta_free_;
  std::vector<int> free_idx_;
  Vector center_;
  Matrix shape_;
  double threshold_ = 0.0;
};

inline ConfidenceRegion confidence_region(const FitResult& fit, const ContrastMatrix& d, double level = 0.95) {
  return ConfidenceRegion(fit, d, level);
}

/// The fitted coefficients as a model spec on the given weight matrix (no
/// weight validation, so misspecified matrices are accepted).
inline CompanionForm fitted_companion(const FitResult& fit, const Matrix& w) {
  return build_companion(unflatten(fit.beta_hat, w));
}

}  // namespace narnet

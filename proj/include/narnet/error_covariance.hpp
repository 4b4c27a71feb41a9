#pragma once

#include <boost/math/tools/minima.hpp>

#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "narnet/nar_model.hpp"

namespace narnet {

// ---------------------------------------------------------------------------
// Error covariance operators

/// A positive-definite N x N error covariance with cheap inverse application.
class CovarianceOperator {
 public:
  virtual ~CovarianceOperator() = default;
  virtual Eigen::Index dim() const = 0;
  virtual Matrix dense() const = 0;
  virtual Vector apply_inverse(const Vector& v) const = 0;

  /// Sigma^{-1} as a dense matrix.
  virtual Matrix inverse_dense() const {
    const Eigen::Index n = dim();
    Matrix out(n, n);
    for (Eigen::Index j = 0; j < n; ++j) out.col(j) = apply_inverse(Vector::Unit(n, j));
    return out;
  }
};

class DenseCovariance final : public CovarianceOperator {
 public:
  explicit DenseCovariance(Matrix sigma) : sigma_(std::move(sigma)) {
    detail::require(sigma_.rows() == sigma_.cols() && sigma_.rows() > 0, "covariance must be square");
    llt_.compute(sigma_);
    if (llt_.info() != Eigen::Success) throw DataError("covariance matrix is not positive definite");
    const Vector d = Matrix(llt_.matrixL()).diagonal();
    if (d.minCoeff() <= 1e-12 * d.maxCoeff()) throw DataError("covariance matrix is numerically singular");
  }
  Eigen::Index dim() const override { return sigma_.rows(); }
  Matrix dense() const override { return sigma_; }
  Vector apply_inverse(const Vector& v) const override { return llt_.solve(v); }
  Matrix inverse_dense() const override {
    Matrix inv = llt_.solve(Matrix::Identity(dim(), dim()));
    return 0.5 * (inv + inv.transpose());
  }

 private:
  Matrix sigma_;
  Eigen::LLT<Matrix> llt_;
};

/// Sigma = sigma_u2 S^{-1} S^{-T} with S = I - rho Phi; Sigma^{-1} = S' S / sigma_u2.
class SarCovariance final : public CovarianceOperator {
 public:
  SarCovariance(double rho, double sigma_u2, Matrix phi) : rho_(rho), sigma_u2_(sigma_u2), phi_(std::move(phi)) {
    if (!(std::abs(rho_) < 1.0)) throw DataError("sigma_sar: |rho| must be < 1");
    detail::require(sigma_u2_ > 0.0, "sigma_sar: sigma_u2 must be > 0");
    detail::require(phi_.rows() == phi_.cols(), "sigma_sar: phi must be square");
    s_ = Matrix::Identity(phi_.rows(), phi_.cols()) - rho_ * phi_;
    lu_.compute(s_);
    if (!lu_.isInvertible()) throw NumericalError("sigma_sar: I - rho Phi is singular");
  }
  Eigen::Index dim() const override { return phi_.rows(); }
  Matrix dense() const override {
    const Matrix s_inv = lu_.inverse();
    return sigma_u2_ * s_inv * s_inv.transpose();
  }
  Vector apply_inverse(const Vector& v) const override { return s_.transpose() * (s_ * v) / sigma_u2_; }
  Matrix inverse_dense() const override { return s_.transpose() * s_ / sigma_u2_; }

  double rho() const { return rho_; }
  double sigma_u2() const { return sigma_u2_; }

 private:
  double rho_;
  double sigma_u2_;
  Matrix phi_;
  Matrix s_;
  Eigen::FullPivLU<Matrix> lu_;
};

inline SarCovariance sigma_sar(double rho, double sigma_u2, const Matrix& phi) {
  return SarCovariance(rho, sigma_u2, phi);
}

/// Sigma = Lambda Lambda' + sigma2 I, inverted through the k x k capacitance
/// matrix sigma2 I_k + Lambda' Lambda.
class FactorCovariance final : public CovarianceOperator {
 public:
  FactorCovariance(Matrix lambda, double sigma2) : lambda_(std::move(lambda)), sigma2_(sigma2) {
    if (!(sigma2_ > 0.0))
      throw NumericalError("factor covariance: sigma2 must be > 0 for the inverse to exist");
    const Eigen::Index k = lambda_.cols();
    capacitance_.compute(sigma2_ * Matrix::Identity(k, k) + lambda_.transpose() * lambda_);
    if (capacitance_.info() != Eigen::Success) throw NumericalError("factor covariance: capacitance not PD");
  }
  Eigen::Index dim() const override { return lambda_.rows(); }
  Matrix dense() const override {
    return lambda_ * lambda_.transpose() + sigma2_ * Matrix::Identity(dim(), dim());
  }
  Vector apply_inverse(const Vector& v) const override {
    if (lambda_.cols() == 0) return v / sigma2_;
    return (v - lambda_ * capacitance_.solve(lambda_.transpose() * v)) / sigma2_;
  }
  Matrix inverse_dense() const override {
    const Eigen::Index n = dim();
    Matrix inv = Matrix::Identity(n, n) / sigma2_;
    if (lambda_.cols() > 0) inv -= lambda_ * capacitance_.solve(lambda_.transpose()) / sigma2_;
    return 0.5 * (inv + inv.transpose());
  }

 private:
  Matrix lambda_;
  double sigma2_;
  Eigen::LLT<Matrix> capacitance_;
};

// ---------------------------------------------------------------------------
// SAR quasi maximum likelihood

struct SarFit {
  double rho_hat = 0.0;
  double sigma_u2_hat = 0.0;
  double loglik = 0.0;
  double score = 0.0;  // d loglik / d rho at rho_hat
  bool at_boundary = false;
  Matrix phi;
};

namespace detail {

/// log|det S| via LU; throws on exact singularity.
inline double log_abs_det(const Matrix& s) {
  Eigen::PartialPivLU<Matrix> lu(s);
  const Vector d = lu.matrixLU().diagonal();
  double out = 0.0;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (d(i) == 0.0 || !std::isfinite(d(i))) throw NumericalError("SAR: S(rho) is singular");
    out += std::log(std::abs(d(i)));
  }
  return out;
}

/// Sufficient statistics of sum_t ||S(rho) e_t||^2 = c0 - 2 rho c1 + rho^2 c2.
struct SarMoments {
  double c0 = 0.0;  // sum ||e||^2
  double c1 = 0.0;  // sum e' Phi e
  double c2 = 0.0;  // sum ||Phi e||^2

  SarMoments(const Matrix& residuals, const Matrix& phi) {
    const Matrix pe = residuals * phi.transpose();  // rows are (Phi e_t)'
    c0 = residuals.squaredNorm();
    c1 = residuals.cwiseProduct(pe).sum();
    c2 = pe.squaredNorm();
  }
  double ssq(double rho) const { return c0 - 2.0 * rho * c1 + rho * rho * c2; }
};

inline void check_sar_inputs(const Matrix& residuals, const Matrix& phi) {
  require(phi.rows() == phi.cols() && phi.rows() == residuals.cols(), "SAR: phi must be N x N with N = residual columns");
  require(residuals.rows() > 0, "SAR: no residuals");
  require(residuals.allFinite(), "SAR: non-finite residuals");
}

}  // namespace detail

/// Profile quasi log-likelihood of rho with sigma_u^2 concentrated out.
inline double sar_profile_loglik(double rho, const Matrix& residuals, const Matrix& phi) {
  detail::check_sar_inputs(residuals, phi);
  if (!(std::abs(rho) < 1.0)) throw DataError("sar_profile_loglik: |rho| must be < 1");
  const double n = static_cast<double>(residuals.cols());
  const double t = static_cast<double>(residuals.rows());
  const Matrix s = Matrix::Identity(phi.rows(), phi.cols()) - rho * phi;
  const double sigma2 = (residuals * s.transpose()).squaredNorm() / (n * t);
  if (!(sigma2 > 0.0)) throw NumericalError("sar_profile_loglik: zero residual variance");
  return -0.5 * n * t * std::log(2.0 * std::numbers::pi) - 0.5 * n * t + t * detail::log_abs_det(s) -
         0.5 * n * t * std::log(sigma2);
}

/// d loglik / d rho = -T tr(S^{-1} Phi) + NT sum e' Phi' S e / sum ||S e||^2.
inline double sar_score(double rho, const Matrix& residuals, const Matrix& phi) {
  const double n = static_cast<double>(residuals.cols());
  const double t = static_cast<double>(residuals.rows());
  const Matrix s = Matrix::Identity(phi.rows(), phi.cols()) - rho * phi;
  const double trace = Eigen::PartialPivLU<Matrix>(s).solve(phi).trace();
  const Matrix se = residuals * s.transpose();
  const Matrix pe = residuals * phi.transpose();
  return -t * trace + n * t * pe.cwiseProduct(se).sum() / se.squaredNorm();
}

struct SarQmleOptions {
  double lower = -0.99;
  double upper = 0.99;
  int scan_points = 41;  // coarse scan that brackets the global maximum
};

/// Maximizes the profile likelihood over [lower, upper]: coarse scan, then
/// Brent's golden-section/parabolic search inside the best bracket.
inline SarFit fit_sar_qmle(const Matrix& residuals, const Matrix& phi, const SarQmleOptions& opt = {}) {
  detail::check_sar_inputs(residuals, phi);
  detail::require(opt.lower < opt.upper && opt.lower > -1.0 && opt.upper < 1.0, "fit_sar_qmle: bad bounds");
  detail::require(opt.scan_points >= 3, "fit_sar_qmle: scan needs at least 3 points");
  const double n = static_cast<double>(residuals.cols());
  const double t = static_cast<double>(residuals.rows());
  const detail::SarMoments mom(residuals, phi);
  if (!(mom.c0 > 0.0)) throw NumericalError("fit_sar_qmle: all residuals are zero");
  const Matrix eye = Matrix::Identity(phi.rows(), phi.cols());

  auto loglik = [&](double rho) {
    const double sigma2 = mom.ssq(rho) / (n * t);
    return -0.5 * n * t * std::log(2.0 * std::numbers::pi) - 0.5 * n * t +
           t * detail::log_abs_det(eye - rho * phi) - 0.5 * n * t * std::log(sigma2);
  };

  const int m = opt.scan_points;
  const double step = (opt.upper - opt.lower) / (m - 1);
  int best = 0;
  double best_val = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < m; ++j) {
    const double v = loglik(opt.lower + j * step);
    if (v > best_val) {
      best_val = v;
      best = j;
    }
  }
  const double lo = opt.lower + std::max(0, best - 1) * step;
  const double hi = opt.lower + std::min(m - 1, best + 1) * step;
  std::uintmax_t max_iter = 200;
  const auto [rho, neg] =
      boost::math::tools::brent_find_minima([&](double r) { return -loglik(r); }, lo, hi, 40, max_iter);

  SarFit fit;
  fit.rho_hat = rho;
  fit.loglik = -neg;
  if (best_val > fit.loglik) {  // keep the scan point if Brent did not improve on it
    fit.rho_hat = opt.lower + best * step;
    fit.loglik = best_val;
  }
  fit.sigma_u2_hat = mom.ssq(fit.rho_hat) / (n * t);
  fit.score = sar_score(fit.rho_hat, residuals, phi);
  const double edge = 1e-5;
  fit.at_boundary = fit.rho_hat <= opt.lower + edge || fit.rho_hat >= opt.upper - edge;
  fit.phi = phi;
  return fit;
}

// ---------------------------------------------------------------------------
// Approximate factor model

struct FactorFit {
  int k = 0;
  Matrix lambda_hat;  // N x k
  Matrix f_hat;       // T x k
  double sigma2_hat = 0.0;
  Vector s_of_k;  // S(0), ..., S(k)

  FactorCovariance covariance() const { return FactorCovariance(lambda_hat, sigma2_hat); }
  Matrix sigma_dense() const {
    return lambda_hat * lambda_hat.transpose() +
           sigma2_hat * Matrix::Identity(lambda_hat.rows(), lambda_hat.rows());
  }
};

namespace detail {

struct ResidualSvd {
  Vector singular;  // descending
  Matrix u;         // T x r
  Matrix v;         // N x r
  double total = 0.0;
};

inline ResidualSvd residual_svd(const Matrix& e) {
  Eigen::BDCSVD<Matrix> svd(e, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success) throw NumericalError("factor model: SVD failed");
  return {svd.singularValues(), svd.matrixU(), svd.matrixV(), e.squaredNorm()};
}

/// S(k) for k = 0..kmax from the eigenvalue sums of E E'.
inline Vector s_of_k_from_svd(const ResidualSvd& svd, int kmax, double nt) {
  Vector s(kmax + 1);
  double captured = 0.0;
  for (int k = 0; k <= kmax; ++k) {
    if (k > 0) captured += svd.singular(k - 1) * svd.singular(k - 1);
    s(k) = std::max(0.0, svd.total - captured) / nt;
  }
  return s;
}

}  // namespace detail

/// Principal-components fit of E = F Lambda' + U with F'F/T = I and
/// Lambda'Lambda diagonal.
inline FactorFit fit_factor(const Matrix& residuals, int k) {
  const Eigen::Index t = residuals.rows();
  const Eigen::Index n = residuals.cols();
  detail::require(t > 0 && n > 0, "fit_factor: empty residual matrix");
  if (k < 0 || k > std::min(n, t)) throw DataError("fit_factor: k must lie in [0, min(N, T)]");
  const double nt = static_cast<double>(n) * static_cast<double>(t);
  const double dof = nt - static_cast<double>(k) * static_cast<double>(t + n - k);
  if (!(dof > 0.0)) throw DataError("fit_factor: k too large (NT - k(T + N - k) <= 0)");

  FactorFit fit;
  fit.k = k;
  if (k == 0) {
    fit.lambda_hat = Matrix::Zero(n, 0);
    fit.f_hat = Matrix::Zero(t, 0);
    fit.sigma2_hat = residuals.squaredNorm() / nt;
    fit.s_of_k = Vector::Constant(1, fit.sigma2_hat);
    return fit;
  }
  const auto svd = detail::residual_svd(residuals);
  const double sqrt_t = std::sqrt(static_cast<double>(t));
  // E = U S V': eigenvectors of E E' are U, so F = sqrt(T) U_k and
  // Lambda' = F'E / T = S_k V_k' / sqrt(T).
  fit.f_hat = sqrt_t * svd.u.leftCols(k);
  fit.lambda_hat = svd.v.leftCols(k) * svd.singular.head(k).asDiagonal() / sqrt_t;
  for (int j = 0; j < k; ++j) {
    Eigen::Index idx;
    fit.lambda_hat.col(j).cwiseAbs().maxCoeff(&idx);
    if (fit.lambda_hat(idx, j) < 0.0) {
      fit.lambda_hat.col(j) *= -1.0;
      fit.f_hat.col(j) *= -1.0;
    }
  }
  const Matrix u = residuals - fit.f_hat * fit.lambda_hat.transpose();
  fit.sigma2_hat = u.squaredNorm() / dof;
  fit.s_of_k = detail::s_of_k_from_svd(svd, k, nt);
  return fit;
}

using FactorPenalty = std::function<double(int n, int t, int k)>;

/// ((N + T - k) / (NT)) log(NT).
inline double default_factor_penalty(int n, int t, int k) {
  const double nt = static_cast<double>(n) * static_cast<double>(t);
  return (static_cast<double>(n + t - k) / nt) * std::log(nt);
}

struct FactorSelection {
  int k_hat = 0;
  Vector ic_values;  // IC(0..k_evaluated)
  Vector s_of_k;
  bool perfect_fit = false;
};

inline int default_kmax(int n, int t) { return std::min(8, std::min(n, t) / 2); }

/// argmin_k ln S(k) + k g(N, T, k), ties toward smaller k.
inline FactorSelection select_k(const Matrix& residuals, int kmax, const FactorPenalty& penalty = default_factor_penalty) {
  const int t = static_cast<int>(residuals.rows());
  const int n = static_cast<int>(residuals.cols());
  detail::require(kmax >= 0, "select_k: kmax must be >= 0");
  detail::require(t > 0 && n > 0, "select_k: empty residual matrix");
  kmax = std::min(kmax, std::min(n, t));
  const double nt = static_cast<double>(n) * static_cast<double>(t);
  const auto svd = detail::residual_svd(residuals);
  const Vector s = detail::s_of_k_from_svd(svd, kmax, nt);
  if (!(s(0) > 0.0)) throw NumericalError("select_k: all residuals are zero");

  FactorSelection sel;
  std::vector<double> ic;
  for (int k = 0; k <= kmax; ++k) {
    if (s(k) <= 1e-14 * s(0)) {  // exact fit: stop, larger k cannot do better
      sel.k_hat = k;
      sel.perfect_fit = true;
      ic.push_back(-std::numeric_limits<double>::infinity());
      break;
    }
    ic.push_back(std::log(s(k)) + k * penalty(n, t, k));
  }
  sel.ic_values = Eigen::Map<Vector>(ic.data(), static_cast<Eigen::Index>(ic.size()));
  sel.s_of_k = s.head(static_cast<Eigen::Index>(ic.size()));
  if (!sel.perfect_fit) {
    int best = 0;
    for (int k = 1; k < static_cast<int>(ic.size()); ++k)
      if (ic[k] < ic[best]) best = k;
    sel.k_hat = best;
  }
  return sel;
}

/// (Lambda Lambda' + sigma2 I)^{-1} through the rank-k update identity.
inline FactorCovariance factor_sigma_inverse(const FactorFit& fit) { return fit.covariance(); }

}  // namespace narnet

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <variant>

#include "narnet/nar_model.hpp"
#include "narnet/panel.hpp"
#include "narnet/rng.hpp"

namespace narnet {

// ---------------------------------------------------------------------------
// Error models

struct GaussianIid {
  double sigma2 = 1.0;
};

/// eps = rho Phi eps + u, u ~ N(0, sigma_u2 I).
struct SarGaussian {
  double rho = 0.0;
  Matrix phi;
  double sigma_u2 = 1.0;
};

/// eps = Lambda F + u, F ~ N(0, I_k), u ~ N(0, sigma2 I).
struct FactorGaussian {
  Matrix lambda;  // N x k
  double sigma2 = 1.0;
};

/// Multivariate t with the given SCALE matrix: eps = L z sqrt(df / chi2_df),
/// L L' = scale. The covariance is scale * df / (df - 2).
struct StudentT {
  double df = 4.0;
  Matrix scale;
};

using ErrorModel = std::variant<GaussianIid, SarGaussian, FactorGaussian, StudentT>;

/// (I - rho Phi)^{-1} (I - rho Phi)^{-T} sigma_u2.
inline Matrix sar_covariance(double rho, const Matrix& phi, double sigma_u2) {
  const Eigen::Index n = phi.rows();
  const Matrix s = Matrix::Identity(n, n) - rho * phi;
  Eigen::PartialPivLU<Matrix> lu(s);
  const Matrix s_inv = lu.inverse();
  return sigma_u2 * s_inv * s_inv.transpose();
}

namespace detail {

inline void validate_error_model(const ErrorModel& model, int n) {
  std::visit(
      [n](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, GaussianIid>) {
          require(m.sigma2 >= 0.0, "GaussianIid: sigma2 must be >= 0");
        } else if constexpr (std::is_same_v<T, SarGaussian>) {
          if (!(std::abs(m.rho) < 1.0)) throw DataError("SarGaussian: |rho| must be < 1");
          require(m.phi.rows() == n && m.phi.cols() == n, "SarGaussian: phi must be N x N");
          require(m.sigma_u2 > 0.0, "SarGaussian: sigma_u2 must be > 0");
          const Matrix s = Matrix::Identity(n, n) - m.rho * m.phi;
          Eigen::FullPivLU<Matrix> lu(s);
          if (!lu.isInvertible()) throw NumericalError("SarGaussian: I - rho Phi is singular");
        } else if constexpr (std::is_same_v<T, FactorGaussian>) {
          require(m.lambda.rows() == n, "FactorGaussian: loadings must have N rows");
          require(m.sigma2 >= 0.0, "FactorGaussian: sigma2 must be >= 0");
        } else {
          require(m.df > 2.0, "StudentT: degrees of freedom must exceed 2");
          require(m.scale.rows() == n && m.scale.cols() == n, "StudentT: scale must be N x N");
          Eigen::LLT<Matrix> llt(m.scale);
          if (llt.info() != Eigen::Success) throw DataError("StudentT: scale matrix is not positive definite");
        }
      },
      model);
}

}  // namespace detail

/// Covariance of one error vector implied by the model.
inline Matrix error_covariance(const ErrorModel& model, int n) {
  detail::validate_error_model(model, n);
  return std::visit(
      [n](const auto& m) -> Matrix {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, GaussianIid>) {
          return m.sigma2 * Matrix::Identity(n, n);
        } else if constexpr (std::is_same_v<T, SarGaussian>) {
          return sar_covariance(m.rho, m.phi, m.sigma_u2);
        } else if constexpr (std::is_same_v<T, FactorGaussian>) {
          return m.lambda * m.lambda.transpose() + m.sigma2 * Matrix::Identity(n, n);
        } else {
          return m.scale * (m.df / (m.df - 2.0));
        }
      },
      model);
}

/// The Sigma parameter as written in the model (the scale matrix for StudentT,
/// the covariance otherwise).
inline Matrix nominal_sigma(const ErrorModel& model, int n) {
  if (const auto* t = std::get_if<StudentT>(&model)) {
    detail::validate_error_model(model, n);
    return t->scale;
  }
  return error_covariance(model, n);
}

/// T x N matrix of iid error vectors.
inline Matrix gen_errors(const ErrorModel& model, int n, int t_len, CounterRng rng) {
  detail::require(t_len >= 0, "gen_errors: t_len must be >= 0");
  detail::validate_error_model(model, n);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto standard = [&](Eigen::Index rows, Eigen::Index cols) {
    Matrix z(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) z(i, j) = normal(rng);
    return z;
  };
  return std::visit(
      [&](const auto& m) -> Matrix {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, GaussianIid>) {
          return std::sqrt(m.sigma2) * standard(t_len, n);
        } else if constexpr (std::is_same_v<T, SarGaussian>) {
          const Matrix u = std::sqrt(m.sigma_u2) * standard(t_len, n);
          const Matrix s = Matrix::Identity(n, n) - m.rho * m.phi;
          // Rows are S^{-1} u_t.
          return Eigen::PartialPivLU<Matrix>(s).solve(u.transpose()).transpose();
        } else if constexpr (std::is_same_v<T, FactorGaussian>) {
          const Matrix f = standard(t_len, m.lambda.cols());
          const Matrix u = std::sqrt(m.sigma2) * standard(t_len, n);
          return f * m.lambda.transpose() + u;
        } else {
          const Matrix l = Eigen::LLT<Matrix>(m.scale).matrixL();
          std::chi_squared_distribution<double> chi2(m.df);
          Matrix out = standard(t_len, n) * l.transpose();
          for (int t = 0; t < t_len; ++t) out.row(t) *= std::sqrt(m.df / chi2(rng));
          return out;
        }
      },
      model);
}

// ---------------------------------------------------------------------------
// NAR trajectories

enum class CovariateMode { gaussian, student_t, zero };

struct SimConfig {
  int t_len = 200;
  int burn_in = 200;
  std::uint64_t seed = 0;
  CovariateMode y_mode = CovariateMode::gaussian;
  double y_df = 4.0;  // used when y_mode == student_t (t with identity scale across covariates)
  bool allow_unstable = false;
  /// Optional presample X_{-q}, ..., X_{-1} (q x N, oldest first); zeros if empty.
  Matrix initial;
};

struct SimResult {
  Matrix x;               // T x N
  std::vector<Matrix> y;  // p matrices T x N; row t enters the equation for x row t
  Matrix errors;          // T x N

  NarData data() const { return NarData{x, y}; }
};

inline SimResult simulate(const NarSpec& spec, const ErrorModel& model, const SimConfig& cfg) {
  spec.validate();
  detail::require(cfg.t_len >= 1, "simulate: t_len must be >= 1");
  detail::require(cfg.burn_in >= 0, "simulate: burn_in must be >= 0");
  if (!cfg.allow_unstable) {
    const auto st = is_stable(spec);
    if (!st.stable)
      throw NumericalError("simulate: spec is not stable (spectral radius " + std::to_string(st.radius) +
                           "); set allow_unstable to override");
  }
  const int n = spec.n_nodes;
  const int q = spec.q();
  const int p = spec.p;
  const int total = cfg.t_len + cfg.burn_in;
  const CounterRng root = CounterRng::stream(cfg.seed, {0x51u});

  const Matrix eps = gen_errors(model, n, total, root.substream(1));

  std::vector<Matrix> y(p, Matrix::Zero(total, n));
  if (cfg.y_mode != CovariateMode::zero && p > 0) {
    CounterRng rng = root.substream(2);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::chi_squared_distribution<double> chi2(cfg.y_df);
    for (int t = 0; t < total; ++t)
      for (int i = 0; i < n; ++i) {
        for (int k = 0; k < p; ++k) y[k](t, i) = normal(rng);
        if (cfg.y_mode == CovariateMode::student_t) {
          const double mix = std::sqrt(cfg.y_df / chi2(rng));
          for (int k = 0; k < p; ++k) y[k](t, i) *= mix;
        }
      }
  }

  std::vector<Matrix> g(q);
  for (int l = 1; l <= q; ++l) g[l - 1] = lag_matrix(spec, l);

  // hist holds q presample rows followed by the generated path.
  Matrix hist = Matrix::Zero(q + total, n);
  if (cfg.initial.size() > 0) {
    detail::require(cfg.initial.rows() == q && cfg.initial.cols() == n, "simulate: initial must be q x N");
    hist.topRows(q) = cfg.initial;
  }
  for (int t = 0; t < total; ++t) {
    Vector xt = eps.row(t).transpose();
    for (int l = 1; l <= q; ++l) xt.noalias() += g[l - 1] * hist.row(q + t - l).transpose();
    for (int k = 0; k < p; ++k) xt += spec.gamma.col(k).cwiseProduct(y[k].row(t).transpose());
    hist.row(q + t) = xt.transpose();
  }

  SimResult out;
  out.x = hist.bottomRows(cfg.t_len);
  out.errors = eps.bottomRows(cfg.t_len);
  for (int k = 0; k < p; ++k) out.y.push_back(y[k].bottomRows(cfg.t_len));
  return out;
}

// ---------------------------------------------------------------------------
// Weight-matrix misspecification

struct MisspecPerturbation {
  Matrix pi;
  double target_inf_norm = 0.0;
  bool preserve_row_sums = false;
};

struct PerturbedWeights {
  Matrix w_m;
  MisspecPerturbation pi;
};

/// Max absolute row sum.
inline double inf_norm(const Matrix& m) { return m.cwiseAbs().rowwise().sum().maxCoeff(); }

/// W^M = W + pi with ||pi||_inf equal to the target. pi has iid Uniform(-1, 1)
/// off-diagonal entries, optionally centered within rows so that W^M keeps the
/// row sums of W, then a global rescale.
inline PerturbedWeights perturb_weights(const Matrix& w, double target_inf_norm, bool preserve_row_sums,
                                        CounterRng rng) {
  detail::require(target_inf_norm >= 0.0, "perturb_weights: target norm must be >= 0");
  detail::require(w.rows() == w.cols() && w.rows() >= 2, "perturb_weights: w must be square with N >= 2");
  const Eigen::Index n = w.rows();
  Matrix pi = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j) pi(i, j) = 2.0 * rng.uniform() - 1.0;
  if (preserve_row_sums) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double mean = pi.row(i).sum() / static_cast<double>(n - 1);
      for (Eigen::Index j = 0; j < n; ++j)
        if (i != j) pi(i, j) -= mean;
    }
  }
  const double norm = inf_norm(pi);
  if (target_inf_norm == 0.0 || norm == 0.0)
    pi.setZero();
  else
    pi *= target_inf_norm / norm;
  return {w + pi, {pi, target_inf_norm, preserve_row_sums}};
}

}  // namespace narnet

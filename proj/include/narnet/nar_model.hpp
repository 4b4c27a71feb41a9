#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <span>
#include <string>
#include <vector>

#include "narnet/errors.hpp"

namespace narnet {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class CoefKind { a, b, gamma };

inline const char* to_string(CoefKind kind) {
  switch (kind) {
    case CoefKind::a: return "a";
    case CoefKind::b: return "b";
    case CoefKind::gamma: return "gamma";
  }
  return "?";
}

struct LagOrders {
  int q1 = 1;
  int q2 = 1;
  int q() const { return std::max(q1, q2); }
};

/// Index map of the stacked coefficient vector
/// [a^(1), b^(1), ..., a^(q), b^(q), gamma_1, ..., gamma_p], each block of
/// length N. A "type" is one such block; coefficient (type, node) lives at
/// type * N + node. Blocks beyond q1 (for a) or q2 (for b) are padding.
class CoefLayout {
 public:
  struct TypeInfo {
    CoefKind kind;
    int lag;  // 1-based lag for a/b, 1-based covariate index for gamma
  };

  CoefLayout() = default;
  CoefLayout(int n_nodes, LagOrders orders, int p) : n_(n_nodes), orders_(orders), p_(p) {
    detail::require(n_nodes > 0, "CoefLayout: n_nodes must be positive");
    detail::require(orders.q1 >= 0 && orders.q2 >= 0 && orders.q() >= 1,
                    "CoefLayout: lag orders must be >= 0 with max(q1, q2) >= 1");
    detail::require(p >= 0, "CoefLayout: p must be >= 0");
  }

  int n_nodes() const { return n_; }
  LagOrders orders() const { return orders_; }
  int q1() const { return orders_.q1; }
  int q2() const { return orders_.q2; }
  int q() const { return orders_.q(); }
  int p() const { return p_; }
  int n_types() const { return 2 * q() + p_; }
  int size() const { return n_types() * n_; }

  int type_index(CoefKind kind, int lag) const {
    switch (kind) {
      case CoefKind::a: return 2 * (lag - 1);
      case CoefKind::b: return 2 * (lag - 1) + 1;
      case CoefKind::gamma: return 2 * q() + (lag - 1);
    }
    return -1;
  }

  int index(CoefKind kind, int lag, int node) const { return type_index(kind, lag) * n_ + node; }

  TypeInfo type_info(int type) const {
    if (type < 2 * q()) return {type % 2 == 0 ? CoefKind::a : CoefKind::b, type / 2 + 1};
    return {CoefKind::gamma, type - 2 * q() + 1};
  }

  bool type_is_free(int type) const {
    const auto info = type_info(type);
    if (info.kind == CoefKind::a) return info.lag <= orders_.q1;
    if (info.kind == CoefKind::b) return info.lag <= orders_.q2;
    return true;
  }

  std::vector<int> free_types() const {
    std::vector<int> out;
    for (int t = 0; t < n_types(); ++t)
      if (type_is_free(t)) out.push_back(t);
    return out;
  }

  int n_free() const { return static_cast<int>(free_types().size()) * n_; }

  /// Positions of the free coefficients in the padded vector, type-major.
  std::vector<int> free_indices() const {
    std::vector<int> out;
    for (int t : free_types())
      for (int i = 0; i < n_; ++i) out.push_back(t * n_ + i);
    return out;
  }

  std::string describe(int index) const {
    const auto info = type_info(index / n_);
    return std::string(to_string(info.kind)) + (info.kind == CoefKind::gamma ? "[cov " : "[lag ") +
           std::to_string(info.lag) + ", node " + std::to_string(index % n_) + "]";
  }

  bool operator==(const CoefLayout&) const = default;

 private:
  int n_ = 0;
  LagOrders orders_{};
  int p_ = 0;
};

inline bool operator==(const LagOrders& l, const LagOrders& r) { return l.q1 == r.q1 && l.q2 == r.q2; }

// ---------------------------------------------------------------------------
// Weight matrices

/// Throws unless w is square, non-negative, zero-diagonal and row-stochastic.
inline void validate_weights(const Matrix& w, double tol = 1e-10) {
  detail::require(w.rows() == w.cols() && w.rows() > 0, "weight matrix must be square and non-empty");
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    if (w(i, i) != 0.0)
      throw DataError("weight matrix has nonzero diagonal at row " + std::to_string(i));
    if ((w.row(i).array() < 0.0).any())
      throw DataError("weight matrix has a negative entry in row " + std::to_string(i));
    const double s = w.row(i).sum();
    if (std::abs(s - 1.0) > tol)
      throw DataError("weight matrix row " + std::to_string(i) + " sums to " + std::to_string(s));
  }
}

inline Matrix zero_diagonal(Matrix w) {
  w.diagonal().setZero();
  return w;
}

/// Rescales each row to sum to one. Never applied implicitly.
inline Matrix renormalize(const Matrix& w) {
  Matrix out = w;
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    const double s = w.row(i).sum();
    if (s <= 0.0) throw DataError("cannot renormalize row " + std::to_string(i) + " (sum <= 0)");
    out.row(i) /= s;
  }
  return out;
}

/// w_ij = 1 when 0 < |i - j| <= width, then row-normalized.
inline Matrix banded_weights(int n, int width) {
  detail::require(n >= 2 && width >= 1, "banded_weights: need n >= 2 and width >= 1");
  Matrix w = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = std::max(0, i - width); j <= std::min(n - 1, i + width); ++j)
      if (j != i) w(i, j) = 1.0;
  return renormalize(w);
}

// ---------------------------------------------------------------------------
// Model parameterization

/// Node-specific NAR(q1, q2) coefficients plus the network weight matrix.
struct NarSpec {
  int n_nodes = 0;
  int q1 = 1;
  int q2 = 1;
  int p = 0;
  std::vector<Vector> a;  // q1 vectors of length N
  std::vector<Vector> b;  // q2 vectors of length N
  Matrix gamma;           // N x p
  Matrix w;               // N x N

  LagOrders orders() const { return {q1, q2}; }
  int q() const { return std::max(q1, q2); }
  CoefLayout layout() const { return CoefLayout(n_nodes, orders(), p); }

  /// Zero-coefficient spec of the given shape.
  static NarSpec zeros(int n, LagOrders orders, int p, const Matrix& w) {
    NarSpec s;
    s.n_nodes = n;
    s.q1 = orders.q1;
    s.q2 = orders.q2;
    s.p = p;
    s.a.assign(orders.q1, Vector::Zero(n));
    s.b.assign(orders.q2, Vector::Zero(n));
    s.gamma = Matrix::Zero(n, p);
    s.w = w;
    return s;
  }

  void validate(double weight_tol = 1e-10) const {
    detail::require(n_nodes > 0, "NarSpec: n_nodes must be positive");
    detail::require(q1 >= 0 && q2 >= 0 && std::max(q1, q2) >= 1, "NarSpec: need max(q1, q2) >= 1");
    detail::require(p >= 0, "NarSpec: p must be >= 0");
    detail::require(static_cast<int>(a.size()) == q1, "NarSpec: expected q1 self-lag vectors");
    detail::require(static_cast<int>(b.size()) == q2, "NarSpec: expected q2 network-lag vectors");
    for (const auto& v : a) detail::require(v.size() == n_nodes, "NarSpec: a vector has wrong length");
    for (const auto& v : b) detail::require(v.size() == n_nodes, "NarSpec: b vector has wrong length");
    detail::require(gamma.rows() == n_nodes && gamma.cols() == p, "NarSpec: gamma must be N x p");
    detail::require(w.rows() == n_nodes && w.cols() == n_nodes, "NarSpec: w must be N x N");
    validate_weights(w, weight_tol);
  }

  bool operator==(const NarSpec& o) const {
    if (n_nodes != o.n_nodes || q1 != o.q1 || q2 != o.q2 || p != o.p) return false;
    for (int l = 0; l < q1; ++l)
      if (a[l] != o.a[l]) return false;
    for (int l = 0; l < q2; ++l)
      if (b[l] != o.b[l]) return false;
    return gamma == o.gamma && w == o.w;
  }
};

/// Stacked coefficients in CoefLayout order; padding positions are zero.
struct CoefVector {
  CoefLayout layout;
  Vector values;

  double at(CoefKind kind, int lag, int node) const { return values(layout.index(kind, lag, node)); }
};

inline CoefVector flatten(const NarSpec& spec) {
  CoefVector v{spec.layout(), Vector::Zero(spec.layout().size())};
  const int n = spec.n_nodes;
  for (int l = 1; l <= spec.q1; ++l) v.values.segment(v.layout.index(CoefKind::a, l, 0), n) = spec.a[l - 1];
  for (int l = 1; l <= spec.q2; ++l) v.values.segment(v.layout.index(CoefKind::b, l, 0), n) = spec.b[l - 1];
  for (int k = 1; k <= spec.p; ++k)
    v.values.segment(v.layout.index(CoefKind::gamma, k, 0), n) = spec.gamma.col(k - 1);
  return v;
}

inline NarSpec unflatten(const CoefVector& v, const Matrix& w) {
  const auto& lay = v.layout;
  if (v.values.size() != lay.size())
    throw DataError("unflatten: vector length " + std::to_string(v.values.size()) + " does not match layout size " +
                    std::to_string(lay.size()));
  NarSpec s = NarSpec::zeros(lay.n_nodes(), lay.orders(), lay.p(), w);
  const int n = lay.n_nodes();
  for (int l = 1; l <= lay.q1(); ++l) s.a[l - 1] = v.values.segment(lay.index(CoefKind::a, l, 0), n);
  for (int l = 1; l <= lay.q2(); ++l) s.b[l - 1] = v.values.segment(lay.index(CoefKind::b, l, 0), n);
  for (int k = 1; k <= lay.p(); ++k) s.gamma.col(k - 1) = v.values.segment(lay.index(CoefKind::gamma, k, 0), n);
  return s;
}

// ---------------------------------------------------------------------------
// Companion form and stability

struct CompanionForm {
  Matrix g;  // Nq x Nq
  int n_nodes = 0;
  int q = 0;

  /// Lag block G_l = A_l + B_l W.
  Matrix block(int lag) const { return g.block(0, (lag - 1) * n_nodes, n_nodes, n_nodes); }
};

inline Matrix lag_matrix(const NarSpec& spec, int lag) {
  const int n = spec.n_nodes;
  Matrix g = Matrix::Zero(n, n);
  if (lag <= spec.q1) g.diagonal() += spec.a[lag - 1];
  if (lag <= spec.q2) g += spec.b[lag - 1].asDiagonal() * spec.w;
  return g;
}

inline CompanionForm build_companion(const NarSpec& spec) {
  const int n = spec.n_nodes;
  const int q = spec.q();
  if (static_cast<int>(spec.a.size()) != spec.q1 || static_cast<int>(spec.b.size()) != spec.q2 ||
      spec.w.rows() != n || spec.w.cols() != n)
    throw DataError("build_companion: dimension mismatch");
  for (const auto& v : spec.a) detail::require(v.size() == n, "build_companion: a vector has wrong length");
  for (const auto& v : spec.b) detail::require(v.size() == n, "build_companion: b vector has wrong length");
  CompanionForm c{Matrix::Zero(n * q, n * q), n, q};
  for (int l = 1; l <= q; ++l) c.g.block(0, (l - 1) * n, n, n) = lag_matrix(spec, l);
  for (int l = 1; l < q; ++l) c.g.block(l * n, (l - 1) * n, n, n).setIdentity();
  return c;
}

struct SpectralOptions {
  /// Above this dimension the dense eigensolver is replaced by power iteration.
  Eigen::Index dense_limit = 2000;
  double power_tol = 1e-6;
  int power_max_iter = 10000;
};

namespace detail {

// Growth-rate estimate lim ||G^k v||^{1/k}. Handles complex-conjugate dominant
// pairs, where plain Rayleigh quotients oscillate, by comparing geometric
// means of the per-step growth over two consecutive windows.
inline double power_radius(const Matrix& g, const SpectralOptions& opt) {
  const Eigen::Index n = g.rows();
  Vector v = Vector::Ones(n) / std::sqrt(static_cast<double>(n));
  for (Eigen::Index i = 0; i < n; ++i) v(i) += 1e-3 * std::sin(static_cast<double>(i) + 1.0);
  v.normalize();
  constexpr int kWindow = 64;
  std::vector<double> log_growth;
  log_growth.reserve(opt.power_max_iter);
  double prev = -1.0;
  for (int it = 0; it < opt.power_max_iter; ++it) {
    Vector next = g * v;
    const double norm = next.norm();
    if (norm == 0.0) return 0.0;
    if (!std::isfinite(norm)) throw NumericalError("spectral_radius: power iteration overflow");
    log_growth.push_back(std::log(norm));
    v = next / norm;
    if (log_growth.size() % kWindow == 0 && log_growth.size() >= 4 * kWindow) {
      // Discard the transient half.
      const std::size_t half = log_growth.size() / 2;
      double s = 0.0;
      for (std::size_t j = half; j < log_growth.size(); ++j) s += log_growth[j];
      const double est = std::exp(s / static_cast<double>(log_growth.size() - half));
      if (prev >= 0.0 && std::abs(est - prev) < opt.power_tol) return est;
      prev = est;
    }
  }
  throw NumericalError("spectral_radius: power iteration did not converge within " +
                       std::to_string(opt.power_max_iter) + " iterations");
}

}  // namespace detail

inline double spectral_radius(const Matrix& g, const SpectralOptions& opt = {}) {
  if (g.rows() != g.cols()) throw DataError("spectral_radius: matrix must be square");
  if (g.rows() == 0) return 0.0;
  if (!g.allFinite()) throw NumericalError("spectral_radius: matrix has non-finite entries");
  if (g.rows() > opt.dense_limit) return detail::power_radius(g, opt);
  Eigen::EigenSolver<Matrix> es(g, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success) throw NumericalError("spectral_radius: eigensolver did not converge");
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

inline double spectral_radius(const CompanionForm& c, const SpectralOptions& opt = {}) {
  return spectral_radius(c.g, opt);
}

struct StabilityReport {
  bool stable = false;
  double radius = 0.0;
};

inline StabilityReport is_stable(const NarSpec& spec, double margin_tol = 0.0) {
  detail::require(margin_tol >= 0.0, "is_stable: margin_tol must be >= 0");
  spec.validate();
  const double r = spectral_radius(build_companion(spec));
  return {r < 1.0 - margin_tol, r};
}

/// max_i sum_l (|a_i^(l)| + |b_i^(l)|) < 1; sufficient but not necessary.
inline bool sufficient_condition(const NarSpec& spec) {
  Vector total = Vector::Zero(spec.n_nodes);
  for (const auto& v : spec.a) total += v.cwiseAbs();
  for (const auto& v : spec.b) total += v.cwiseAbs();
  return total.size() == 0 || total.maxCoeff() < 1.0;
}

// ---------------------------------------------------------------------------
// Design matrix for a single equation

struct DesignMatrix {
  Matrix z;  // N x (2Nq + Np)
};

/// x_history[0] = X_{t-1}, x_history[1] = X_{t-2}, ...; y_prev is N x p and
/// holds the covariates entering the equation for X_t.
inline DesignMatrix build_design(std::span<const Vector> x_history, const Matrix& y_prev, const Matrix& w) {
  const int q = static_cast<int>(x_history.size());
  if (q < 1) throw DataError("build_design: insufficient history (need at least one lag)");
  const Eigen::Index n = w.rows();
  detail::require(w.cols() == n, "build_design: w must be square");
  detail::require(y_prev.rows() == n || y_prev.size() == 0, "build_design: y_prev must have N rows");
  const Eigen::Index p = y_prev.size() == 0 ? 0 : y_prev.cols();
  DesignMatrix d{Matrix::Zero(n, (2 * q + p) * n)};
  for (int l = 0; l < q; ++l) {
    const Vector& x = x_history[l];
    if (x.size() != n) throw DataError("build_design: lag vector has wrong length");
    const Vector wx = w * x;
    for (Eigen::Index i = 0; i < n; ++i) {
      d.z(i, (2 * l) * n + i) = x(i);
      d.z(i, (2 * l + 1) * n + i) = wx(i);
    }
  }
  for (Eigen::Index k = 0; k < p; ++k)
    for (Eigen::Index i = 0; i < n; ++i) d.z(i, (2 * q + k) * n + i) = y_prev(i, k);
  return d;
}

}  // namespace narnet

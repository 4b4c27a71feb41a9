#pragma once

#include <string>
#include <vector>

#include "narnet/nar_model.hpp"

namespace narnet {

/// Observed panel. Row t of x is X_t; row t of y[k] holds the k-th covariate
/// that enters the equation for X_t (i.e. the lagged covariate Y_{k,(t-1)}).
struct NarData {
  Matrix x;               // T x N
  std::vector<Matrix> y;  // p matrices, each T x N

  int n_times() const { return static_cast<int>(x.rows()); }
  int n_nodes() const { return static_cast<int>(x.cols()); }
  int p() const { return static_cast<int>(y.size()); }

  void validate() const {
    detail::require(x.rows() > 0 && x.cols() > 0, "NarData: empty response matrix");
    for (const auto& yk : y)
      detail::require(yk.rows() == x.rows() && yk.cols() == x.cols(), "NarData: covariate shape must match x");
    detail::require(x.allFinite(), "NarData: non-finite response value");
    for (const auto& yk : y) detail::require(yk.allFinite(), "NarData: non-finite covariate value");
  }

  /// Rows [begin, end) of every matrix.
  NarData rows(int begin, int end) const {
    NarData out;
    out.x = x.middleRows(begin, end - begin);
    for (const auto& yk : y) out.y.push_back(yk.middleRows(begin, end - begin));
    return out;
  }

  /// N x p covariate matrix entering the equation for row t.
  Matrix covariates_at(int t) const {
    Matrix out(n_nodes(), p());
    for (int k = 0; k < p(); ++k) out.col(k) = y[k].row(t).transpose();
    return out;
  }
};

/// Regressors of every equation t in [first_row, end_row), restricted to the
/// free coefficient types. Column f * N + i of regressors() is the value that
/// multiplies free coefficient (free type f, node i); each equation row of the
/// stacked design has exactly one nonzero per type block, so the stack is
/// stored as T_eff x (n_free_types * N) instead of T_eff dense N x K blocks.
class RegressorPanel {
 public:
  RegressorPanel(const NarData& data, const Matrix& w, const CoefLayout& layout, int first_row = -1,
                 int end_row = -1)
      : layout_(layout), free_types_(layout.free_types()) {
    data.validate();
    const int n = layout.n_nodes();
    const int q = layout.q();
    if (data.n_nodes() != n) throw DataError("RegressorPanel: data has " + std::to_string(data.n_nodes()) +
                                             " nodes, layout expects " + std::to_string(n));
    if (data.p() != layout.p()) throw DataError("RegressorPanel: covariate count mismatch");
    detail::require(w.rows() == n && w.cols() == n, "RegressorPanel: w must be N x N");
    if (first_row < 0) first_row = q;
    if (end_row < 0) end_row = data.n_times();
    if (first_row < q) throw DataError("RegressorPanel: first equation row must leave q lags of history");
    if (end_row <= first_row || end_row > data.n_times())
      throw DataError("RegressorPanel: insufficient history (T=" + std::to_string(data.n_times()) +
                      ", q=" + std::to_string(q) + ")");
    first_row_ = first_row;
    const int t_eff = end_row - first_row;
    targets_ = data.x.middleRows(first_row, t_eff);
    regressors_.resize(t_eff, static_cast<Eigen::Index>(free_types_.size()) * n);

    // Network lags W X_s for every row that is needed, computed once.
    const Matrix wx = data.x.middleRows(first_row - q, t_eff + q - 1) * w.transpose();
    for (std::size_t f = 0; f < free_types_.size(); ++f) {
      const auto info = layout.type_info(free_types_[f]);
      auto block = regressors_.middleCols(static_cast<Eigen::Index>(f) * n, n);
      switch (info.kind) {
        case CoefKind::a: block = data.x.middleRows(first_row - info.lag, t_eff); break;
        case CoefKind::b: block = wx.middleRows(q - info.lag, t_eff); break;
        case CoefKind::gamma: block = data.y[info.lag - 1].middleRows(first_row, t_eff); break;
      }
    }
  }

  const CoefLayout& layout() const { return layout_; }
  const std::vector<int>& free_types() const { return free_types_; }
  int n_free_types() const { return static_cast<int>(free_types_.size()); }
  int n_nodes() const { return layout_.n_nodes(); }
  int t_eff() const { return static_cast<int>(targets_.rows()); }
  int first_row() const { return first_row_; }
  const Matrix& regressors() const { return regressors_; }
  const Matrix& targets() const { return targets_; }

  /// Z_{t-1} beta for every equation, with beta over free coefficients.
  Matrix fitted(const Vector& beta_free) const {
    const int n = n_nodes();
    Matrix out = Matrix::Zero(t_eff(), n);
    for (int f = 0; f < n_free_types(); ++f)
      out.array() += regressors_.middleCols(f * n, n).array().rowwise() *
                     beta_free.segment(f * n, n).transpose().array();
    return out;
  }

  /// Cross-product of all regressor columns, sum_t u_t u_t'.
  Matrix cross_products() const {
    const Eigen::Index k = regressors_.cols();
    Matrix c = Matrix::Zero(k, k);
    c.selfadjointView<Eigen::Lower>().rankUpdate(regressors_.transpose());
    return c.selfadjointView<Eigen::Lower>();
  }

  /// sum_t Z' A Z for an N x N matrix A, from the regressor cross-products.
  Matrix weighted_gram(const Matrix& cross, const Matrix& a) const {
    const int n = n_nodes();
    const int m = n_free_types();
    Matrix g(m * n, m * n);
    for (int r = 0; r < m; ++r)
      for (int s = 0; s < m; ++s) g.block(r * n, s * n, n, n) = cross.block(r * n, s * n, n, n).cwiseProduct(a);
    return g;
  }

  /// sum_t Z' A v_t for a T_eff x N matrix of responses v.
  Vector weighted_moment(const Matrix& a, const Matrix& v) const {
    const int n = n_nodes();
    const Matrix av = v * a.transpose();
    Vector out(regressors_.cols());
    for (int f = 0; f < n_free_types(); ++f)
      out.segment(f * n, n) = regressors_.middleCols(f * n, n).cwiseProduct(av).colwise().sum().transpose();
    return out;
  }

  /// Per-node Gram sum_t z_it z_it' (A = I): m x m for node i.
  Matrix node_gram(int node) const {
    const Matrix u = node_regressors(node);
    return u.transpose() * u;
  }

  Matrix node_regressors(int node) const {
    const int n = n_nodes();
    Matrix u(t_eff(), n_free_types());
    for (int f = 0; f < n_free_types(); ++f) u.col(f) = regressors_.col(f * n + node);
    return u;
  }

 private:
  CoefLayout layout_;
  std::vector<int> free_types_;
  int first_row_ = 0;
  Matrix regressors_;
  Matrix targets_;
};

}  // namespace narnet

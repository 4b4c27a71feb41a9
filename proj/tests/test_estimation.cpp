#include <gtest/gtest.h>

#include "narnet/estimation.hpp"
#include "narnet/simulation.hpp"

using namespace narnet;

namespace {

NarSpec base_spec(int n, LagOrders orders, int p, int width = 1) {
  NarSpec s = NarSpec::zeros(n, orders, p, banded_weights(n, width));
  for (int l = 0; l < orders.q1; ++l)
    for (int i = 0; i < n; ++i) s.a[l](i) = (l == 0 ? 0.3 : -0.1) + 0.02 * (i % 5);
  for (int l = 0; l < orders.q2; ++l)
    for (int i = 0; i < n; ++i) s.b[l](i) = (l == 0 ? 0.2 : 0.05) - 0.03 * (i % 3);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < p; ++k) s.gamma(i, k) = 0.5 - 0.2 * k + 0.01 * i;
  return s;
}

SimResult sim(const NarSpec& s, const ErrorModel& m, int t, std::uint64_t seed) {
  SimConfig cfg;
  cfg.t_len = t;
  cfg.seed = seed;
  return simulate(s, m, cfg);
}

// Stacked design over all equations from build_design, restricted to the free
// columns: rows (t, i) in time-major order.
struct Stacked {
  Matrix z;
  Vector x;
  std::vector<int> free;
  int t_eff;
};

Stacked stack(const NarData& d, const Matrix& w, LagOrders orders) {
  const CoefLayout layout(d.n_nodes(), orders, d.p());
  const int q = orders.q(), n = d.n_nodes();
  Stacked s;
  s.free = layout.free_indices();
  s.t_eff = d.n_times() - q;
  s.z.resize(static_cast<Eigen::Index>(s.t_eff) * n, static_cast<Eigen::Index>(s.free.size()));
  s.x.resize(static_cast<Eigen::Index>(s.t_eff) * n);
  for (int t = q; t < d.n_times(); ++t) {
    std::vector<Vector> hist;
    for (int l = 1; l <= q; ++l) hist.push_back(d.x.row(t - l).transpose());
    const Matrix full = build_design(hist, d.covariates_at(t), w).z;
    const int r = (t - q) * n;
    for (std::size_t j = 0; j < s.free.size(); ++j) s.z.block(r, j, n, 1) = full.col(s.free[j]);
    s.x.segment(r, n) = d.x.row(t).transpose();
  }
  return s;
}

// Block-diagonal I_T (x) A applied on the left.
Matrix kron_left(const Matrix& a, const Matrix& m) {
  const Eigen::Index n = a.rows();
  Matrix out(m.rows(), m.cols());
  for (Eigen::Index r = 0; r < m.rows(); r += n) out.middleRows(r, n) = a * m.middleRows(r, n);
  return out;
}

double max_abs(const Vector& v) { return v.cwiseAbs().maxCoeff(); }

}  // namespace

TEST(Ols, ExactRecoveryWithoutNoise) {
  const NarSpec s = base_spec(10, {1, 1}, 2);
  const auto r = sim(s, GaussianIid{0.0}, 200, 1);
  const auto fit = fit_ols(r.data(), s.w, {1, 1});
  EXPECT_LT(max_abs(fit.beta_hat.values - flatten(s).values), 1e-8);
  EXPECT_LT(fit.residuals.cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Ols, MatchesPooledLeastSquares) {
  const NarSpec s = base_spec(6, {2, 1}, 1);
  const auto r = sim(s, GaussianIid{1.0}, 80, 2);
  const auto st = stack(r.data(), s.w, {2, 1});
  const Vector oracle = st.z.colPivHouseholderQr().solve(st.x);
  const auto fit = fit_ols(r.data(), s.w, {2, 1});
  EXPECT_LT(max_abs(fit.beta_free() - oracle), 1e-10);
}

TEST(Ols, SandwichMatchesDenseOracle) {
  const NarSpec s = base_spec(5, {1, 1}, 1);
  const auto r = sim(s, SarGaussian{0.5, banded_weights(5, 2), 1.0}, 120, 3);
  const auto st = stack(r.data(), s.w, {1, 1});
  const auto fit = fit_ols(r.data(), s.w, {1, 1});
  const Matrix bread = st.z.transpose() * st.z;
  const Matrix meat = st.z.transpose() * kron_left(fit.sigma_hat, st.z);
  const Matrix binv = bread.inverse();
  const Matrix oracle = binv * meat * binv;
  EXPECT_LT((fit.vcov - oracle).cwiseAbs().maxCoeff(), 1e-10 * oracle.cwiseAbs().maxCoeff());
}

TEST(Ols, ResidualsOrthogonalToRegressors) {
  const NarSpec s = base_spec(8, {2, 2}, 2, 2);
  const auto r = sim(s, GaussianIid{1.0}, 150, 4);
  const auto fit = fit_ols(r.data(), s.w, {2, 2});
  const RegressorPanel panel(r.data(), s.w, fit.layout());
  for (int i = 0; i < 8; ++i) {
    const Vector g = panel.node_regressors(i).transpose() * fit.residuals.col(i);
    EXPECT_LT(max_abs(g), 1e-9) << "node " << i;
  }
}

TEST(Ols, PaddingStaysZero) {
  const NarSpec s = base_spec(4, {2, 1}, 0);
  const auto r = sim(s, GaussianIid{1.0}, 60, 5);
  const auto fit = fit_ols(r.data(), s.w, {2, 1});
  const auto& lay = fit.layout();
  const Eigen::Index start = lay.index(CoefKind::b, 2, 0);
  EXPECT_EQ(fit.beta_hat.values.segment(start, 4).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(fit.standard_errors().segment(start, 4).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Ols, SingularGramNamesCoefficient) {
  NarSpec s = base_spec(3, {1, 1}, 1);
  auto r = sim(s, GaussianIid{1.0}, 50, 6);
  auto d = r.data();
  d.y[0].col(2).setZero();
  try {
    fit_ols(d, s.w, {1, 1});
    FAIL() << "expected SingularGramError";
  } catch (const SingularGramError& e) {
    EXPECT_NE(std::string(e.what()).find("gamma[cov 1, node 2]"), std::string::npos) << e.what();
  }
  EXPECT_NO_THROW(fit_ridge_ols(d, s.w, {1, 1}, RidgePenalty::uniform(0.1)));
}

TEST(Ols, TooShortPanelThrows) {
  const NarSpec s = base_spec(3, {2, 2}, 0);
  const auto r = sim(s, GaussianIid{1.0}, 3, 7);
  EXPECT_THROW(fit_ols(r.data(), s.w, {2, 2}), DataError);
}

TEST(Ridge, ZeroPenaltyIsOls) {
  const NarSpec s = base_spec(6, {1, 1}, 1);
  const auto r = sim(s, GaussianIid{1.0}, 70, 8);
  const auto a = fit_ols(r.data(), s.w, {1, 1});
  const auto b = fit_ridge_ols(r.data(), s.w, {1, 1}, RidgePenalty{});
  EXPECT_LT(max_abs(a.beta_hat.values - b.beta_hat.values), 1e-12);
}

TEST(Ridge, MatchesPenalizedNormalEquations) {
  const NarSpec s = base_spec(5, {1, 1}, 2);
  const auto r = sim(s, GaussianIid{1.0}, 40, 9);
  const RidgePenalty pen{0.3, 0.1, 0.05};
  const auto st = stack(r.data(), s.w, {1, 1});
  const CoefLayout lay(5, {1, 1}, 2);
  const Matrix g = st.z.transpose() * st.z;
  Matrix gp = g;
  gp.diagonal() += st.t_eff * pen.free_diagonal(lay);
  const Vector oracle = gp.ldlt().solve(st.z.transpose() * st.x);
  const auto fit = fit_ridge_ols(r.data(), s.w, {1, 1}, pen);
  EXPECT_LT(max_abs(fit.beta_free() - oracle), 1e-10);
}

TEST(Ridge, NormShrinksWithPenalty) {
  const NarSpec s = base_spec(6, {1, 1}, 1);
  const auto r = sim(s, GaussianIid{1.0}, 60, 10);
  double prev = std::numeric_limits<double>::infinity();
  for (double lam : {0.0, 0.01, 0.1, 1.0, 10.0}) {
    const double norm = fit_ridge_ols(r.data(), s.w, {1, 1}, RidgePenalty::uniform(lam)).beta_hat.values.norm();
    EXPECT_LE(norm, prev + 1e-12);
    prev = norm;
  }
  EXPECT_THROW(fit_ridge_ols(r.data(), s.w, {1, 1}, RidgePenalty::uniform(-1.0)), DataError);
}

TEST(Gls, IdentityIsOls) {
  const NarSpec s = base_spec(6, {1, 1}, 1);
  const auto r = sim(s, GaussianIid{1.0}, 70, 11);
  const auto a = fit_ols(r.data(), s.w, {1, 1});
  const auto b = fit_gls(r.data(), s.w, {1, 1}, Matrix(Matrix::Identity(6, 6)));
  EXPECT_LT(max_abs(a.beta_hat.values - b.beta_hat.values), 1e-10);
}

TEST(Gls, MatchesDenseGeneralizedNormalEquations) {
  const NarSpec s = base_spec(5, {1, 1}, 1);
  const Matrix sigma = sar_covariance(0.6, banded_weights(5, 2), 1.0);
  const auto r = sim(s, SarGaussian{0.6, banded_weights(5, 2), 1.0}, 90, 12);
  const auto st = stack(r.data(), s.w, {1, 1});
  const Matrix sinv = sigma.inverse();
  const Matrix g = st.z.transpose() * kron_left(sinv, st.z);
  const Vector oracle = g.ldlt().solve(st.z.transpose() * kron_left(sinv, st.x));
  const auto fit = fit_gls(r.data(), s.w, {1, 1}, sigma);
  EXPECT_LT(max_abs(fit.beta_free() - oracle), 1e-10);
  const Matrix vinv = g.inverse();
  EXPECT_LT((fit.vcov - vinv).cwiseAbs().maxCoeff(), 1e-10 * vinv.cwiseAbs().maxCoeff());
  // Ridge GLS sandwich G_p^{-1} G G_p^{-1}.
  const RidgePenalty pen = RidgePenalty::uniform(0.2);
  Matrix gp = g;
  gp.diagonal() += st.t_eff * pen.free_diagonal(CoefLayout(5, {1, 1}, 1));
  const auto rfit = fit_ridge_gls(r.data(), s.w, {1, 1}, sigma, pen);
  const Matrix gpi = gp.inverse();
  EXPECT_LT(max_abs(rfit.beta_free() - gpi * st.z.transpose() * kron_left(sinv, st.x)), 1e-10);
  EXPECT_LT((rfit.vcov - gpi * g * gpi).cwiseAbs().maxCoeff(), 1e-10 * gpi.cwiseAbs().maxCoeff());
}

TEST(Gls, RejectsIndefiniteSigma) {
  const NarSpec s = base_spec(3, {1, 1}, 0);
  const auto r = sim(s, GaussianIid{1.0}, 40, 13);
  Matrix bad = Matrix::Identity(3, 3);
  bad(0, 0) = -1.0;
  EXPECT_THROW(fit_gls(r.data(), s.w, {1, 1}, bad), DataError);
}

TEST(Egls, SarRecoversRhoAndBeatsOlsVariance) {
  const int n = 20;
  const NarSpec s = base_spec(n, {1, 1}, 2, 2);
  const Matrix phi = banded_weights(n, 3);
  const auto r = sim(s, SarGaussian{0.6, phi, 1.0}, 400, 14);
  const auto egls = fit_egls(r.data(), s.w, {1, 1}, SarCovSpec{phi});
  ASSERT_TRUE(egls.sigma_used.sar.has_value());
  EXPECT_NEAR(egls.sigma_used.sar->rho_hat, 0.6, 0.05);
  EXPECT_EQ(egls.estimator, EstimatorTag::egls_sar);
  const auto ols = fit_ols(r.data(), s.w, {1, 1});
  EXPECT_LT(egls.vcov.trace(), ols.vcov.trace());
}

TEST(Egls, IterationConverges) {
  const int n = 10;
  const NarSpec s = base_spec(n, {1, 1}, 1);
  const Matrix phi = banded_weights(n, 2);
  const auto r = sim(s, SarGaussian{0.4, phi, 1.0}, 200, 15);
  EglsOptions opt;
  opt.iterate = true;
  const auto a = fit_egls(r.data(), s.w, {1, 1}, SarCovSpec{phi}, opt);
  EXPECT_TRUE(a.has_vcov());
  const auto b = fit_egls(r.data(), s.w, {1, 1}, SarCovSpec{phi});
  EXPECT_LT(max_abs(a.beta_hat.values - b.beta_hat.values), 0.05);
}

TEST(Egls, FactorCovarianceAndWideRouting) {
  const int n = 30;
  const NarSpec s = base_spec(n, {1, 1}, 0);
  Matrix lam(n, 2);
  for (int i = 0; i < n; ++i) lam.row(i) << 1.0, (i % 2 ? 1.5 : -1.5);
  const auto r = sim(s, FactorGaussian{lam, 1.0}, 300, 16);
  const auto fit = fit_egls(r.data(), s.w, {1, 1}, FactorCovSpec{});
  ASSERT_TRUE(fit.sigma_used.factor.has_value());
  EXPECT_EQ(fit.sigma_used.factor->k, 2);
  EXPECT_FALSE(fit.penalties.has_value());
  // N > T_eff: ridge in both stages with the default penalty.
  const auto short_run = sim(s, FactorGaussian{lam, 1.0}, 20, 17);
  const auto wide = fit_egls(short_run.data(), s.w, {1, 1}, FactorCovSpec{-1, 1});
  ASSERT_TRUE(wide.penalties.has_value());
  EXPECT_NEAR(wide.penalties->lambda1, std::pow(19.0, -0.6), 1e-12);
}

TEST(Inference, IntervalsUseNormalQuantile) {
  const NarSpec s = base_spec(4, {1, 1}, 0);
  const auto r = sim(s, GaussianIid{1.0}, 100, 18);
  const auto fit = fit_ols(r.data(), s.w, {1, 1});
  const auto ci = confidence_intervals(fit, 0.9);
  const Vector se = fit.standard_errors();
  for (int j = 0; j < 8; ++j) EXPECT_NEAR(ci[j].length(), 2 * 1.6448536269514722 * se(j), 1e-12);
  EXPECT_THROW(confidence_intervals(fit, 1.0), DataError);
}

TEST(Inference, RegionContainsItsCenter) {
  const NarSpec s = base_spec(6, {1, 1}, 1);
  const auto r = sim(s, GaussianIid{1.0}, 150, 19);
  const auto fit = fit_ols(r.data(), s.w, {1, 1});
  const auto& lay = fit.layout();
  const auto d = ContrastMatrix::selection(lay, {lay.index(CoefKind::a, 1, 0), lay.index(CoefKind::b, 1, 3)});
  const auto reg = confidence_region(fit, d);
  EXPECT_NEAR(reg.statistic(fit.beta_hat.values), 0.0, 1e-20);
  EXPECT_TRUE(reg.contains(fit.beta_hat.values));
  EXPECT_NEAR(reg.threshold(), 5.991464547107979, 1e-9);
  Vector far = fit.beta_hat.values;
  far(lay.index(CoefKind::a, 1, 0)) += 10.0;
  EXPECT_FALSE(reg.contains(far));
  // Ellipse area pi * threshold / sqrt(det shape).
  EXPECT_NEAR(reg.volume(), std::numbers::pi * reg.threshold() / std::sqrt(reg.shape().determinant()), 1e-12);
}

TEST(Inference, RegionBoundaryMatchesShape) {
  const NarSpec s = base_spec(4, {1, 1}, 0);
  const auto r = sim(s, GaussianIid{1.0}, 100, 20);
  const auto fit = fit_ols(r.data(), s.w, {1, 1});
  const auto& lay = fit.layout();
  const int j = lay.index(CoefKind::b, 1, 1);
  const auto reg = confidence_region(fit, ContrastMatrix::selection(lay, {j}));
  const double half = std::sqrt(reg.threshold() / reg.shape()(0, 0));
  Vector edge = fit.beta_hat.values;
  edge(j) += half * (1 - 1e-9);
  EXPECT_TRUE(reg.contains(edge));
  edge(j) += half * 2e-9;
  EXPECT_FALSE(reg.contains(edge));
}

TEST(Inference, ContrastValidation) {
  const NarSpec s = base_spec(4, {1, 1}, 0);
  const auto r = sim(s, GaussianIid{1.0}, 60, 21);
  const auto fit = fit_ols(r.data(), s.w, {1, 1});
  ContrastMatrix heavy{Matrix::Constant(1, 8, 0.5), 1.0};
  EXPECT_THROW(confidence_region(fit, heavy), DataError);
  std::vector<int> six{0, 1, 2, 3, 4, 5};
  EXPECT_THROW(confidence_region(fit, ContrastMatrix::selection(fit.layout(), six)), DataError);
}

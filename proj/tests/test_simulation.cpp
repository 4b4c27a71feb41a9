#include <gtest/gtest.h>

#include "narnet/simulation.hpp"

using namespace narnet;

namespace {

Matrix swap2() { return (Matrix(2, 2) << 0, 1, 1, 0).finished(); }

Matrix sample_cov(const Matrix& e) {
  const Matrix c = e.rowwise() - e.colwise().mean();
  return c.transpose() * c / static_cast<double>(e.rows());
}

double rel_fro(const Matrix& a, const Matrix& b) { return (a - b).norm() / b.norm(); }

}  // namespace

TEST(ErrorCovariance, SarMatchesNeumannSeries) {
  const Matrix phi = banded_weights(6, 2);
  const double rho = 0.5;
  Matrix inv = Matrix::Identity(6, 6), term = Matrix::Identity(6, 6);
  for (int k = 1; k < 200; ++k) {
    term = rho * term * phi;
    inv += term;
  }
  EXPECT_LT((sar_covariance(rho, phi, 2.0) - 2.0 * inv * inv.transpose()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ErrorCovariance, SarRhoZeroIsScaledIdentity) {
  const Matrix s = error_covariance(SarGaussian{0.0, banded_weights(4, 1), 1.7}, 4);
  EXPECT_LT((s - 1.7 * Matrix::Identity(4, 4)).norm(), 1e-15);
}

TEST(GenErrors, SampleCovarianceConverges) {
  const int n = 5;
  const Matrix phi = banded_weights(n, 1);
  Matrix lambda(n, 2);
  lambda << 1, 0, 0.5, 1, -0.5, 0.3, 0.2, -1, 1, 1;
  const std::vector<ErrorModel> models{GaussianIid{2.0}, SarGaussian{0.6, phi, 1.0}, FactorGaussian{lambda, 0.5},
                                       StudentT{6.0, sar_covariance(0.3, phi, 1.0)}};
  for (std::size_t m = 0; m < models.size(); ++m) {
    const Matrix e = gen_errors(models[m], n, 200000, CounterRng::stream(42, {m}));
    EXPECT_LT(rel_fro(sample_cov(e), error_covariance(models[m], n)), 0.03) << "model " << m;
    EXPECT_LT(e.colwise().mean().cwiseAbs().maxCoeff(), 0.02) << "model " << m;
  }
}

TEST(GenErrors, StudentTNominalIsScale) {
  const Matrix scale = 2.0 * Matrix::Identity(3, 3);
  const StudentT t{4.0, scale};
  EXPECT_EQ(nominal_sigma(t, 3), scale);
  EXPECT_LT((error_covariance(t, 3) - 4.0 * Matrix::Identity(3, 3)).norm(), 1e-15);
}

TEST(GenErrors, InvalidModelsThrow) {
  EXPECT_THROW(gen_errors(SarGaussian{1.0, swap2(), 1.0}, 2, 3, CounterRng(1)), DataError);
  EXPECT_THROW(gen_errors(StudentT{2.0, Matrix::Identity(2, 2)}, 2, 3, CounterRng(1)), DataError);
  const Matrix notpd = (Matrix(2, 2) << 1, 2, 2, 1).finished();
  EXPECT_THROW(gen_errors(StudentT{5.0, notpd}, 2, 3, CounterRng(1)), DataError);
}

TEST(Simulate, ZeroNoiseFollowsMatrixPowers) {
  NarSpec s = NarSpec::zeros(2, {1, 1}, 0, swap2());
  s.a[0] << 0.5, 0.3;
  s.b[0] << 0.2, 0.4;
  const Matrix g = (Matrix(2, 2) << 0.5, 0.2, 0.4, 0.3).finished();
  SimConfig cfg;
  cfg.t_len = 30;
  cfg.burn_in = 0;
  cfg.initial = (Matrix(1, 2) << 1.0, 0.0).finished();
  const auto sim = simulate(s, GaussianIid{0.0}, cfg);
  Vector x = cfg.initial.row(0).transpose();
  for (int t = 0; t < cfg.t_len; ++t) {
    x = g * x;
    EXPECT_LT((sim.x.row(t).transpose() - x).cwiseAbs().maxCoeff(), 1e-14) << "t=" << t;
  }
}

TEST(Simulate, ZeroCoefficientsReturnErrors) {
  const NarSpec s = NarSpec::zeros(4, {2, 1}, 2, banded_weights(4, 1));
  SimConfig cfg;
  cfg.t_len = 50;
  cfg.seed = 5;
  const auto sim = simulate(s, GaussianIid{1.0}, cfg);
  EXPECT_EQ(sim.x, sim.errors);
  EXPECT_EQ(sim.y.size(), 2u);
  EXPECT_EQ(sim.y[0].rows(), 50);
}

TEST(Simulate, DeterministicGivenSeed) {
  NarSpec s = NarSpec::zeros(5, {1, 1}, 1, banded_weights(5, 1));
  s.a[0].setConstant(0.3);
  s.b[0].setConstant(0.2);
  s.gamma.setConstant(0.5);
  SimConfig cfg;
  cfg.t_len = 40;
  cfg.seed = 99;
  const auto m = SarGaussian{0.4, banded_weights(5, 2), 1.0};
  const auto a = simulate(s, m, cfg), b = simulate(s, m, cfg);
  EXPECT_EQ(a.x, b.x);
  EXPECT_EQ(a.y[0], b.y[0]);
  cfg.seed = 100;
  EXPECT_NE(simulate(s, m, cfg).x, a.x);
}

TEST(Simulate, RejectsUnstableUnlessAllowed) {
  NarSpec s = NarSpec::zeros(2, {1, 1}, 0, swap2());
  s.a[0].setConstant(1.0);
  SimConfig cfg;
  cfg.t_len = 10;
  EXPECT_THROW(simulate(s, GaussianIid{1.0}, cfg), NumericalError);
  cfg.allow_unstable = true;
  EXPECT_NO_THROW(simulate(s, GaussianIid{1.0}, cfg));
}

TEST(Simulate, StationaryVarianceMatchesLyapunov) {
  // q = 1: Var(X) = sum_k G^k Sigma G'^k.
  NarSpec s = NarSpec::zeros(3, {1, 1}, 0, banded_weights(3, 1));
  s.a[0] << 0.3, 0.5, 0.2;
  s.b[0] << 0.2, -0.3, 0.4;
  const Matrix g = lag_matrix(s, 1);
  Matrix v = Matrix::Zero(3, 3), gk = Matrix::Identity(3, 3);
  for (int k = 0; k < 300; ++k) {
    v += gk * gk.transpose();
    gk = g * gk;
  }
  SimConfig cfg;
  cfg.t_len = 200000;
  cfg.seed = 3;
  const auto sim = simulate(s, GaussianIid{1.0}, cfg);
  EXPECT_LT(rel_fro(sample_cov(sim.x), v), 0.03);
}

TEST(PerturbWeights, NormAndDiagonal) {
  const Matrix w = banded_weights(10, 1);
  for (double target : {0.0, 0.1, 0.5}) {
    for (bool preserve : {false, true}) {
      const auto p = perturb_weights(w, target, preserve, CounterRng(3));
      EXPECT_NEAR(inf_norm(p.pi.pi), target, 1e-12);
      EXPECT_EQ(p.w_m.diagonal().cwiseAbs().maxCoeff(), 0.0);
      EXPECT_LT((p.w_m - w - p.pi.pi).norm(), 1e-15);
      if (preserve) {
        EXPECT_LT(p.pi.pi.rowwise().sum().cwiseAbs().maxCoeff(), 1e-12);
      }
    }
  }
  EXPECT_THROW(perturb_weights(w, -1.0, false, CounterRng(1)), DataError);
}

TEST(CounterRng, StreamsAreIndependentOfOrder) {
  CounterRng a = CounterRng::stream(7, {1, 2}), b = CounterRng::stream(7, {1, 2});
  const auto a0 = a(), a1 = a();
  EXPECT_EQ(b(), a0);
  EXPECT_EQ(b(), a1);
  EXPECT_NE(CounterRng::stream(7, {1, 3})(), a0);
  EXPECT_NE(CounterRng::stream(7, {2, 1})(), a0);
}

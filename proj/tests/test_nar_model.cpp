#include <gtest/gtest.h>

#include <complex>
#include <random>

#include "narnet/nar_model.hpp"
#include "narnet/simulation.hpp"

using namespace narnet;

namespace {

Matrix swap2() { return (Matrix(2, 2) << 0, 1, 1, 0).finished(); }

NarSpec two_node(double a1, double a2, double b1, double b2) {
  NarSpec s = NarSpec::zeros(2, {1, 1}, 0, swap2());
  s.a[0] << a1, a2;
  s.b[0] << b1, b2;
  return s;
}

NarSpec random_spec(std::mt19937_64& gen, int n, LagOrders orders, int p, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  NarSpec s = NarSpec::zeros(n, orders, p, banded_weights(n, 2));
  for (auto& v : s.a) v = v.unaryExpr([&](double) { return u(gen); });
  for (auto& v : s.b) v = v.unaryExpr([&](double) { return u(gen); });
  s.gamma = s.gamma.unaryExpr([&](double) { return u(gen); });
  return s;
}

// Largest root modulus of 1 - c1 z - c2 z^2 is stable iff both roots lie
// outside the unit disc.
bool quadratic_stable(double c1, double c2) {
  if (std::abs(c2) < 1e-14) return std::abs(c1) < 1.0;
  const std::complex<double> disc = std::sqrt(std::complex<double>(c1 * c1 + 4.0 * c2));
  const std::complex<double> r1 = (-c1 + disc) / (2.0 * c2);
  const std::complex<double> r2 = (-c1 - disc) / (2.0 * c2);
  return std::abs(r1) > 1.0 && std::abs(r2) > 1.0;
}

}  // namespace

TEST(Companion, TwoNodeSwapGivesSymmetricBlock) {
  const auto c = build_companion(two_node(0.3, 0.3, 0.2, 0.2));
  const Matrix expect = (Matrix(2, 2) << 0.3, 0.2, 0.2, 0.3).finished();
  EXPECT_EQ(c.g, expect);
}

TEST(Companion, NoNetworkTermIsDiagonal) {
  auto s = two_node(0.4, -0.2, 0.0, 0.0);
  EXPECT_EQ(build_companion(s).g, Matrix(s.a[0].asDiagonal()));
}

TEST(Companion, NonNecessityExampleMatchesPrintedMatrix) {
  NarSpec s = NarSpec::zeros(2, {2, 2}, 0, swap2());
  s.a[0].setConstant(1.5);
  s.a[1].setConstant(-0.8);
  s.b[0].setConstant(0.1);
  s.b[1].setConstant(0.1);
  const Matrix expect =
      (Matrix(4, 4) << 1.5, 0.1, -0.8, 0.1, 0.1, 1.5, 0.1, -0.8, 1, 0, 0, 0, 0, 1, 0, 0).finished();
  const auto c = build_companion(s);
  EXPECT_EQ(c.g, expect);
  EXPECT_NEAR(spectral_radius(c), 0.949, 1e-3);
  EXPECT_FALSE(sufficient_condition(s));
  EXPECT_TRUE(is_stable(s).stable);
}

TEST(Companion, PaddingWhenLagOrdersDiffer) {
  NarSpec s = NarSpec::zeros(3, {1, 2}, 0, banded_weights(3, 1));
  s.a[0].setConstant(0.2);
  s.b[0].setConstant(0.1);
  s.b[1].setConstant(0.3);
  const auto c = build_companion(s);
  EXPECT_EQ(c.block(2), Matrix(s.b[1].asDiagonal() * s.w));
  EXPECT_EQ(c.g.block(3, 0, 3, 3), Matrix(Matrix::Identity(3, 3)));
  EXPECT_EQ(c.g.block(3, 3, 3, 3), Matrix(Matrix::Zero(3, 3)));
}

TEST(SpectralRadius, HeterogeneousExample) {
  const Matrix g = (Matrix(2, 2) << 0.8, 0.1, 0.6, 0.5).finished();
  EXPECT_NEAR(spectral_radius(g), 0.937, 1e-3);
  const auto s = two_node(0.8, 0.5, 0.1, 0.6);
  EXPECT_TRUE(is_stable(s).stable);
  EXPECT_FALSE(sufficient_condition(s));
}

TEST(SpectralRadius, ZeroAndUnitRoot) {
  EXPECT_EQ(spectral_radius(Matrix::Zero(3, 3)), 0.0);
  auto s = two_node(1.0, 1.0, 0.0, 0.0);
  const auto st = is_stable(s);
  EXPECT_FALSE(st.stable);
  EXPECT_NEAR(st.radius, 1.0, 1e-12);
  const auto z = is_stable(two_node(0, 0, 0, 0));
  EXPECT_TRUE(z.stable);
  EXPECT_EQ(z.radius, 0.0);
}

TEST(SpectralRadius, MarginTolerance) {
  const auto s = two_node(0.8, 0.5, 0.1, 0.6);
  EXPECT_TRUE(is_stable(s, 0.05).stable);
  EXPECT_FALSE(is_stable(s, 0.07).stable);
  EXPECT_THROW(is_stable(s, -0.1), DataError);
}

TEST(SpectralRadius, PowerIterationAgreesWithDense) {
  std::mt19937_64 gen(7);
  const NarSpec s = random_spec(gen, 30, {2, 2}, 0, 0.25);
  const auto c = build_companion(s);
  SpectralOptions power;
  power.dense_limit = 0;
  EXPECT_NEAR(spectral_radius(c, power), spectral_radius(c), 1e-4);
}

TEST(SpectralRadius, LagOneEigenvaluesMatchTransition) {
  std::mt19937_64 gen(11);
  const NarSpec s = random_spec(gen, 6, {1, 1}, 0, 0.4);
  const Matrix g = lag_matrix(s, 1);
  Eigen::EigenSolver<Matrix> e1(build_companion(s).g), e2(g);
  auto sorted = [](Eigen::VectorXcd v) {
    std::vector<std::complex<double>> out(v.data(), v.data() + v.size());
    std::sort(out.begin(), out.end(), [](auto x, auto y) {
      return x.real() != y.real() ? x.real() < y.real() : x.imag() < y.imag();
    });
    return out;
  };
  const auto a = sorted(e1.eigenvalues()), b = sorted(e2.eigenvalues());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(std::abs(a[i] - b[i]), 0.0, 1e-8);
}

TEST(Stability, AgreesWithCharacteristicPolynomialOnGrid) {
  // a2 = b2 = 0.1; A(z) = 1 - (a1 + a2) z - (b1 b2 - a1 a2) z^2.
  int disagreements = 0;
  for (int i = 0; i < 50; ++i)
    for (int j = 0; j < 50; ++j) {
      const double a1 = -1.5 + 3.0 * (i + 0.5) / 50.0;
      const double b1 = -6.0 + 12.0 * (j + 0.5) / 50.0;
      const double a2 = 0.1, b2 = 0.1;
      const bool poly = quadratic_stable(a1 + a2, b1 * b2 - a1 * a2);
      if (poly != is_stable(two_node(a1, a2, b1, b2)).stable) ++disagreements;
    }
  EXPECT_EQ(disagreements, 0);
}

TEST(Stability, SufficientConditionImpliesStable) {
  std::mt19937_64 gen(3);
  std::uniform_int_distribution<int> qd(1, 3), nd(2, 8);
  for (int r = 0; r < 1000; ++r) {
    const NarSpec s = random_spec(gen, nd(gen), {qd(gen), qd(gen)}, 0, 0.6);
    if (sufficient_condition(s)) {
      EXPECT_TRUE(is_stable(s).stable);
    }
  }
}

TEST(SufficientCondition, Examples) {
  EXPECT_TRUE(sufficient_condition(two_node(0, 0, 0, 0)));
  EXPECT_TRUE(sufficient_condition(two_node(0.3, 0.3, 0.3, 0.3)));
  EXPECT_FALSE(sufficient_condition(two_node(0.8, 0.5, 0.1, 0.6)));
}

TEST(Design, HandExpansion) {
  const Vector x = (Vector(2) << 1, 2).finished();
  const std::vector<Vector> hist{x};
  const auto d = build_design(hist, Matrix(2, 0), swap2());
  const Matrix expect = (Matrix(2, 4) << 1, 0, 2, 0, 0, 2, 0, 1).finished();
  EXPECT_EQ(d.z, expect);
}

TEST(Design, ZeroInputsGiveZeroMatrix) {
  const std::vector<Vector> hist{Vector::Zero(3), Vector::Zero(3)};
  const auto d = build_design(hist, Matrix::Zero(3, 2), banded_weights(3, 1));
  EXPECT_EQ(d.z.rows(), 3);
  EXPECT_EQ(d.z.cols(), (2 * 2 + 2) * 3);
  EXPECT_EQ(d.z.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Design, OneNonzeroPerRowPerHalf) {
  std::mt19937_64 gen(5);
  std::normal_distribution<double> nrm;
  const int n = 5;
  const std::vector<Vector> hist{Vector::NullaryExpr(n, [&] { return nrm(gen); })};
  const auto d = build_design(hist, Matrix(n, 0), banded_weights(n, 1));
  for (int i = 0; i < n; ++i) {
    EXPECT_EQ((d.z.row(i).segment(0, n).array() != 0.0).count(), 1);
    EXPECT_EQ((d.z.row(i).segment(n, n).array() != 0.0).count(), 1);
  }
}

TEST(Design, InsufficientHistoryThrows) {
  const std::vector<Vector> none;
  EXPECT_THROW(build_design(none, Matrix(2, 0), swap2()), DataError);
}

TEST(Design, ReplaysSimulatedTrajectory) {
  std::mt19937_64 gen(9);
  const NarSpec s = random_spec(gen, 6, {2, 1}, 3, 0.2);
  SimConfig cfg;
  cfg.t_len = 60;
  cfg.seed = 4;
  const auto sim = simulate(s, GaussianIid{1.0}, cfg);
  const Vector beta = flatten(s).values;
  double worst = 0.0;
  for (int t = 2; t < cfg.t_len; ++t) {
    const std::vector<Vector> hist{sim.x.row(t - 1).transpose(), sim.x.row(t - 2).transpose()};
    const Matrix y = sim.data().covariates_at(t);
    const Vector fitted = build_design(hist, y, s.w).z * beta;
    const Vector resid = sim.x.row(t).transpose() - sim.errors.row(t).transpose() - fitted;
    worst = std::max(worst, resid.cwiseAbs().maxCoeff());
  }
  EXPECT_LT(worst, 1e-12);
}

TEST(CoefVector, RoundTripAndPadding) {
  std::mt19937_64 gen(1);
  const NarSpec s = random_spec(gen, 4, {2, 1}, 2, 0.5);
  const CoefVector v = flatten(s);
  EXPECT_EQ(v.values.size(), (2 * 2 + 2) * 4);
  EXPECT_EQ(v.values.segment(v.layout.index(CoefKind::b, 2, 0), 4).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_TRUE(unflatten(v, s.w) == s);
  const NarSpec z = NarSpec::zeros(3, {1, 1}, 1, banded_weights(3, 1));
  EXPECT_EQ(flatten(z).values.cwiseAbs().maxCoeff(), 0.0);
}

TEST(CoefVector, LengthMismatchThrows) {
  const NarSpec z = NarSpec::zeros(3, {1, 1}, 1, banded_weights(3, 1));
  CoefVector v = flatten(z);
  v.values.conservativeResize(v.values.size() - 1);
  EXPECT_THROW(unflatten(v, z.w), DataError);
}

TEST(Weights, Validation) {
  EXPECT_NO_THROW(validate_weights(banded_weights(6, 2)));
  Matrix w = banded_weights(4, 1);
  w(0, 0) = 0.1;
  EXPECT_THROW(validate_weights(w), DataError);
  Matrix v = banded_weights(4, 1);
  v(1, 0) += 1e-6;
  EXPECT_THROW(validate_weights(v), DataError);
  EXPECT_NO_THROW(validate_weights(renormalize(v)));
  Matrix neg = swap2();
  neg << 0, 1, -1, 0;
  EXPECT_THROW(validate_weights(neg), DataError);
}

TEST(Weights, BandedEachSide) {
  const Matrix w = banded_weights(6, 2);
  EXPECT_DOUBLE_EQ(w(0, 1), 0.5);
  EXPECT_DOUBLE_EQ(w(0, 2), 0.5);
  EXPECT_DOUBLE_EQ(w(2, 0), 0.25);
  EXPECT_DOUBLE_EQ(w(2, 5), 0.0);
}

TEST(NarSpec, ValidateRejectsBadShapes) {
  NarSpec s = NarSpec::zeros(3, {1, 1}, 1, banded_weights(3, 1));
  s.a[0].resize(2);
  EXPECT_THROW(s.validate(), DataError);
  EXPECT_THROW(build_companion(s), DataError);
}

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ctlfm/error.hpp"
#include "ctlfm/fit.hpp"
#include "ctlfm/optimize.hpp"
#include "support.hpp"

using namespace ctlfm;

namespace {

Matrix rotation(double a) {
  Matrix r(2, 2);
  r << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
  return r;
}

// Raw (unnormalized) varimax criterion on Kaiser-normalized rows.
double varimax_criterion(const Matrix& l) {
  const Vector norms = l.rowwise().norm();
  const Matrix x = norms.cwiseInverse().asDiagonal() * l;
  const Matrix x2 = x.cwiseProduct(x);
  double c = 0.0;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double m = x2.col(j).mean();
    c += (x2.col(j).array() - m).square().sum();
  }
  return c;
}

}  // namespace

TEST(Bfgs, MinimizesRosenbrock) {
  auto f = [](const Vector& x, Vector* g) {
    const double a = 1.0 - x[0], b = x[1] - x[0] * x[0];
    if (g != nullptr) {
      g->resize(2);
      (*g)[0] = -2.0 * a - 400.0 * x[0] * b;
      (*g)[1] = 200.0 * b;
    }
    return a * a + 100.0 * b * b;
  };
  BfgsOptions o;
  o.grad_tol = 1e-8;
  o.max_step = 0.5;
  const BfgsResult r = minimize_bfgs(f, Vector::Constant(2, -1.0), o);
  EXPECT_TRUE(r.converged) << r.message;
  EXPECT_NEAR(r.x[0], 1.0, 1e-6);
  EXPECT_NEAR(r.x[1], 1.0, 1e-6);
  for (std::size_t k = 1; k < r.f_trace.size(); ++k) EXPECT_LE(r.f_trace[k], r.f_trace[k - 1] + 1e-12);
}

TEST(Varimax, RecoversSimpleStructureAndIsAStationaryPoint) {
  const Matrix simple = fixtures::two_block_lambda(8, 0.7);
  const Matrix rotated = simple * rotation(0.6);
  const Matrix v = varimax(rotated);
  const double best = varimax_criterion(v);
  for (double a : {-0.02, 0.02}) EXPECT_LE(varimax_criterion(v * rotation(a)), best + 1e-12);
  // Each row has one loading of magnitude 0.7 and one near zero.
  for (Eigen::Index i = 0; i < 8; ++i) {
    EXPECT_NEAR(v.row(i).cwiseAbs().maxCoeff(), 0.7, 1e-8);
    EXPECT_NEAR(v.row(i).cwiseAbs().minCoeff(), 0.0, 1e-8);
  }
}

TEST(Identify, CanonicalUnderRotationAndSignFlips) {
  Matrix l(6, 2);
  l << 0.6, 0.1, 0.5, 0.2, 0.7, -0.1, 0.1, 0.6, -0.1, 0.5, 0.2, 0.55;
  const FactorLoadings a = identify(FactorLoadings(l));
  Matrix flip = rotation(1.1);
  flip.col(1) *= -1.0;
  const FactorLoadings b = identify(FactorLoadings(l * flip));
  EXPECT_LT((a.lambda() - b.lambda()).cwiseAbs().maxCoeff(), 1e-8);
  // ΛΛ' is unchanged by identification.
  EXPECT_LT((a.lambda() * a.lambda().transpose() - l * l.transpose()).cwiseAbs().maxCoeff(), 1e-10);
  for (Eigen::Index j = 0; j < 2; ++j) {
    Eigen::Index r;
    a.lambda().col(j).cwiseAbs().maxCoeff(&r);
    EXPECT_GT(a.lambda()(r, j), 0.0);
  }
  EXPECT_GE(a.lambda().col(0).norm(), a.lambda().col(1).norm());
}

TEST(SigmaSe, DeltaMethodMatchesNumericJacobian) {
  Matrix z(3, 1);
  z << 0.4, -0.8, 1.2;
  Matrix cov = Matrix::Identity(3, 3) * 0.01;
  cov(0, 1) = cov(1, 0) = 0.002;
  const Matrix se = sigma_standard_errors(z, cov);
  // Σ01 = λ0 λ1 with λ = z/sqrt(1+z²).
  auto lam = [](double v) { return v / std::sqrt(1 + v * v); };
  auto dlam = [](double v) { return std::pow(1 + v * v, -1.5); };
  const double g0 = dlam(z(0)) * lam(z(1)), g1 = lam(z(0)) * dlam(z(1));
  const double var = g0 * g0 * cov(0, 0) + 2 * g0 * g1 * cov(0, 1) + g1 * g1 * cov(1, 1);
  EXPECT_NEAR(se(0, 1), std::sqrt(var), 1e-10);
  EXPECT_NEAR(se(1, 0), se(0, 1), 0.0);
  EXPECT_EQ(se(2, 2), 0.0);
}

TEST(RotationProjection, CovarianceIgnoresFlatDirections) {
  Matrix z(4, 2);
  z << 0.5, 0.1, 0.4, -0.2, -0.1, 0.6, 0.2, 0.5;
  // Hessian singular along the rotation direction z·A.
  Matrix a(2, 2);
  a << 0, 1, -1, 0;
  const Matrix za = z * a;
  const Vector dir = Eigen::Map<const Vector>(za.data(), 8).normalized();
  const Matrix h = 2.0 * (Matrix::Identity(8, 8) - dir * dir.transpose());
  Matrix cov;
  ASSERT_TRUE(rotation_projected_covariance(h, z, cov));
  EXPECT_LT((cov * dir).norm(), 1e-10);
  EXPECT_LT((h * cov * h - h).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(FitLoadings, RecoversBlocksOnShortRecording) {
  const auto ds = fixtures::simulate_binned(fixtures::two_block_lambda(6), 8000, 0.01, 21);
  FitOptions o;
  o.restarts = 1;
  o.standard_errors = true;
  const FitResult fit = fit_loadings(ds.y, ds.theta, 2, o);
  EXPECT_TRUE(fit.converged);
  ASSERT_EQ(fit.restarts.size(), 2u);
  EXPECT_EQ(fit.restarts[0].start, "spectral");
  const Matrix truth = build_correlation(FactorLoadings(ds.lambda)).sigma;
  double err = 0.0;
  for (Eigen::Index i = 0; i < 6; ++i) {
    for (Eigen::Index j = i + 1; j < 6; ++j) err += std::abs(fit.sigma_hat(i, j) - truth(i, j));
  }
  EXPECT_LT(err / 15.0, 0.15);
  EXPECT_TRUE(fit.has_standard_errors);
  EXPECT_GT(fit.sigma_se(0, 1), 0.0);
  EXPECT_NEAR(fit.sigma_hat(0, 0), 1.0, 1e-12);
}

TEST(FitLoadings, SeededRunsAreIdentical) {
  const auto ds = fixtures::simulate_binned(fixtures::two_block_lambda(4, 0.6), 1000, 0.01, 2);
  FitOptions o;
  o.restarts = 2;
  o.standard_errors = false;
  o.threads = 2;
  const FitResult a = fit_loadings(ds.y, ds.theta, 1, o);
  o.threads = 1;
  const FitResult b = fit_loadings(ds.y, ds.theta, 1, o);
  EXPECT_EQ(a.lambda_hat.lambda(), b.lambda_hat.lambda());
  EXPECT_EQ(a.nll, b.nll);
}

TEST(FitLoadings, RejectsBadArguments) {
  const auto ds = fixtures::simulate_binned(fixtures::two_block_lambda(4, 0.6), 200, 0.01, 2);
  FitOptions o;
  o.restarts = -1;
  EXPECT_THROW(fit_loadings(ds.y, ds.theta, 1, o), InvalidArgument);
  o.restarts = 0;
  o.spectral_start = false;
  EXPECT_THROW(fit_loadings(ds.y, ds.theta, 1, o), InvalidArgument);
}

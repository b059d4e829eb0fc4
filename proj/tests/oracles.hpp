#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <utility>
#include <vector>

#include "ctlfm/laplace.hpp"
#include "ctlfm/model.hpp"

// Dense and quadrature references for the Laplace objective.
namespace ctlfm::fixtures {

inline double phi(double u) { return 0.5 * std::erfc(-u / std::sqrt(2.0)); }

inline BinnedSpikes binned(const std::vector<std::vector<int>>& rows, double delta) {
  const auto q = static_cast<Eigen::Index>(rows.size());
  const auto n = static_cast<Eigen::Index>(rows[0].size());
  BinnedSpikes y{SpikeMatrix::Zero(q, n), GridSpec(delta, static_cast<std::size_t>(n))};
  for (Eigen::Index i = 0; i < q; ++i) {
    for (Eigen::Index t = 0; t < n; ++t) y.y(i, t) = static_cast<std::uint8_t>(rows[i][t]);
  }
  return y;
}

inline double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

inline double max_rel(const Matrix& a, const Matrix& b) {
  return (a - b).cwiseAbs().maxCoeff() / b.cwiseAbs().maxCoeff();
}

// -log ∫ p(Y, X) dX for the Gaussian surrogate, from the joint Gaussian law of X.
inline double surrogate_marginal_nll(const BinnedSpikes& y, const NeuronParams& th, const FactorLoadings& fl,
                                     const Matrix& w) {
  const Eigen::Index q = y.y.rows(), t = y.y.cols(), n = q * t;
  const double dt = y.grid.delta();
  Matrix r = Matrix::Identity(n, n);
  for (Eigen::Index s = 1; s < t; ++s) {
    for (Eigen::Index i = 0; i < q; ++i) {
      if (y.y(i, s - 1) == 0) r(s * q + i, (s - 1) * q + i) = -1.0;
    }
  }
  Vector m0(n);
  for (Eigen::Index s = 0; s < t; ++s) m0.segment(s * q, q) = th.mu * dt;
  Matrix cov_inc = Matrix::Zero(n, n);
  const Matrix sigma = build_correlation(fl).sigma;
  for (Eigen::Index s = 0; s < t; ++s) cov_inc.block(s * q, s * q, q, q) = dt * sigma;
  const Matrix rinv = r.inverse();
  const Vector mean = rinv * m0;
  const Matrix cov = rinv * cov_inc * rinv.transpose() + Matrix::Identity(n, n);
  const Vector wv = Eigen::Map<const Vector>(w.data(), n);
  const Eigen::LLT<Matrix> llt(cov);
  const Vector diff = wv - mean;
  const double quad = diff.dot(llt.solve(diff));
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const double log_normal = -0.5 * (static_cast<double>(n) * std::log(2.0 * std::numbers::pi) + logdet + quad);
  return -(0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi) + log_normal);
}

inline Matrix random_orthogonal(Eigen::Index d, std::mt19937_64& rng) {
  std::normal_distribution<double> n01;
  Matrix a(d, d);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = n01(rng);
  Eigen::HouseholderQR<Matrix> qr(a);
  return qr.householderQ();
}

// q = 1, T = 3 with Σ = 1: -log ∫ p(y, x) dx by the trapezoid rule on a
// ±10·sqrt(δ) cube around the mode, and the Laplace value for comparison.
inline std::pair<double, double> quadrature_vs_laplace(double dt, double mu, double b, const std::vector<int>& ys) {
  const BinnedSpikes y = binned({ys}, dt);
  const NeuronParams th{Vector::Constant(1, mu), Vector::Constant(1, b)};
  const FactorLoadings fl(Matrix::Zero(1, 0));
  const double tau = std::sqrt(dt);
  auto logf = [&](const double* x) {
    double lp = 0.0, prev = 0.0;
    for (int t = 0; t < 3; ++t) {
      const double r = x[t] - prev - mu * dt;
      lp += -0.5 * std::log(2.0 * std::numbers::pi * dt) - r * r / (2.0 * dt);
      const double u = (x[t] - b) / tau;
      lp += std::log(ys[t] != 0 ? phi(u) : phi(-u));
      prev = ys[t] != 0 ? 0.0 : x[t];
    }
    return lp;
  };
  const ModeResult mode = inner_mode(y, th, fl, ObsModel::probit(tau));
  const double c[3] = {mode.mode.x(0, 0), mode.mode.x(0, 1), mode.mode.x(0, 2)};
  const double f0 = logf(c);
  const int m = 125;
  const double h = 0.08 * std::sqrt(dt);
  double sum = 0.0;
  for (int i = -m; i <= m; ++i) {
    for (int j = -m; j <= m; ++j) {
      for (int k = -m; k <= m; ++k) {
        const double x[3] = {c[0] + i * h, c[1] + j * h, c[2] + k * h};
        sum += std::exp(logf(x) - f0);
      }
    }
  }
  return {-(f0 + std::log(sum * h * h * h)), laplace_nll(y, th, fl, ObsModel::probit(tau))};
}

}  // namespace ctlfm::fixtures

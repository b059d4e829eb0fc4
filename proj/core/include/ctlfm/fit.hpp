#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ctlfm/laplace.hpp"
#include "ctlfm/model.hpp"

namespace ctlfm {

enum class GradientMode {
  analytic,           // implicit differentiation through the inner mode
  finite_difference,  // central differences of laplace_nll in z
};

struct FitOptions {
  int restarts = 5;  // random starts z ~ U(-0.5, 0.5), in addition to the spectral start
  bool spectral_start = true;
  double outer_tol = 1e-5;
  double inner_tol = 1e-8;
  HessianBackend inner_backend = HessianBackend::automatic;
  int max_iters = 500;
  std::uint64_t seed = 0;
  ObsModel obs;
  GradientMode gradient = GradientMode::analytic;
  double fd_step = 1e-5;
  bool standard_errors = true;
  double hessian_step = 1e-4;
  double spectral_kernel_width = 0.05;  // seconds
  int threads = 1;
};

struct RestartTrace {
  std::string start;  // "spectral" or "random"
  std::uint64_t seed = 0;
  int iterations = 0;
  int evaluations = 0;
  double nll = 0.0;
  double grad_norm = 0.0;
  bool converged = false;
  std::string message;
  double seconds = 0.0;
};

struct FitResult {
  FactorLoadings lambda_hat;  // identified form
  Matrix z_hat;               // unconstrained coordinates of lambda_hat
  double nll = 0.0;
  double grad_norm = 0.0;
  bool converged = false;
  int iterations = 0;
  int best_restart = -1;
  std::vector<RestartTrace> restarts;

  Matrix sigma_hat;  // ΛΛ' + Ψ
  bool has_standard_errors = false;
  Matrix se_z;      // q×d, NaN when unavailable
  Matrix sigma_se;  // q×q delta-method SEs of Σ̂ entries, zero diagonal
};

/// Outer objective z ↦ laplace_nll(Λ(z)) with a warm-started inner mode.
/// Not thread safe: each restart owns its own instance.
class OuterObjective {
 public:
  OuterObjective(const LaplaceModel& model, std::size_t factors, InnerOptions inner,
                 GradientMode mode = GradientMode::analytic, double fd_step = 1e-5);

  /// z is vec(q×d) in column-major order.
  double operator()(const Vector& z, Vector* grad);
  int evaluations() const noexcept { return evaluations_; }
  int newton_iterations() const noexcept { return newton_iterations_; }

 private:
  double nll_at(const Matrix& z, bool with_gradient, Matrix* grad_lambda);

  const LaplaceModel& model_;
  std::size_t factors_;
  InnerOptions inner_;
  GradientMode mode_;
  double fd_step_;
  Matrix warm_;
  int evaluations_ = 0;
  int newton_iterations_ = 0;
};

/// Canonical representative of the rotation class of Λ: varimax rotation,
/// column signs with a positive largest-magnitude entry, columns ordered by
/// decreasing norm.
FactorLoadings identify(const FactorLoadings& fl);

/// Kaiser-normalized varimax by pairwise plane rotations; returns the rotated loadings.
Matrix varimax(const Matrix& lambda, double eps = 1e-14, int max_iters = 1000);

/// Spectral warm start from the smoothed spike-train correlation matrix.
Matrix spectral_start(const BinnedSpikes& y, std::size_t factors, double kernel_width);

FitResult fit_loadings(const BinnedSpikes& y, const NeuronParams& theta, std::size_t factors,
                       const FitOptions& opts = {});

/// Delta-method SEs of the off-diagonal entries of Σ(z) from a covariance of vec(z).
Matrix sigma_standard_errors(const Matrix& z, const Matrix& cov_z);

/// Covariance of vec(z) from the outer Hessian, with the rotation directions
/// z·A (A skew-symmetric), along which the objective is flat, projected out.
/// Returns false when the Hessian is not positive definite on the complement.
bool rotation_projected_covariance(const Matrix& hessian, const Matrix& z, Matrix& cov);

}  // namespace ctlfm

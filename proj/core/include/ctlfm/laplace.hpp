#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ctlfm/latent_hessian.hpp"
#include "ctlfm/model.hpp"

namespace ctlfm {

/// Observation term linking the latent path to the binned spikes.
///
/// The default is a probit relaxation of the threshold rule,
/// P(y_it = 1 | x) = Φ((x_it - b_i)/τ), with τ = sqrt(delta) unless set.
/// `gaussian_surrogate` replaces every Bernoulli term by -(x_it - w_it)²/2;
/// the joint density is then Gaussian and the Laplace approximation exact.
struct ObsModel {
  double tau = 0.0;  // <= 0 selects sqrt(delta)
  Matrix pseudo_obs;

  static ObsModel probit(double tau = 0.0) { return ObsModel{tau, {}}; }
  static ObsModel gaussian_surrogate(Matrix w) { return ObsModel{0.0, std::move(w)}; }
  bool is_surrogate() const noexcept { return pseudo_obs.size() > 0; }
  double effective_tau(double delta) const;
};

struct InnerOptions {
  double tol = 1e-8;  // on the max-abs gradient of the negative joint log-density
  int max_iters = 200;
  HessianBackend backend = HessianBackend::automatic;
};

struct ModeResult {
  LatentPath mode;
  std::shared_ptr<LatentHessian> hessian;  // negative Hessian factored at the mode
  int iterations = 0;
  double grad_norm = 0.0;
  std::vector<double> objective_trace;  // negative joint log-density per Newton iterate
  bool damped = false;                  // a Levenberg shift was needed on some iterate
};

struct LaplaceEvaluation {
  double nll = 0.0;
  ModeResult mode;
  // dnll/dΛ (q×d) with Ψ = 1 - rowsum(Λ²) following Λ; present when requested.
  std::optional<Matrix> grad_lambda;
};

/// The discretized latent-path model for one recording window with fixed θ.
///
/// Increments ΔX_t = X_t - reset(X_{t-1}) are N(μ·δ, δ·Σ); coordinates that
/// spiked in bin t-1 restart from 0, and X_0 = 0. All products with Σ⁻¹ go
/// through the Woodbury form. The negative Hessian in X is block tridiagonal
/// in time; see latent_hessian.hpp for the two ways it is factored.
class LaplaceModel {
 public:
  LaplaceModel(BinnedSpikes y, NeuronParams theta, ObsModel obs = {});

  std::size_t neurons() const noexcept { return y_.neuron_count(); }
  std::size_t bins() const noexcept { return y_.bins(); }
  double delta() const noexcept { return y_.grid.delta(); }
  double tau() const noexcept { return tau_; }
  const BinnedSpikes& spikes() const noexcept { return y_; }
  const NeuronParams& theta() const noexcept { return theta_; }

  double joint_logdensity(const Matrix& x, const FactorLoadings& fl) const;

  /// Newton iterations with step halving for the mode of p(Y, X | Λ) in X.
  ModeResult inner_mode(const FactorLoadings& fl, const InnerOptions& opts = {},
                        const Matrix* warm_start = nullptr) const;

  LaplaceEvaluation evaluate(const FactorLoadings& fl, bool with_gradient,
                             const InnerOptions& opts = {},
                             const Matrix* warm_start = nullptr) const;

  /// Starting path: per-neuron ramps from 0 that reach b at each spike bin.
  Matrix initial_path() const;

 private:
  struct Terms;
  void observation_terms(const Matrix& x, Terms& terms) const;
  static double objective(const Matrix& residual, const Matrix& precision_residual,
                          const Terms& terms, double prior_constant);

  BinnedSpikes y_;
  NeuronParams theta_;
  ObsModel obs_;
  double tau_ = 0.0;
  Matrix keep_;  // q×T, 1 - y: survives into the next increment
};

double joint_logdensity(const BinnedSpikes& y, const LatentPath& x, const NeuronParams& theta,
                        const FactorLoadings& fl, const ObsModel& obs = {});

ModeResult inner_mode(const BinnedSpikes& y, const NeuronParams& theta, const FactorLoadings& fl,
                      const ObsModel& obs = {}, double tol = 1e-8);

double laplace_nll(const BinnedSpikes& y, const NeuronParams& theta, const FactorLoadings& fl,
                   const ObsModel& obs = {});

/// Chain rule through Λᵢ = zᵢ/sqrt(1+‖zᵢ‖²).
Matrix gradient_z_from_lambda(const Matrix& grad_lambda, const Matrix& z);

}  // namespace ctlfm

#pragma once

#include <memory>
#include <string>
#include <vector>

#include "ctlfm/block_tridiag.hpp"
#include "ctlfm/model.hpp"
#include "ctlfm/woodbury.hpp"

namespace ctlfm {

// Factorizations of the negative Hessian of -log p(Y, X | Λ) in X,
//
//   H = R'(I_T ⊗ P)R + diag(w),   P = Σ⁻¹/δ,
//
// where R maps the path to its increments (R x)_t = x_t - k_{t-1}∘x_{t-1} and
// w = -ℓ'' is the observation curvature.
//
// block_dense factors H as q×q blocks in time: O(T·q³) per factorization.
//
// factor_envelope writes P = P₀ - UU' with P₀ = Ψ⁻¹/δ and U = G/√δ, so
// H = A - VV' with A = R'(I ⊗ P₀)R + diag(w) (one tridiagonal chain per
// neuron, cut at its spikes) and V = R'(I ⊗ U). The dT×dT matrix
// K = I - V'A⁻¹V has block (s,t) = δ_st·I - Σ_i M_i(s,t)·u_i u_i' with
// M_i = R_i A_i⁻¹ R_i', which vanishes unless s and t share an inter-spike
// segment of some neuron. K is banded with a variable profile and is factored
// as a skyline Cholesky. The cost is linear in q for a given spike pattern.
enum class HessianBackend { automatic, block_dense, factor_envelope };

std::string to_string(HessianBackend b);
HessianBackend parse_hessian_backend(const std::string& s);

// The pieces of H⁻¹ that the Laplace gradient needs.
struct InverseSummaries {
  Matrix diag_inv;  // q×T, diag(H⁻¹)
  Vector b_diag;    // diag(B), B = Σ_t [R H⁻¹ R']_tt
  Matrix b_corr;    // B·G for the Woodbury correction G (q×d)
};

class LatentHessian {
 public:
  virtual ~LatentHessian() = default;

  /// Factors H + shift·I at curvature w (q×T). False if not positive definite.
  virtual bool factor(const Matrix& w, double shift) = 0;
  virtual Matrix solve(const Matrix& rhs) const = 0;
  virtual double logdet() const = 0;
  virtual InverseSummaries summaries() const = 0;
  /// Magnitude of the prior part of the diagonal, used to size damping shifts.
  virtual double scale() const = 0;
  virtual HessianBackend kind() const = 0;
};

struct BackendCost {
  double block_dense = 0.0;
  double factor_envelope = 0.0;
};

/// Rough cost of one gradient evaluation with each backend. Depends only on
/// the spike pattern and d, so the automatic choice is reproducible.
BackendCost estimate_backend_cost(const Matrix& keep, Eigen::Index factors);
HessianBackend choose_backend(const Matrix& keep, Eigen::Index factors);

/// `keep` is 1 - y (q×T). `automatic` is resolved with choose_backend.
std::unique_ptr<LatentHessian> make_latent_hessian(HessianBackend backend, const Matrix& keep,
                                                   const WoodburySolver& ws, double delta);

}  // namespace ctlfm

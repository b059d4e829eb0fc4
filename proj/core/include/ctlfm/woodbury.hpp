#pragma once

#include "ctlfm/model.hpp"

namespace ctlfm {

/// Solves against Σ = ΛΛ' + diag(Ψ) through the d×d capacitance matrix
/// I_d + Λ'Ψ⁻¹Λ. Costs O(q·d²) to build and O(q·d·m) per q×m right-hand side.
class WoodburySolver {
 public:
  explicit WoodburySolver(const FactorLoadings& fl);

  /// Σ⁻¹B = Ψ⁻¹B - Ψ⁻¹Λ(I + Λ'Ψ⁻¹Λ)⁻¹Λ'Ψ⁻¹B.
  Matrix solve(const Matrix& rhs) const;
  /// log det Σ = log det(I + Λ'Ψ⁻¹Λ) + Σ log Ψᵢ.
  double logdet() const noexcept { return logdet_; }
  /// Dense Σ⁻¹, assembled as diag(Ψ⁻¹) - GG' with G = Ψ⁻¹Λ·chol(capacitance)⁻ᵀ.
  Matrix inverse() const;
  /// Cholesky-whitened correction G (q×d) with Σ⁻¹ = diag(Ψ⁻¹) - GG'.
  const Matrix& correction() const noexcept { return g_; }
  const Vector& psi_inverse() const noexcept { return psi_inv_; }
  /// X·L⁻¹ for the capacitance factor L; Σ⁻¹Λ = G·L⁻¹.
  Matrix solve_factor_right(const Matrix& x) const;

 private:
  Vector psi_inv_;
  Matrix psi_inv_lambda_;  // Ψ⁻¹Λ
  Eigen::LLT<Matrix> capacitance_;
  Matrix g_;
  double logdet_ = 0.0;
};

Matrix woodbury_solve(const FactorLoadings& fl, const Matrix& rhs);
double woodbury_logdet(const FactorLoadings& fl);

}  // namespace ctlfm

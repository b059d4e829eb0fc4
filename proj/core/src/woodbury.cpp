#include "ctlfm/woodbury.hpp"

#include <cmath>

#include "ctlfm/error.hpp"

namespace ctlfm {

WoodburySolver::WoodburySolver(const FactorLoadings& fl) {
  const Matrix& lambda = fl.lambda();
  const auto d = lambda.cols();
  psi_inv_ = fl.psi().cwiseInverse();
  psi_inv_lambda_ = psi_inv_.asDiagonal() * lambda;
  Matrix cap = Matrix::Identity(d, d);
  cap.noalias() += lambda.transpose() * psi_inv_lambda_;
  capacitance_.compute(cap);
  if (capacitance_.info() != Eigen::Success) {
    throw InternalError("woodbury: capacitance matrix not positive definite");
  }
  // G' = L⁻¹ (Ψ⁻¹Λ)'  so that  GG' = Ψ⁻¹Λ C⁻¹ Λ'Ψ⁻¹.
  Matrix gt = psi_inv_lambda_.transpose();
  capacitance_.matrixL().solveInPlace(gt);
  g_ = gt.transpose();
  logdet_ = fl.psi().array().log().sum();
  const Matrix& l = capacitance_.matrixLLT();
  for (Eigen::Index j = 0; j < d; ++j) logdet_ += 2.0 * std::log(l(j, j));
}

Matrix WoodburySolver::solve(const Matrix& rhs) const {
  if (rhs.rows() != psi_inv_.size()) throw InvalidArgument("woodbury_solve: row count mismatch");
  Matrix out = psi_inv_.asDiagonal() * rhs;
  if (g_.cols() == 0) return out;
  const Matrix projected = g_.transpose() * rhs;
  out.noalias() -= g_ * projected;
  return out;
}

Matrix WoodburySolver::solve_factor_right(const Matrix& x) const {
  if (g_.cols() == 0) return x;
  Matrix xt = x.transpose();
  capacitance_.matrixU().solveInPlace(xt);
  return xt.transpose();
}

Matrix WoodburySolver::inverse() const {
  Matrix out = -g_ * g_.transpose();
  out.diagonal() += psi_inv_;
  return out;
}

Matrix woodbury_solve(const FactorLoadings& fl, const Matrix& rhs) {
  return WoodburySolver(fl).solve(rhs);
}

double woodbury_logdet(const FactorLoadings& fl) { return WoodburySolver(fl).logdet(); }

}  // namespace ctlfm

#pragma once

#include "ctlfm/model.hpp"

namespace ctlfm {

/// Cholesky factorization of a symmetric positive-definite block-tridiagonal
/// matrix with T blocks of size q×q,
///
///   H = L L',  L block lower bidiagonal with blocks L_tt (lower) and L_{t,t-1}.
///
/// Blocks are stored side by side: diagonal block t occupies columns
/// [t·q, (t+1)·q) of the diagonal store, and sub-diagonal block t (= H_{t,t-1},
/// t >= 1) occupies columns [(t-1)·q, t·q) of the sub-diagonal store.
class BlockTridiagonalCholesky {
 public:
  BlockTridiagonalCholesky() = default;

  /// Factors H + shift·I. Returns false (leaving the object unusable) when a
  /// Schur complement is not positive definite.
  bool factor(const Matrix& diag_blocks, const Matrix& sub_blocks, double shift = 0.0);

  Eigen::Index block_size() const noexcept { return q_; }
  Eigen::Index block_count() const noexcept { return t_; }

  /// Solves H x = rhs for rhs laid out as q×T (column t is block t).
  Matrix solve(const Matrix& rhs) const;
  double logdet() const noexcept { return logdet_; }

  /// Backward selected-inversion sweep over Z = H⁻¹. Calls
  /// visit(t, Z_tt, Z_{t,t-1}) for t = T-1, ..., 0; the sub-diagonal block is
  /// an empty matrix at t = 0. Only the tridiagonal part of Z is formed.
  template <class Visitor>
  void selected_inverse(Visitor&& visit) const;

 private:
  auto diag_block(Eigen::Index t) const { return l_diag_.middleCols(t * q_, q_); }
  auto sub_block(Eigen::Index t) const { return l_sub_.middleCols((t - 1) * q_, q_); }

  Eigen::Index q_ = 0;
  Eigen::Index t_ = 0;
  Matrix l_diag_;
  Matrix l_sub_;
  double logdet_ = 0.0;
};

template <class Visitor>
void BlockTridiagonalCholesky::selected_inverse(Visitor&& visit) const {
  const Matrix identity = Matrix::Identity(q_, q_);
  const Matrix empty;
  auto lower_inverse = [&](Eigen::Index t) {
    Matrix inv = identity;
    diag_block(t).template triangularView<Eigen::Lower>().solveInPlace(inv);
    return inv;
  };
  Matrix linv = lower_inverse(t_ - 1);
  Matrix z_next = linv.transpose() * linv;
  for (Eigen::Index t = t_ - 2; t >= 0; --t) {
    linv = lower_inverse(t);
    const Matrix x = sub_block(t + 1) * linv.template triangularView<Eigen::Lower>();
    const Matrix zx = z_next * x;
    Matrix z_sub = -zx;
    visit(t + 1, z_next, z_sub);
    Matrix z_cur = linv.transpose() * linv;
    z_cur.noalias() += x.transpose() * zx;
    z_next = std::move(z_cur);
  }
  visit(Eigen::Index{0}, z_next, empty);
}

}  // namespace ctlfm

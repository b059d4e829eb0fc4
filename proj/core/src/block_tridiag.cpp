#include "ctlfm/block_tridiag.hpp"

#include <cmath>

#include "ctlfm/error.hpp"

namespace ctlfm {

bool BlockTridiagonalCholesky::factor(const Matrix& diag_blocks, const Matrix& sub_blocks,
                                      double shift) {
  q_ = diag_blocks.rows();
  if (q_ == 0 || diag_blocks.cols() % q_ != 0) {
    throw InvalidArgument("block tridiagonal: diagonal store is not q × qT");
  }
  t_ = diag_blocks.cols() / q_;
  if (sub_blocks.rows() != q_ || sub_blocks.cols() != q_ * (t_ - 1)) {
    throw InvalidArgument("block tridiagonal: sub-diagonal store is not q × q(T-1)");
  }
  l_diag_.resize(q_, q_ * t_);
  l_sub_.resize(q_, q_ * (t_ - 1));
  logdet_ = 0.0;

  Matrix schur(q_, q_);
  Matrix x(q_, q_);
  Eigen::LLT<Matrix> llt(q_);
  for (Eigen::Index t = 0; t < t_; ++t) {
    schur = diag_blocks.middleCols(t * q_, q_);
    if (shift != 0.0) schur.diagonal().array() += shift;
    if (t > 0) {
      // L_{t,t-1} = H_{t,t-1} L_{t-1,t-1}⁻ᵀ, computed as (L_{t-1,t-1}⁻¹ H_{t,t-1}')'.
      x = sub_blocks.middleCols((t - 1) * q_, q_).transpose();
      l_diag_.middleCols((t - 1) * q_, q_).triangularView<Eigen::Lower>().solveInPlace(x);
      l_sub_.middleCols((t - 1) * q_, q_) = x.transpose();
      schur.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose(), -1.0);
    }
    llt.compute(schur);
    if (llt.info() != Eigen::Success) return false;
    auto block = l_diag_.middleCols(t * q_, q_);
    block = llt.matrixL();
    for (Eigen::Index j = 0; j < q_; ++j) {
      const double pivot = block(j, j);
      if (!(pivot > 0.0) || !std::isfinite(pivot)) return false;
      logdet_ += 2.0 * std::log(pivot);
    }
  }
  return true;
}

Matrix BlockTridiagonalCholesky::solve(const Matrix& rhs) const {
  if (rhs.rows() != q_ || rhs.cols() != t_) {
    throw InvalidArgument("block tridiagonal solve: right-hand side must be q × T");
  }
  Matrix w = rhs;
  for (Eigen::Index t = 0; t < t_; ++t) {
    if (t > 0) w.col(t).noalias() -= sub_block(t) * w.col(t - 1);
    diag_block(t).triangularView<Eigen::Lower>().solveInPlace(w.col(t));
  }
  for (Eigen::Index t = t_ - 1; t >= 0; --t) {
    if (t + 1 < t_) w.col(t).noalias() -= sub_block(t + 1).transpose() * w.col(t + 1);
    diag_block(t).transpose().triangularView<Eigen::Upper>().solveInPlace(w.col(t));
  }
  return w;
}

}  // namespace ctlfm

#include "ctlfm/latent_hessian.hpp"

#include <algorithm>
#include <cmath>

#include "ctlfm/error.hpp"

namespace ctlfm {

std::string to_string(HessianBackend b) {
  switch (b) {
    case HessianBackend::automatic:
      return "auto";
    case HessianBackend::block_dense:
      return "block_dense";
    case HessianBackend::factor_envelope:
      return "factor_envelope";
  }
  return "auto";
}

HessianBackend parse_hessian_backend(const std::string& s) {
  if (s == "auto") return HessianBackend::automatic;
  if (s == "block_dense") return HessianBackend::block_dense;
  if (s == "factor_envelope") return HessianBackend::factor_envelope;
  throw InvalidArgument("unknown Hessian backend '" + s +
                        "' (expected auto, block_dense or factor_envelope)");
}

namespace {

using Index = Eigen::Index;

class DenseHessian final : public LatentHessian {
 public:
  DenseHessian(const Matrix& keep, const WoodburySolver& ws, double delta)
      : keep_(keep), p_(ws.inverse() / delta), g_(ws.correction()) {}

  bool factor(const Matrix& w, double shift) override {
    const Index q = keep_.rows();
    const Index n = keep_.cols();
    Matrix diag_blocks(q, q * n);
    Matrix sub_blocks(q, q * std::max<Index>(n - 1, 0));
    for (Index s = 0; s < n; ++s) {
      auto block = diag_blocks.middleCols(s * q, q);
      block = p_;
      if (s + 1 < n) {
        const auto k = keep_.col(s);
        block += (k * k.transpose()).cwiseProduct(p_);
      }
      block.diagonal() += w.col(s);
      if (s > 0) sub_blocks.middleCols((s - 1) * q, q) = -(p_ * keep_.col(s - 1).asDiagonal());
    }
    scale_ = 2.0 * p_.diagonal().maxCoeff() + std::max(0.0, w.maxCoeff());
    return chol_.factor(diag_blocks, sub_blocks, shift);
  }

  Matrix solve(const Matrix& rhs) const override { return chol_.solve(rhs); }
  double logdet() const override { return chol_.logdet(); }
  double scale() const override { return scale_; }
  HessianBackend kind() const override { return HessianBackend::block_dense; }

  InverseSummaries summaries() const override {
    const Index q = keep_.rows();
    const Index n = keep_.cols();
    InverseSummaries out;
    out.diag_inv.resize(q, n);
    Matrix acc = Matrix::Zero(q, q);
    chol_.selected_inverse([&](Index s, const Matrix& z_diag, const Matrix& z_sub) {
      out.diag_inv.col(s) = z_diag.diagonal();
      acc += z_diag;
      if (s > 0) {
        const Matrix m = z_sub * keep_.col(s - 1).asDiagonal();
        acc -= m + m.transpose();
      }
      if (s + 1 < n) {
        const auto k = keep_.col(s);
        acc += (k * k.transpose()).cwiseProduct(z_diag);
      }
    });
    out.b_diag = acc.diagonal();
    out.b_corr = acc * g_;
    return out;
  }

 private:
  Matrix keep_;
  Matrix p_;
  Matrix g_;
  BlockTridiagonalCholesky chol_;
  double scale_ = 1.0;
};

// Lower-triangular storage of a symmetric matrix whose row r holds columns
// [first[r], r]; first[] is non-decreasing.
struct Skyline {
  std::vector<Index> first;
  std::vector<Index> offset;  // start of row r in data
  std::vector<double> data;

  Index size() const { return static_cast<Index>(first.size()); }
  double* row(Index r) { return data.data() + offset[r] - first[r]; }
  const double* row(Index r) const { return data.data() + offset[r] - first[r]; }
  // Symmetric access; (r, c) must lie inside the profile.
  double at(Index r, Index c) const { return r >= c ? row(r)[c] : row(c)[r]; }
};

double dot(const double* a, const double* b, Index n) {
  if (n <= 0) return 0.0;
  return Eigen::Map<const Vector>(a, n).dot(Eigen::Map<const Vector>(b, n));
}

void axpy(double alpha, const double* x, double* y, Index n) {
  if (n <= 0) return;
  Eigen::Map<Vector>(y, n) += alpha * Eigen::Map<const Vector>(x, n);
}

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Tridiagonal LDL' over each neuron's whole row. The sub-diagonal is zero
// across spikes, so segments decouple automatically.
struct Chains {
  Matrix mult;       // L(t, t-1)
  Matrix inv_pivot;  // 1/D(t)

  void solve_row(Index i, double* x, Index a, Index e) const {
    for (Index t = a + 1; t <= e; ++t) x[t - a] -= mult(i, t) * x[t - a - 1];
    for (Index t = a; t <= e; ++t) x[t - a] *= inv_pivot(i, t);
    for (Index t = e - 1; t >= a; --t) x[t - a] -= mult(i, t + 1) * x[t - a + 1];
  }

  // Same solve applied to every column of a row-major block at once.
  void solve_rows(Index i, RowMatrix& x, Index a) const {
    const Index len = x.rows();
    for (Index t = 1; t < len; ++t) x.row(t) -= mult(i, a + t) * x.row(t - 1);
    for (Index t = 0; t < len; ++t) x.row(t) *= inv_pivot(i, a + t);
    for (Index t = len - 2; t >= 0; --t) x.row(t) -= mult(i, a + t + 1) * x.row(t + 1);
  }

  // Upper triangle of the inverse of one segment, row by row from
  // Z(t,s) = δ_ts/D_t - L(t+1,t)·Z(t+1,s), s >= t. The lower triangle is left unset.
  void upper_inverse(Index i, Index a, Index len, RowMatrix& g) const {
    g.resize(len, len);
    g(len - 1, len - 1) = inv_pivot(i, a + len - 1);
    for (Index t = len - 2; t >= 0; --t) {
      const double m = mult(i, a + t + 1);
      const Index w = len - t - 1;
      g.row(t).tail(w) = -m * g.row(t + 1).tail(w);
      g(t, t) = inv_pivot(i, a + t) - m * g(t, t + 1);
    }
  }
};

void fill_lower(RowMatrix& g) {
  for (Index t = 0; t < g.rows(); ++t) {
    for (Index u = t + 1; u < g.rows(); ++u) g(u, t) = g(t, u);
  }
}

// Upper triangle of M = R G R' from the upper triangle of G; R has unit
// diagonal and -1 below it.
void upper_m(const RowMatrix& g, RowMatrix& m, Vector& dv) {
  const Index len = g.rows();
  m.resize(len, len);
  dv.resize(len);
  dv = g.row(0).transpose();
  m(0, 0) = dv[0];
  if (len > 1) m.row(0).tail(len - 1) = (dv.tail(len - 1) - dv.head(len - 1)).transpose();
  for (Index s = 1; s < len; ++s) {
    const Index w = len - s;
    dv.segment(s, w) = (g.row(s).segment(s, w) - g.row(s - 1).segment(s, w)).transpose();
    dv[s - 1] = g(s - 1, s) - g(s - 1, s - 1);
    m.row(s).segment(s, w) = (dv.segment(s, w) - dv.segment(s - 1, w)).transpose();
  }
}

struct Segment {
  Index neuron;
  Index start;
  Index end;  // inclusive
};

std::vector<Segment> segments_of(const Matrix& keep) {
  std::vector<Segment> out;
  const Index n = keep.cols();
  for (Index i = 0; i < keep.rows(); ++i) {
    Index a = 0;
    for (Index t = 0; t < n; ++t) {
      if (keep(i, t) == 0.0 || t + 1 == n) {
        out.push_back({i, a, t});
        a = t + 1;
      }
    }
  }
  return out;
}

// first bin that shares a segment with bin t for some neuron
std::vector<Index> profile_of(const Matrix& keep) {
  const Index n = keep.cols();
  std::vector<Index> first(static_cast<std::size_t>(n));
  std::vector<Index> start(static_cast<std::size_t>(keep.rows()), 0);
  for (Index t = 0; t < n; ++t) {
    Index f = t;
    for (Index i = 0; i < keep.rows(); ++i) {
      if (t > 0 && keep(i, t - 1) == 0.0) start[i] = t;
      f = std::min(f, start[i]);
    }
    first[t] = f;
  }
  return first;
}

constexpr Index kPanel = 48;

class EnvelopeHessian final : public LatentHessian {
 public:
  EnvelopeHessian(const Matrix& keep, const WoodburySolver& ws, double delta)
      : keep_(keep), segments_(segments_of(keep)) {
    const Index q = keep.rows();
    const Index n = keep.cols();
    d_ = ws.correction().cols();
    p0_ = ws.psi_inverse() / delta;
    sqrt_delta_ = std::sqrt(delta);
    u_ = ws.correction() / sqrt_delta_;
    uu_.resize(q);
    for (Index i = 0; i < q; ++i) uu_[i] = u_.row(i).transpose() * u_.row(i);

    const std::vector<Index> first_bin = profile_of(keep);
    const Index rows = d_ * n;
    k_.first.resize(rows);
    k_.offset.resize(rows);
    Index pos = 0;
    for (Index t = 0; t < n; ++t) {
      for (Index a = 0; a < d_; ++a) {
        const Index r = t * d_ + a;
        k_.first[r] = first_bin[t] * d_;
        k_.offset[r] = pos;
        pos += r - k_.first[r] + 1;
      }
    }
    k_.data.assign(static_cast<std::size_t>(pos), 0.0);
    chains_.mult.resize(q, n);
    chains_.inv_pivot.resize(q, n);
  }

  bool factor(const Matrix& w, double shift) override {
    const Index q = keep_.rows();
    const Index n = keep_.cols();
    scale_ = 2.0 * p0_.maxCoeff() + std::max(0.0, w.maxCoeff());
    logdet_ = 0.0;
    for (Index i = 0; i < q; ++i) {
      const double p = p0_[i];
      double prev = 0.0;
      for (Index t = 0; t < n; ++t) {
        const double k_next = (t + 1 < n) ? keep_(i, t) : 0.0;
        const double diag = p * (1.0 + k_next) + w(i, t) + shift;
        const double sub = t > 0 ? -p * keep_(i, t - 1) : 0.0;
        const double m = t > 0 ? sub / prev : 0.0;
        const double piv = diag - m * sub;
        if (!(piv > 0.0)) return false;
        chains_.mult(i, t) = m;
        chains_.inv_pivot(i, t) = 1.0 / piv;
        logdet_ += std::log(piv);
        prev = piv;
      }
    }

    std::fill(k_.data.begin(), k_.data.end(), 0.0);
    for (Index r = 0; r < k_.size(); ++r) k_.row(r)[r] = 1.0;
    RowMatrix g, mseg, mlow;
    Vector dv;
    for (const Segment& sg : segments_) {
      const Index len = sg.end - sg.start + 1;
      chains_.upper_inverse(sg.neuron, sg.start, len, g);
      upper_m(g, mseg, dv);
      mlow.noalias() = mseg.transpose();  // lower triangle, row-contiguous
      const Matrix& uu = uu_[sg.neuron];
      // K((t,α),(s,β)) -= M(t,s)·u_α u_β for s <= t
      for (Index tl = 0; tl < len; ++tl) {
        const double* mrow = mlow.row(tl).data();
        for (Index a = 0; a < d_; ++a) {
          double* dst = k_.row((sg.start + tl) * d_ + a) + sg.start * d_;
          for (Index b = 0; b < d_; ++b) {
            const double c = uu(a, b);
            double* col = dst + b;
            for (Index sl = 0; sl < tl; ++sl) col[sl * d_] -= c * mrow[sl];
          }
          for (Index b = 0; b <= a; ++b) dst[tl * d_ + b] -= uu(a, b) * mrow[tl];
        }
      }
    }
    return cholesky();
  }

  Matrix solve(const Matrix& rhs) const override {
    const Index q = keep_.rows();
    const Index n = keep_.cols();
    Matrix y = rhs;
    solve_a(y);
    // c_t = U'(R y)_t
    Vector c(d_ * n);
    for (Index t = 0; t < n; ++t) {
      Vector ry = y.col(t);
      if (t > 0) ry -= keep_.col(t - 1).cwiseProduct(y.col(t - 1));
      c.segment(t * d_, d_) = u_.transpose() * ry;
    }
    solve_k(c);
    // y += A⁻¹ R'(I ⊗ U) c
    Matrix m(q, n);
    for (Index t = 0; t < n; ++t) m.col(t) = u_ * c.segment(t * d_, d_);
    Matrix rt = m;
    for (Index t = 0; t + 1 < n; ++t) rt.col(t) -= keep_.col(t).cwiseProduct(m.col(t + 1));
    solve_a(rt);
    return y + rt;
  }

  double logdet() const override { return logdet_; }
  double scale() const override { return scale_; }
  HessianBackend kind() const override { return HessianBackend::factor_envelope; }

  InverseSummaries summaries() const override {
    const Index q = keep_.rows();
    const Index n = keep_.cols();
    const Skyline z = selected_inverse();
    InverseSummaries out;
    out.diag_inv.resize(q, n);
    out.b_diag = Vector::Zero(q);
    Matrix xi = Matrix::Zero(d_ * d_, q);  // column i holds Ξ_i = Σ M(s,t) Z_st
    RowMatrix g, mseg, zt;
    Vector dv;
    for (const Segment& sg : segments_) {
      const Index i = sg.neuron;
      const Index a = sg.start;
      const Index len = sg.end - sg.start + 1;
      chains_.upper_inverse(i, a, len, g);
      upper_m(g, mseg, dv);
      fill_lower(g);
      const double* ui = uu_[i].data();  // u_i u_i', column-major d×d
      double* x = xi.col(i).data();
      // z̃(s, s') = u_i' Z_ss' u_i
      zt.resize(len, len);
      for (Index sl = 0; sl < len; ++sl) {
        const Index base_r = (a + sl) * d_;
        for (Index tl = 0; tl < sl; ++tl) {
          const Index base_c = (a + tl) * d_;
          const double m = mseg(tl, sl);
          double v = 0.0;
          for (Index r = 0; r < d_; ++r) {
            const double* zr = z.row(base_r + r) + base_c;
            for (Index c = 0; c < d_; ++c) {
              v += ui[r + c * d_] * zr[c];
              x[r + c * d_] += m * zr[c];
              x[c + r * d_] += m * zr[c];
            }
          }
          zt(sl, tl) = v;
          zt(tl, sl) = v;
        }
        const double m = mseg(sl, sl);
        double v = 0.0;
        for (Index r = 0; r < d_; ++r) {
          const double* zr = z.row(base_r + r) + base_r;
          for (Index c = 0; c <= r; ++c) {
            const double f = c == r ? 1.0 : 2.0;
            v += f * ui[r + c * d_] * zr[c];
            x[r + c * d_] += m * zr[c];
            if (c != r) x[c + r * d_] += m * zr[c];
          }
        }
        zt(sl, sl) = v;
      }
      // N = A⁻¹ R'z̃R A⁻¹ so that M z̃ M = R N R'. X = A⁻¹ R'z̃R, N = X·G.
      for (Index r = 0; r + 1 < len; ++r) zt.row(r) -= zt.row(r + 1);
      for (Index r = 0; r < len; ++r) {
        double* row = zt.row(r).data();
        for (Index c = 0; c + 1 < len; ++c) row[c] -= row[c + 1];
      }
      chains_.solve_rows(i, zt, a);
      double bd = 0.0;
      double n_prev = 0.0;
      for (Index tl = 0; tl < len; ++tl) {
        const double n_tt = zt.row(tl).dot(g.row(tl));
        out.diag_inv(i, a + tl) = g(tl, tl) + n_tt;
        double rnr = n_tt;
        if (tl > 0) rnr += n_prev - 2.0 * zt.row(tl).dot(g.row(tl - 1));
        bd += mseg(tl, tl) + rnr;
        n_prev = n_tt;
      }
      out.b_diag[i] += bd;
    }
    out.b_corr.resize(q, d_);
    for (Index i = 0; i < q; ++i) {
      const Eigen::Map<const Matrix> xm(xi.col(i).data(), d_, d_);
      out.b_corr.row(i) = sqrt_delta_ * (u_.row(i) * xm);
    }
    return out;
  }

 private:
  void solve_a(Matrix& y) const {
    const Index n = keep_.cols();
    std::vector<double> buf(static_cast<std::size_t>(n));
    for (Index i = 0; i < keep_.rows(); ++i) {
      for (Index t = 0; t < n; ++t) buf[t] = y(i, t);
      chains_.solve_row(i, buf.data(), 0, n - 1);
      for (Index t = 0; t < n; ++t) y(i, t) = buf[t];
    }
  }

  void solve_k(Vector& x) const {
    const Index rows = k_.size();
    for (Index r = 0; r < rows; ++r) {
      const double* lr = k_.row(r);
      const Index fr = k_.first[r];
      x[r] = (x[r] - dot(lr + fr, x.data() + fr, r - fr)) / lr[r];
    }
    for (Index r = rows - 1; r >= 0; --r) {
      const double* lr = k_.row(r);
      const Index fr = k_.first[r];
      x[r] /= lr[r];
      axpy(-x[r], lr + fr, x.data() + fr, r - fr);
    }
  }

  // Dense copy of rows [r0, r1) × columns [c0, c1) of a skyline; entries
  // outside the profile are zero.
  static void gather(const Skyline& s, Index r0, Index r1, Index c0, Index c1, Matrix& out) {
    out.setZero(r1 - r0, c1 - c0);
    for (Index r = r0; r < r1; ++r) {
      const Index lo = std::max(c0, s.first[r]);
      const Index hi = std::min(c1, r + 1);
      const double* src = s.row(r);
      for (Index c = lo; c < hi; ++c) out(r - r0, c - c0) = src[c];
    }
  }

  static void scatter(Skyline& s, Index r0, Index c0, const Matrix& in, bool lower_only) {
    for (Index rl = 0; rl < in.rows(); ++rl) {
      const Index r = r0 + rl;
      const Index lo = std::max(c0, s.first[r]);
      const Index hi = std::min(c0 + in.cols(), lower_only ? r + 1 : c0 + in.cols());
      double* dst = s.row(r);
      for (Index c = lo; c < hi; ++c) dst[c] = in(rl, c - c0);
    }
  }

  // Panel-blocked skyline Cholesky: L_JB = K_JB L_BB⁻ᵀ, then the diagonal block.
  bool cholesky() {
    const Index rows = k_.size();
    Matrix kb, lbb, kjj;
    for (Index r0 = 0; r0 < rows; r0 += kPanel) {
      const Index r1 = std::min(rows, r0 + kPanel);
      const Index f = k_.first[r0];
      gather(k_, r0, r1, r0, r1, kjj);
      if (f < r0) {
        gather(k_, r0, r1, f, r0, kb);
        gather(k_, f, r0, f, r0, lbb);
        Matrix xt = kb.transpose();
        lbb.triangularView<Eigen::Lower>().solveInPlace(xt);
        kjj.selfadjointView<Eigen::Lower>().rankUpdate(xt.transpose(), -1.0);
        scatter(k_, r0, f, xt.transpose(), false);
      }
      Eigen::LLT<Matrix> llt(kjj.selfadjointView<Eigen::Lower>());
      if (llt.info() != Eigen::Success) return false;
      const Matrix ljj = llt.matrixL();
      for (Index j = 0; j < ljj.rows(); ++j) {
        if (!(ljj(j, j) > 0.0)) return false;
        logdet_ += 2.0 * std::log(ljj(j, j));
      }
      scatter(k_, r0, r0, ljj, true);
    }
    return true;
  }

  // Entries of K⁻¹ inside the profile, by block Takahashi recurrences:
  // Z_BJ = -Z_BB L_BJ L_JJ⁻¹, Z_JJ = L_JJ⁻ᵀ L_JJ⁻¹ - (L_BJ L_JJ⁻¹)' Z_BJ.
  Skyline selected_inverse() const {
    Skyline z = k_;
    const Index rows = k_.size();
    Matrix ljj, lbj, zbb;
    const Index panels = (rows + kPanel - 1) / kPanel;
    Index last = rows - 1;
    for (Index p = panels - 1; p >= 0; --p) {
      const Index r0 = p * kPanel;
      const Index r1 = std::min(rows, r0 + kPanel);
      while (last >= r1 && k_.first[last] > r1 - 1) --last;
      gather(k_, r0, r1, r0, r1, ljj);
      Matrix linv = Matrix::Identity(r1 - r0, r1 - r0);
      ljj.triangularView<Eigen::Lower>().solveInPlace(linv);
      Matrix zjj = linv.transpose() * linv;
      if (last >= r1) {
        gather(k_, r1, last + 1, r0, r1, lbj);
        gather(z, r1, last + 1, r1, last + 1, zbb);
        const Matrix y = lbj * linv;
        const Matrix zbj = -(zbb.selfadjointView<Eigen::Lower>() * y);
        zjj.noalias() -= y.transpose() * zbj;
        scatter(z, r1, r0, zbj, false);
      }
      scatter(z, r0, r0, zjj, true);
    }
    return z;
  }

  Matrix keep_;
  std::vector<Segment> segments_;
  Index d_ = 0;
  Vector p0_;
  double sqrt_delta_ = 1.0;
  Matrix u_;
  std::vector<Matrix> uu_;
  Chains chains_;
  Skyline k_;
  double logdet_ = 0.0;
  double scale_ = 1.0;
};

}  // namespace

BackendCost estimate_backend_cost(const Matrix& keep, Index factors) {
  // Seconds on the reference machine for four factorizations and one set of
  // inverse summaries, the typical work of one gradient evaluation. Only the
  // ratio matters.
  BackendCost c;
  const double q = static_cast<double>(keep.rows());
  const double n = static_cast<double>(keep.cols());
  const double d = static_cast<double>(std::max<Index>(factors, 1));
  c.block_dense = 5.25 * n * (5e-10 * q * q * q + 1.5e-8 * q * q + 2e-7);
  double seg = 0.0;
  for (const Segment& sg : segments_of(keep)) {
    const double len = static_cast<double>(sg.end - sg.start + 1);
    seg += len * len;
  }
  double band = 0.0;
  const std::vector<Index> first = profile_of(keep);
  for (Index t = 0; t < static_cast<Index>(first.size()); ++t) {
    const double w = d * static_cast<double>(t - first[t] + 1);
    band += d * w * w;
  }
  c.factor_envelope = 6.0 * (1.7e-10 * band + 2.5e-9 * (1.0 + 0.5 * d * d) * seg);
  return c;
}

HessianBackend choose_backend(const Matrix& keep, Index factors) {
  if (factors == 0) return HessianBackend::block_dense;
  const BackendCost c = estimate_backend_cost(keep, factors);
  return c.factor_envelope < c.block_dense ? HessianBackend::factor_envelope
                                           : HessianBackend::block_dense;
}

std::unique_ptr<LatentHessian> make_latent_hessian(HessianBackend backend, const Matrix& keep,
                                                   const WoodburySolver& ws, double delta) {
  if (backend == HessianBackend::automatic) backend = choose_backend(keep, ws.correction().cols());
  if (backend == HessianBackend::factor_envelope && ws.correction().cols() > 0) {
    return std::make_unique<EnvelopeHessian>(keep, ws, delta);
  }
  return std::make_unique<DenseHessian>(keep, ws, delta);
}

}  // namespace ctlfm

#include "ctlfm/laplace.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "ctlfm/error.hpp"
#include "ctlfm/probit.hpp"
#include "ctlfm/woodbury.hpp"

namespace ctlfm {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

struct PriorState {
  double constant;  // T·[(q/2)·log(2πδ) + ½·log det Σ]
};

}  // namespace

struct LaplaceModel::Terms {
  Matrix value;
  Matrix d1;
  Matrix d2;
  Matrix d3;
};

double ObsModel::effective_tau(double delta) const { return tau > 0.0 ? tau : std::sqrt(delta); }

LaplaceModel::LaplaceModel(BinnedSpikes y, NeuronParams theta, ObsModel obs)
    : y_(std::move(y)), theta_(std::move(theta)), obs_(std::move(obs)) {
  theta_.validate();
  if (theta_.size() != y_.neuron_count()) {
    throw InvalidArgument("laplace: neuron params and spikes disagree on neuron count");
  }
  if (obs_.is_surrogate() &&
      (obs_.pseudo_obs.rows() != y_.y.rows() || obs_.pseudo_obs.cols() != y_.y.cols())) {
    throw InvalidArgument("laplace: pseudo-observations must be q × T");
  }
  tau_ = obs_.effective_tau(y_.grid.delta());
  if (!(tau_ > 0.0) || !std::isfinite(tau_)) throw InvalidArgument("laplace: tau must be > 0");
  keep_ = (1 - y_.y.cast<int>().array()).cast<double>().matrix();
}

void LaplaceModel::observation_terms(const Matrix& x, Terms& t) const {
  const Eigen::Index q = x.rows();
  const Eigen::Index n = x.cols();
  t.value.resize(q, n);
  t.d1.resize(q, n);
  t.d2.resize(q, n);
  t.d3.resize(q, n);
  if (obs_.is_surrogate()) {
    const Matrix r = x - obs_.pseudo_obs;
    t.value = -0.5 * r.cwiseProduct(r);
    t.d1 = -r;
    t.d2.setConstant(-1.0);
    t.d3.setZero();
    return;
  }
  const double inv_tau = 1.0 / tau_;
  for (Eigen::Index s = 0; s < n; ++s) {
    for (Eigen::Index i = 0; i < q; ++i) {
      const double u = (x(i, s) - theta_.b[i]) * inv_tau;
      if (y_.y(i, s) != 0) {
        const LogPhi g = log_normal_cdf(u);
        t.value(i, s) = g.value;
        t.d1(i, s) = g.d1 * inv_tau;
        t.d2(i, s) = g.d2 * inv_tau * inv_tau;
        t.d3(i, s) = g.d3 * inv_tau * inv_tau * inv_tau;
      } else {
        const LogPhi g = log_normal_cdf(-u);
        t.value(i, s) = g.value;
        t.d1(i, s) = -g.d1 * inv_tau;
        t.d2(i, s) = g.d2 * inv_tau * inv_tau;
        t.d3(i, s) = -g.d3 * inv_tau * inv_tau * inv_tau;
      }
    }
  }
}

namespace {

Matrix residuals(const Matrix& x, const Matrix& keep, const Vector& drift_step) {
  Matrix r = x;
  r.colwise() -= drift_step;
  for (Eigen::Index s = 1; s < x.cols(); ++s) {
    r.col(s) -= keep.col(s - 1).cwiseProduct(x.col(s - 1));
  }
  return r;
}

PriorState prior_state(const WoodburySolver& ws, double delta, Eigen::Index q, Eigen::Index n) {
  PriorState p;
  p.constant = static_cast<double>(n) *
               (0.5 * static_cast<double>(q) * std::log(2.0 * std::numbers::pi * delta) +
                0.5 * ws.logdet());
  return p;
}

}  // namespace

double LaplaceModel::objective(const Matrix& residual, const Matrix& precision_residual,
                               const Terms& terms, double prior_constant) {
  return prior_constant + 0.5 * residual.cwiseProduct(precision_residual).sum() -
         terms.value.sum();
}

double LaplaceModel::joint_logdensity(const Matrix& x, const FactorLoadings& fl) const {
  const auto q = static_cast<Eigen::Index>(neurons());
  const auto n = static_cast<Eigen::Index>(bins());
  if (x.rows() != q || x.cols() != n) {
    throw InvalidArgument("joint_logdensity: latent path must be q × T");
  }
  if (static_cast<Eigen::Index>(fl.neurons()) != q) {
    throw InvalidArgument("joint_logdensity: loadings have the wrong neuron count");
  }
  const WoodburySolver ws(fl);
  const Matrix r = residuals(x, keep_, theta_.mu * delta());
  const Matrix pr = ws.solve(r) / delta();
  Terms terms;
  observation_terms(x, terms);
  const double constant = prior_state(ws, delta(), q, n).constant;
  return -objective(r, pr, terms, constant);
}

Matrix LaplaceModel::initial_path() const {
  const auto q = static_cast<Eigen::Index>(neurons());
  const auto n = static_cast<Eigen::Index>(bins());
  Matrix x(q, n);
  const double dt = delta();
  for (Eigen::Index i = 0; i < q; ++i) {
    const double b = theta_.b[i];
    const double cap = std::max(b - 3.0 * tau_, 0.5 * b);
    Eigen::Index last = -1;  // bin whose increment restarts from 0
    for (Eigen::Index s = 0; s < n; ++s) {
      if (y_.y(i, s) == 0) continue;
      const double span = static_cast<double>(s - last);
      for (Eigen::Index u = last + 1; u <= s; ++u) x(i, u) = b * static_cast<double>(u - last) / span;
      last = s;
    }
    for (Eigen::Index u = last + 1; u < n; ++u) {
      x(i, u) = std::min(theta_.mu[i] * dt * static_cast<double>(u - last), cap);
    }
  }
  return x;
}

ModeResult LaplaceModel::inner_mode(const FactorLoadings& fl, const InnerOptions& opts,
                                    const Matrix* warm_start) const {
  const auto q = static_cast<Eigen::Index>(neurons());
  const auto n = static_cast<Eigen::Index>(bins());
  if (static_cast<Eigen::Index>(fl.neurons()) != q) {
    throw InvalidArgument("inner_mode: loadings have the wrong neuron count");
  }
  if (!(opts.tol > 0.0)) throw InvalidArgument("inner_mode: tol must be > 0");
  const double dt = delta();
  const WoodburySolver ws(fl);
  const PriorState prior = prior_state(ws, dt, q, n);
  const Vector drift_step = theta_.mu * dt;

  struct State {
    Matrix x, r, pr, grad;
    Terms terms;
    double f = 0.0;
  };
  auto evaluate_state = [&](State& st) {
    st.r = residuals(st.x, keep_, drift_step);
    st.pr = ws.solve(st.r) / dt;
    observation_terms(st.x, st.terms);
    st.f = objective(st.r, st.pr, st.terms, prior.constant);
  };
  auto gradient = [&](State& st) {
    st.grad = st.pr - st.terms.d1;
    for (Eigen::Index s = 0; s + 1 < n; ++s) {
      st.grad.col(s) -= keep_.col(s).cwiseProduct(st.pr.col(s + 1));
    }
  };

  ModeResult result;
  result.hessian = make_latent_hessian(opts.backend, keep_, ws, dt);
  LatentHessian& hessian = *result.hessian;
  State cur;
  if (warm_start != nullptr) {
    if (warm_start->rows() != q || warm_start->cols() != n) {
      throw InvalidArgument("inner_mode: warm start must be q × T");
    }
    cur.x = *warm_start;
  } else {
    cur.x = initial_path();
  }
  evaluate_state(cur);
  gradient(cur);

  std::vector<std::string> trace;
  auto fail = [&](const std::string& why) {
    std::ostringstream os;
    os << "inner_mode: " << why << " after " << result.iterations << " Newton iterations";
    throw NonConvergence(os.str(), trace);
  };

  for (int iter = 0;; ++iter) {
    result.iterations = iter;
    const double gnorm = cur.grad.cwiseAbs().maxCoeff();
    result.objective_trace.push_back(cur.f);
    {
      std::ostringstream os;
      os.precision(17);
      os << "newton " << iter << " f=" << cur.f << " |g|=" << gnorm;
      trace.push_back(os.str());
    }
    const Matrix w = -cur.terms.d2;
    bool ok = hessian.factor(w, 0.0);
    if (!ok) {
      // Levenberg shift; the probit objective is convex, so this only guards rounding.
      result.damped = true;
      const double scale = hessian.scale();
      for (double shift = 1e-10 * scale; shift < 1e6 * scale && !ok; shift *= 10.0) {
        ok = hessian.factor(w, shift);
      }
      if (!ok) fail("negative Hessian is not positive definite even with damping");
    } else if (gnorm <= opts.tol) {
      result.mode.x = std::move(cur.x);
      result.grad_norm = gnorm;
      return result;
    }
    if (iter >= opts.max_iters) fail("iteration limit reached");

    const Matrix step = -hessian.solve(cur.grad);
    const double slope = cur.grad.cwiseProduct(step).sum();
    if (!(slope < 0.0)) fail("Newton direction is not a descent direction");
    const double noise = 1e-12 * (1.0 + std::abs(cur.f));
    State next;
    bool accepted = false;
    for (double alpha = 1.0; alpha > 1e-12; alpha *= 0.5) {
      next.x = cur.x + alpha * step;
      evaluate_state(next);
      if (next.f <= cur.f + 1e-4 * alpha * slope) {
        accepted = true;
      } else if (alpha == 1.0 && -slope < noise && next.f <= cur.f + noise) {
        // Predicted decrease is below rounding in f: take the Newton step.
        accepted = true;
      }
      if (accepted) break;
    }
    if (!accepted) fail("line search could not decrease the objective");
    gradient(next);
    cur = std::move(next);
  }
}

LaplaceEvaluation LaplaceModel::evaluate(const FactorLoadings& fl, bool with_gradient,
                                         const InnerOptions& opts,
                                         const Matrix* warm_start) const {
  LaplaceEvaluation out;
  out.mode = inner_mode(fl, opts, warm_start);
  const auto q = static_cast<Eigen::Index>(neurons());
  const auto n = static_cast<Eigen::Index>(bins());
  const double f_mode = out.mode.objective_trace.back();
  const LatentHessian& hessian = *out.mode.hessian;
  out.nll = f_mode - 0.5 * static_cast<double>(q * n) * kLog2Pi + 0.5 * hessian.logdet();
  if (!with_gradient) return out;

  // dnll/dΣ = ½T·Σ⁻¹ - (1/2δ)·Σ⁻¹ S Σ⁻¹ with
  // S = Σ_t r_t r_t' + B - Σ_t (r_t a_t' + a_t r_t'), r the increment
  // residuals at the mode and a the implicit term R H⁻¹ v. Only S·G and
  // diag(S) are formed, never a q×q matrix.
  const double dt = delta();
  const Matrix& x = out.mode.mode.x;
  const Matrix r = residuals(x, keep_, theta_.mu * dt);
  const InverseSummaries sm = hessian.summaries();

  Matrix ra = Matrix::Zero(q, n);
  if (!obs_.is_surrogate()) {
    Terms terms;
    observation_terms(x, terms);
    // ∂(½ log det H)/∂x = ½ diag(H⁻¹) ∘ (-ℓ'''); its pull-back through the mode.
    const Matrix v = 0.5 * sm.diag_inv.cwiseProduct(-terms.d3);
    const Matrix a = hessian.solve(v);
    ra = a;
    for (Eigen::Index s = 1; s < n; ++s) ra.col(s) -= keep_.col(s - 1).cwiseProduct(a.col(s - 1));
  }

  const WoodburySolver ws(fl);
  const Matrix& lambda = fl.lambda();
  const Matrix& c = ws.correction();
  const Vector& psi_inv = ws.psi_inverse();
  auto s_times = [&](const Matrix& m, const Matrix& b_m) {
    const Matrix rm = r.transpose() * m;
    Matrix out_m = r * rm + b_m;
    out_m.noalias() -= r * (ra.transpose() * m);
    out_m.noalias() -= ra * rm;
    return out_m;
  };
  const Matrix y = ws.solve(lambda);  // Σ⁻¹Λ = G·L⁻¹
  const Matrix sy = s_times(y, ws.solve_factor_right(sm.b_corr));
  const Matrix sc = s_times(c, sm.b_corr);
  const Vector s_diag = r.cwiseProduct(r).rowwise().sum() + sm.b_diag -
                        2.0 * r.cwiseProduct(ra).rowwise().sum();
  const Matrix csc = c.transpose() * sc;

  const double half_t = 0.5 * static_cast<double>(n);
  Matrix g_lambda = half_t * y - (0.5 / dt) * ws.solve(sy);
  Vector g_diag(q);
  for (Eigen::Index i = 0; i < q; ++i) {
    const auto ci = c.row(i);
    const double sss = psi_inv[i] * psi_inv[i] * s_diag[i] - 2.0 * psi_inv[i] * sc.row(i).dot(ci) +
                       ci.dot(csc * ci.transpose());
    g_diag[i] = half_t * (psi_inv[i] - ci.squaredNorm()) - (0.5 / dt) * sss;
  }
  g_lambda -= g_diag.asDiagonal() * lambda;
  out.grad_lambda = 2.0 * g_lambda;
  return out;
}

double joint_logdensity(const BinnedSpikes& y, const LatentPath& x, const NeuronParams& theta,
                        const FactorLoadings& fl, const ObsModel& obs) {
  return LaplaceModel(y, theta, obs).joint_logdensity(x.x, fl);
}

ModeResult inner_mode(const BinnedSpikes& y, const NeuronParams& theta, const FactorLoadings& fl,
                      const ObsModel& obs, double tol) {
  InnerOptions opts;
  opts.tol = tol;
  return LaplaceModel(y, theta, obs).inner_mode(fl, opts);
}

double laplace_nll(const BinnedSpikes& y, const NeuronParams& theta, const FactorLoadings& fl,
                   const ObsModel& obs) {
  return LaplaceModel(y, theta, obs).evaluate(fl, false).nll;
}

Matrix gradient_z_from_lambda(const Matrix& grad_lambda, const Matrix& z) {
  Matrix grad_z(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double scale = std::sqrt(1.0 + z.row(i).squaredNorm());
    const Vector lambda = z.row(i).transpose() / scale;
    const double proj = lambda.dot(grad_lambda.row(i));
    grad_z.row(i) = (grad_lambda.row(i) - proj * lambda.transpose()) / scale;
  }
  return grad_z;
}

}  // namespace ctlfm

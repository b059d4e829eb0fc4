#include "ctlfm/optimize.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "ctlfm/error.hpp"

namespace ctlfm {

namespace {

struct Trial {
  double f = std::numeric_limits<double>::infinity();
  Vector grad;
  bool ok = false;
};

Trial evaluate(const GradientObjective& objective, const Vector& x) {
  Trial t;
  t.grad.resize(x.size());
  try {
    t.f = objective(x, &t.grad);
    t.ok = std::isfinite(t.f) && t.grad.allFinite();
  } catch (const Error&) {
    t.ok = false;
  }
  return t;
}

}  // namespace

BfgsResult minimize_bfgs(const GradientObjective& objective, Vector x0, const BfgsOptions& opts) {
  const Eigen::Index n = x0.size();
  BfgsResult res;
  res.x = std::move(x0);
  Trial cur = evaluate(objective, res.x);
  res.evaluations = 1;
  if (!cur.ok) {
    res.message = "objective failed at the starting point";
    res.f = cur.f;
    res.grad = cur.grad;
    return res;
  }
  Matrix inv_h = Matrix::Identity(n, n);
  bool scaled = false;
  int stalls = 0;

  for (;;) {
    res.f_trace.push_back(cur.f);
    const double gnorm = cur.grad.cwiseAbs().maxCoeff();
    if (gnorm <= opts.grad_tol) {
      res.converged = true;
      res.message = "gradient tolerance reached";
      break;
    }
    if (res.iterations >= opts.max_iters) {
      res.message = "iteration limit reached";
      break;
    }
    Vector p = -inv_h * cur.grad;
    double slope = cur.grad.dot(p);
    if (!(slope < 0.0)) {
      inv_h.setIdentity();
      scaled = false;
      p = -cur.grad;
      slope = cur.grad.dot(p);
    }
    double alpha = 1.0;
    const double pmax = p.cwiseAbs().maxCoeff();
    if (alpha * pmax > opts.max_step) alpha = opts.max_step / pmax;

    const double noise = opts.f_noise * (1.0 + std::abs(cur.f));
    Trial next;
    Vector x_next;
    bool accepted = false;
    for (int k = 0; k < 40; ++k, alpha *= 0.5) {
      x_next = res.x + alpha * p;
      next = evaluate(objective, x_next);
      ++res.evaluations;
      if (!next.ok) continue;
      const double armijo = cur.f + 1e-4 * alpha * slope;
      const double new_slope = next.grad.dot(p);
      if (next.f <= armijo ||
          (next.f <= cur.f + noise && std::abs(new_slope) <= 0.9 * std::abs(slope))) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (++stalls >= 2) {
        res.message = "line search failed";
        break;
      }
      inv_h.setIdentity();
      scaled = false;
      continue;
    }
    stalls = 0;
    const Vector s = x_next - res.x;
    const Vector y = next.grad - cur.grad;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (!scaled) {
        inv_h *= sy / y.squaredNorm();
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Vector hy = inv_h * y;
      // H ← (I - ρsy')H(I - ρys') + ρss'
      inv_h.noalias() += (rho * rho * y.dot(hy) + rho) * (s * s.transpose()) -
                         rho * (hy * s.transpose() + s * hy.transpose());
    }
    res.x = std::move(x_next);
    cur = std::move(next);
    ++res.iterations;
    if (opts.on_iteration) opts.on_iteration(res.iterations, cur.f);
  }
  res.f = cur.f;
  res.grad = cur.grad;
  return res;
}

}  // namespace ctlfm

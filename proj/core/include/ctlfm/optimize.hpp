#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ctlfm/model.hpp"

namespace ctlfm {

// Returns f(x) and, when `grad` is non-null, writes ∇f(x) into it.
// Throwing ctlfm::Error marks x as infeasible; the line search backs off.
using GradientObjective = std::function<double(const Vector& x, Vector* grad)>;

struct BfgsOptions {
  double grad_tol = 1e-5;  // max-abs gradient
  int max_iters = 500;
  double max_step = 2.0;   // cap on the max-abs step of a trial point
  double f_noise = 1e-11;  // relative rounding level of f for approximate-Wolfe acceptance
  std::function<void(int iteration, double f)> on_iteration;  // after each accepted step
};

struct BfgsResult {
  Vector x;
  Vector grad;
  double f = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::string message;
  std::vector<double> f_trace;
};

/// Dense BFGS on the inverse Hessian with a backtracking line search. A
/// trial point is accepted under the Armijo condition, or when f has stalled
/// within rounding while the directional derivative shrank (approximate Wolfe).
BfgsResult minimize_bfgs(const GradientObjective& objective, Vector x0,
                         const BfgsOptions& opts = {});

}  // namespace ctlfm

#include "ctlfm/fit.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "ctlfm/analysis.hpp"
#include "ctlfm/error.hpp"
#include "ctlfm/optimize.hpp"
#include "ctlfm/rng.hpp"

namespace ctlfm {

OuterObjective::OuterObjective(const LaplaceModel& model, std::size_t factors, InnerOptions inner,
                               GradientMode mode, double fd_step)
    : model_(model), factors_(factors), inner_(inner), mode_(mode), fd_step_(fd_step) {}

double OuterObjective::nll_at(const Matrix& z, bool with_gradient, Matrix* grad_lambda) {
  const FactorLoadings fl = lambda_from_unconstrained(z);
  const Matrix* warm = warm_.size() > 0 ? &warm_ : nullptr;
  LaplaceEvaluation ev = model_.evaluate(fl, with_gradient, inner_, warm);
  ++evaluations_;
  newton_iterations_ += ev.mode.iterations;
  warm_ = std::move(ev.mode.mode.x);
  if (grad_lambda != nullptr && ev.grad_lambda) *grad_lambda = std::move(*ev.grad_lambda);
  return ev.nll;
}

double OuterObjective::operator()(const Vector& z, Vector* grad) {
  const auto q = static_cast<Eigen::Index>(model_.neurons());
  const auto d = static_cast<Eigen::Index>(factors_);
  if (z.size() != q * d) throw InvalidArgument("outer objective: z must have q·d entries");
  const Matrix zm = Eigen::Map<const Matrix>(z.data(), q, d);
  if (grad == nullptr) return nll_at(zm, false, nullptr);

  if (mode_ == GradientMode::analytic) {
    Matrix grad_lambda;
    const double f = nll_at(zm, true, &grad_lambda);
    const Matrix gz = gradient_z_from_lambda(grad_lambda, zm);
    *grad = Eigen::Map<const Vector>(gz.data(), gz.size());
    return f;
  }

  const double f = nll_at(zm, false, nullptr);
  const Matrix center = warm_;
  grad->resize(z.size());
  for (Eigen::Index k = 0; k < z.size(); ++k) {
    Matrix zp = zm;
    Matrix zn = zm;
    zp.data()[k] += fd_step_;
    zn.data()[k] -= fd_step_;
    warm_ = center;
    const double fp = nll_at(zp, false, nullptr);
    warm_ = center;
    const double fn = nll_at(zn, false, nullptr);
    (*grad)[k] = (fp - fn) / (2.0 * fd_step_);
  }
  warm_ = center;
  return f;
}

Matrix varimax(const Matrix& lambda, double eps, int max_iters) {
  const Eigen::Index p = lambda.rows();
  const Eigen::Index nc = lambda.cols();
  if (nc < 2) return lambda;
  Vector sc = lambda.rowwise().norm();
  for (Eigen::Index i = 0; i < p; ++i) {
    if (!(sc[i] > 0.0)) sc[i] = 1.0;
  }
  Matrix x = sc.cwiseInverse().asDiagonal() * lambda;
  // Kaiser's pairwise sweeps: each plane rotation uses the closed-form angle
  // that maximizes the criterion for that column pair.
  const double np = static_cast<double>(p);
  for (int sweep = 0; sweep < max_iters; ++sweep) {
    double largest = 0.0;
    for (Eigen::Index j = 0; j + 1 < nc; ++j) {
      for (Eigen::Index k = j + 1; k < nc; ++k) {
        double a = 0.0, b = 0.0, c = 0.0, d = 0.0;
        for (Eigen::Index i = 0; i < p; ++i) {
          const double u = x(i, j) * x(i, j) - x(i, k) * x(i, k);
          const double v = 2.0 * x(i, j) * x(i, k);
          a += u;
          b += v;
          c += u * u - v * v;
          d += 2.0 * u * v;
        }
        const double phi = 0.25 * std::atan2(d - 2.0 * a * b / np, c - (a * a - b * b) / np);
        largest = std::max(largest, std::abs(phi));
        const double cs = std::cos(phi), sn = std::sin(phi);
        for (Eigen::Index i = 0; i < p; ++i) {
          const double xj = x(i, j), xk = x(i, k);
          x(i, j) = cs * xj + sn * xk;
          x(i, k) = -sn * xj + cs * xk;
        }
      }
    }
    if (largest < eps) break;
  }
  return sc.asDiagonal() * x;
}

FactorLoadings identify(const FactorLoadings& fl) {
  if (fl.factors() < 1) throw InvalidArgument("identify: need at least one factor");
  Matrix rotated = varimax(fl.lambda());
  const Eigen::Index d = rotated.cols();
  for (Eigen::Index j = 0; j < d; ++j) {
    Eigen::Index arg = 0;
    rotated.col(j).cwiseAbs().maxCoeff(&arg);
    if (rotated(arg, j) < 0.0) rotated.col(j) *= -1.0;
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const Vector norms = rotated.colwise().norm().transpose();
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return norms[a] > norms[b]; });
  Matrix out(rotated.rows(), d);
  for (Eigen::Index j = 0; j < d; ++j) out.col(j) = rotated.col(order[static_cast<std::size_t>(j)]);
  return FactorLoadings(std::move(out), 0.0);
}

Matrix spectral_start(const BinnedSpikes& y, std::size_t factors, double kernel_width) {
  const auto q = static_cast<Eigen::Index>(y.neuron_count());
  std::vector<std::vector<double>> times(static_cast<std::size_t>(q));
  const double dt = y.grid.delta();
  for (Eigen::Index i = 0; i < q; ++i) {
    for (Eigen::Index s = 0; s < y.y.cols(); ++s) {
      if (y.y(i, s) != 0) times[static_cast<std::size_t>(i)].push_back((static_cast<double>(s) + 0.5) * dt);
    }
  }
  const Matrix corr = smoothed_correlation(times, y.grid.t_end(), kernel_width).correlation;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(corr);
  const auto d = static_cast<Eigen::Index>(factors);
  Matrix lambda(q, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const Eigen::Index src = q - 1 - j;
    lambda.col(j) = eig.eigenvectors().col(src) * std::sqrt(std::max(eig.eigenvalues()[src], 0.0));
  }
  for (Eigen::Index i = 0; i < q; ++i) {
    const double n = lambda.row(i).norm();
    if (n > 0.9) lambda.row(i) *= 0.9 / n;
  }
  return unconstrained_from_lambda(FactorLoadings(std::move(lambda), 0.0));
}

Matrix sigma_standard_errors(const Matrix& z, const Matrix& cov_z) {
  const Eigen::Index q = z.rows();
  const Eigen::Index d = z.cols();
  Matrix lambda(q, d);
  std::vector<Matrix> jac(static_cast<std::size_t>(q));
  for (Eigen::Index i = 0; i < q; ++i) {
    const double s = std::sqrt(1.0 + z.row(i).squaredNorm());
    lambda.row(i) = z.row(i) / s;
    const Vector li = lambda.row(i).transpose();
    jac[static_cast<std::size_t>(i)] = (Matrix::Identity(d, d) - li * li.transpose()) / s;
  }
  Matrix se = Matrix::Zero(q, q);
  Vector g(q * d);
  for (Eigen::Index i = 0; i < q; ++i) {
    for (Eigen::Index j = i + 1; j < q; ++j) {
      g.setZero();
      const Vector gi = jac[static_cast<std::size_t>(i)] * lambda.row(j).transpose();
      const Vector gj = jac[static_cast<std::size_t>(j)] * lambda.row(i).transpose();
      for (Eigen::Index k = 0; k < d; ++k) {
        g[i + q * k] = gi[k];
        g[j + q * k] = gj[k];
      }
      const double var = g.dot(cov_z * g);
      se(i, j) = se(j, i) = std::sqrt(std::max(var, 0.0));
    }
  }
  return se;
}

bool rotation_projected_covariance(const Matrix& hessian, const Matrix& z, Matrix& cov) {
  const Eigen::Index q = z.rows();
  const Eigen::Index d = z.cols();
  const Eigen::Index n = q * d;
  const Eigen::Index m = d * (d - 1) / 2;
  Matrix project = Matrix::Identity(n, n);
  if (m > 0) {
    Matrix tangents(n, m);
    Eigen::Index col = 0;
    for (Eigen::Index a = 0; a < d; ++a) {
      for (Eigen::Index b = a + 1; b < d; ++b) {
        Matrix skew = Matrix::Zero(d, d);
        skew(a, b) = 1.0;
        skew(b, a) = -1.0;
        const Matrix t = z * skew;
        tangents.col(col++) = Eigen::Map<const Vector>(t.data(), n);
      }
    }
    const Eigen::HouseholderQR<Matrix> qr(tangents);
    const Matrix basis = qr.householderQ() * Matrix::Identity(n, m);
    project -= basis * basis.transpose();
  }
  const Matrix sym = 0.5 * (hessian + hessian.transpose());
  const Matrix projected = project * sym * project;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(projected);
  // The m smallest eigenvalues belong to the rotation directions.
  const Vector& ev = eig.eigenvalues();
  cov = Matrix::Zero(n, n);
  bool positive = true;
  const double scale = std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::sort(idx.begin(), idx.end(),
            [&](Eigen::Index a, Eigen::Index b) { return std::abs(ev[a]) < std::abs(ev[b]); });
  for (std::size_t k = static_cast<std::size_t>(m); k < idx.size(); ++k) {
    const Eigen::Index e = idx[k];
    if (!(ev[e] > 1e-12 * scale)) {
      positive = false;
      continue;
    }
    const Vector v = eig.eigenvectors().col(e);
    cov.noalias() += (v * v.transpose()) / ev[e];
  }
  return positive;
}

namespace {

struct StartPoint {
  std::string label;
  std::uint64_t seed;
  Matrix z0;
};

struct RunOutcome {
  RestartTrace trace;
  Vector z;
};

}  // namespace

FitResult fit_loadings(const BinnedSpikes& y, const NeuronParams& theta, std::size_t factors,
                       const FitOptions& opts) {
  const std::size_t q = y.neuron_count();
  if (factors < 1) throw InvalidArgument("fit_loadings: need at least one factor");
  if (factors >= q) throw InvalidArgument("fit_loadings: factor count d must be < neuron count q");
  if (y.bins() < 2) throw InvalidArgument("fit_loadings: need at least two bins");
  if (opts.restarts < 0) throw InvalidArgument("fit_loadings: restarts must be >= 0");
  const LaplaceModel model(y, theta, opts.obs);
  InnerOptions inner;
  inner.tol = opts.inner_tol;
  inner.backend = opts.inner_backend;

  const auto qi = static_cast<Eigen::Index>(q);
  const auto di = static_cast<Eigen::Index>(factors);
  std::vector<StartPoint> starts;
  if (opts.spectral_start) {
    starts.push_back({"spectral", opts.seed, spectral_start(y, factors, opts.spectral_kernel_width)});
  }
  for (int r = 0; r < opts.restarts; ++r) {
    const std::uint64_t s = derive_seed(opts.seed, static_cast<std::uint64_t>(r));
    Rng rng(s);
    std::uniform_real_distribution<double> unif(-0.5, 0.5);
    Matrix z0(qi, di);
    for (Eigen::Index k = 0; k < z0.size(); ++k) z0.data()[k] = unif(rng);
    starts.push_back({"random", s, std::move(z0)});
  }
  if (starts.empty()) throw InvalidArgument("fit_loadings: no starting points requested");

  BfgsOptions bfgs;
  bfgs.grad_tol = opts.outer_tol;
  bfgs.max_iters = opts.max_iters;

  std::vector<RunOutcome> outcomes(starts.size());
  auto run = [&](std::size_t k) {
    const auto t0 = std::chrono::steady_clock::now();
    OuterObjective objective(model, factors, inner, opts.gradient, opts.fd_step);
    const StartPoint& sp = starts[k];
    const Vector x0 = Eigen::Map<const Vector>(sp.z0.data(), sp.z0.size());
    const BfgsResult res = minimize_bfgs(std::ref(objective), x0, bfgs);
    RunOutcome& out = outcomes[k];
    out.z = res.x;
    out.trace.start = sp.label;
    out.trace.seed = sp.seed;
    out.trace.iterations = res.iterations;
    out.trace.evaluations = objective.evaluations();
    out.trace.nll = res.f;
    out.trace.grad_norm = res.grad.size() > 0 ? res.grad.cwiseAbs().maxCoeff()
                                              : std::numeric_limits<double>::infinity();
    out.trace.converged = res.converged;
    out.trace.message = res.message;
    out.trace.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  const std::size_t workers =
      std::clamp<std::size_t>(static_cast<std::size_t>(std::max(opts.threads, 1)), 1, starts.size());
  if (workers == 1) {
    for (std::size_t k = 0; k < starts.size(); ++k) run(k);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t k = next++; k < starts.size(); k = next++) run(k);
      });
    }
    for (auto& t : pool) t.join();
  }

  FitResult result;
  for (const auto& o : outcomes) result.restarts.push_back(o.trace);
  int best = -1;
  for (std::size_t k = 0; k < outcomes.size(); ++k) {
    const auto& tr = outcomes[k].trace;
    if (!tr.converged) continue;
    if (best < 0 || tr.nll < outcomes[static_cast<std::size_t>(best)].trace.nll) {
      best = static_cast<int>(k);
    }
  }
  if (best < 0) {
    std::vector<std::string> lines;
    for (const auto& o : outcomes) {
      std::ostringstream os;
      os.precision(17);
      os << o.trace.start << " seed=" << o.trace.seed << " iters=" << o.trace.iterations
         << " nll=" << o.trace.nll << " |g|=" << o.trace.grad_norm << " : " << o.trace.message;
      lines.push_back(os.str());
    }
    throw NonConvergence("fit_loadings: no restart converged", std::move(lines));
  }
  const RunOutcome& win = outcomes[static_cast<std::size_t>(best)];
  result.best_restart = best;
  result.nll = win.trace.nll;
  result.grad_norm = win.trace.grad_norm;
  result.converged = win.trace.converged;
  result.iterations = win.trace.iterations;

  const Matrix z_best = Eigen::Map<const Matrix>(win.z.data(), qi, di);
  result.lambda_hat = identify(lambda_from_unconstrained(z_best));
  result.z_hat = unconstrained_from_lambda(result.lambda_hat);
  result.sigma_hat = build_correlation(result.lambda_hat).sigma;
  result.se_z = Matrix::Constant(qi, di, std::numeric_limits<double>::quiet_NaN());
  result.sigma_se = Matrix::Constant(qi, qi, std::numeric_limits<double>::quiet_NaN());
  result.sigma_se.diagonal().setZero();

  if (opts.standard_errors) {
    const Eigen::Index n = qi * di;
    OuterObjective objective(model, factors, inner, GradientMode::analytic, opts.fd_step);
    const Vector z0 = Eigen::Map<const Vector>(result.z_hat.data(), n);
    Vector g0(n);
    objective(z0, &g0);  // primes the warm start at ẑ
    Matrix hess(n, n);
    Vector gp(n);
    Vector gm(n);
    for (Eigen::Index k = 0; k < n; ++k) {
      Vector zp = z0;
      Vector zm = z0;
      zp[k] += opts.hessian_step;
      zm[k] -= opts.hessian_step;
      objective(zp, &gp);
      objective(zm, &gm);
      hess.col(k) = (gp - gm) / (2.0 * opts.hessian_step);
    }
    Matrix cov;
    if (rotation_projected_covariance(hess, result.z_hat, cov)) {
      result.has_standard_errors = true;
      for (Eigen::Index k = 0; k < n; ++k) result.se_z.data()[k] = std::sqrt(std::max(cov(k, k), 0.0));
      result.sigma_se = sigma_standard_errors(result.z_hat, cov);
    }
  }
  return result;
}

}  // namespace ctlfm

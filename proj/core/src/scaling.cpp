#include "ctlfm/scaling.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <numeric>
#include <random>

#include "ctlfm/error.hpp"
#include "ctlfm/fit.hpp"
#include "ctlfm/io.hpp"
#include "ctlfm/optimize.hpp"
#include "ctlfm/rng.hpp"
#include "ctlfm/simulate.hpp"

namespace ctlfm {

std::vector<ScalingRow> run_scaling(const ScalingOptions& opts) {
  if (opts.iterations < 1) throw InvalidArgument("bench-scaling: iterations must be >= 1");
  std::vector<ScalingRow> rows;
  for (std::size_t qi = 0; qi < opts.neurons.size(); ++qi) {
    const std::size_t q = opts.neurons[qi];
    if (q <= opts.factors) throw InvalidArgument("bench-scaling: q must exceed d");
    const auto qn = static_cast<Eigen::Index>(q);
    const auto d = static_cast<Eigen::Index>(opts.factors);
    Matrix lambda = Matrix::Zero(qn, d);
    for (Eigen::Index i = 0; i < qn; ++i) lambda(i, i * d / qn) = 0.6;
    const NeuronParams theta{Vector::Constant(qn, 2.0), Vector::Constant(qn, 1.0)};
    const double t_end = opts.delta * static_cast<double>(opts.bins);
    SimOptions so;
    so.latent_stride = 0;
    const SimOutput sim = simulate_population(theta, FactorLoadings(lambda), t_end, opts.delta / 10.0,
                                              derive_seed(opts.seed, q), so);
    const BinnedSpikes y = bin_spikes(sim.spikes, GridSpec(opts.delta, opts.bins));
    const LaplaceModel model(y, theta);

    Rng rng(derive_seed(opts.seed, 1000 + q));
    std::uniform_real_distribution<double> unif(-0.5, 0.5);
    Vector z0(qn * d);
    for (Eigen::Index k = 0; k < z0.size(); ++k) z0[k] = unif(rng);

    InnerOptions inner;
    inner.backend = opts.backend;
    if (inner.backend == HessianBackend::automatic) {
      const Matrix keep = (1 - y.y.cast<int>().array()).cast<double>().matrix();
      inner.backend = choose_backend(keep, d);
    }
    OuterObjective objective(model, opts.factors, inner);
    std::vector<double> stamps;
    BfgsOptions bo;
    bo.max_iters = opts.iterations;
    bo.grad_tol = 0.0;
    auto last = std::chrono::steady_clock::now();
    bo.on_iteration = [&](int, double) {
      const auto now = std::chrono::steady_clock::now();
      stamps.push_back(std::chrono::duration<double>(now - last).count());
      last = now;
    };
    // First evaluation (mode from the cold start) is excluded from the timings.
    Vector g(z0.size());
    objective(z0, &g);
    const int primed_evals = objective.evaluations();
    const int primed_newton = objective.newton_iterations();
    last = std::chrono::steady_clock::now();
    const BfgsResult res = minimize_bfgs(std::ref(objective), z0, bo);

    ScalingRow row;
    row.neurons = q;
    row.backend = inner.backend;
    row.iterations = res.iterations;
    row.evaluations = objective.evaluations() - primed_evals;
    row.newton_iterations = objective.newton_iterations() - primed_newton;
    if (!stamps.empty()) {
      std::vector<double> sorted = stamps;
      std::sort(sorted.begin(), sorted.end());
      const std::size_t n = sorted.size();
      row.median_seconds = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
      row.mean_seconds = std::accumulate(stamps.begin(), stamps.end(), 0.0) / static_cast<double>(n);
    }
    rows.push_back(row);
  }
  return rows;
}

std::string format_scaling_table(const std::vector<ScalingRow>& rows) {
  std::string out = "     q  backend          iters  evals  newton  median_s/iter    mean_s/iter  ratio\n";
  char buf[128];
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const ScalingRow& r = rows[i];
    if (i > 0 && rows[i - 1].median_seconds > 0.0) {
      std::snprintf(buf, sizeof buf, "%6zu  %-15s  %5d  %5d  %6d  %13.6f  %13.6f  %5.2f\n", r.neurons,
                    to_string(r.backend).c_str(), r.iterations, r.evaluations, r.newton_iterations, r.median_seconds, r.mean_seconds,
                    r.median_seconds / rows[i - 1].median_seconds);
    } else {
      std::snprintf(buf, sizeof buf, "%6zu  %-15s  %5d  %5d  %6d  %13.6f  %13.6f      -\n", r.neurons,
                    to_string(r.backend).c_str(), r.iterations, r.evaluations, r.newton_iterations, r.median_seconds, r.mean_seconds);
    }
    out += buf;
  }
  return out;
}

std::string format_scaling_csv(const std::vector<ScalingRow>& rows) {
  std::string out = "q,backend,iterations,evaluations,newton_iterations,median_seconds,mean_seconds\n";
  for (const auto& r : rows) {
    out += std::to_string(r.neurons) + "," + to_string(r.backend) + "," + std::to_string(r.iterations) + "," +
           std::to_string(r.evaluations) + "," + std::to_string(r.newton_iterations) + "," + format_double(r.median_seconds) + "," +
           format_double(r.mean_seconds) + "\n";
  }
  return out;
}

}  // namespace ctlfm

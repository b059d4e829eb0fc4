#include "ctlfm/simulate.hpp"

#include <cmath>

#include "ctlfm/error.hpp"
#include "ctlfm/rng.hpp"

namespace ctlfm {

SimOutput simulate_population(const NeuronParams& theta, const FactorLoadings& fl, double t_end,
                              double delta_sim, std::uint64_t seed, const SimOptions& opts) {
  theta.validate();
  if (!(delta_sim > 0.0) || !std::isfinite(delta_sim)) {
    throw InvalidArgument("simulate_population: delta_sim must be > 0");
  }
  if (!(t_end > 0.0) || !std::isfinite(t_end)) {
    throw InvalidArgument("simulate_population: t_end must be > 0");
  }
  const auto q = static_cast<Eigen::Index>(theta.size());
  if (static_cast<Eigen::Index>(fl.neurons()) != q) {
    throw InvalidArgument("simulate_population: loadings and params disagree on neuron count");
  }
  const auto d = static_cast<Eigen::Index>(fl.factors());
  const Matrix& lambda = fl.lambda();
  const Vector idio_sd = fl.psi().cwiseSqrt();
  const double sqrt_dt = std::sqrt(delta_sim);

  auto steps = static_cast<std::size_t>(std::floor(t_end / delta_sim + 1e-9));
  while (steps > 0 && static_cast<double>(steps) * delta_sim > t_end) --steps;

  const std::size_t stride = opts.latent_stride;
  const std::size_t stored = stride == 0 ? 0 : steps / stride;

  SimOutput out;
  out.seed = seed;
  out.delta_sim = delta_sim;
  out.latent_stride = stride;
  out.latent.x.resize(q, static_cast<Eigen::Index>(stored));
  out.factors.f.resize(d, static_cast<Eigen::Index>(stored));

  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  Vector x = Vector::Zero(q);
  Vector f = Vector::Zero(d);
  Vector eta(d);
  Vector xi(q);
  std::vector<std::vector<double>> spikes(static_cast<std::size_t>(q));

  for (std::size_t k = 1; k <= steps; ++k) {
    for (Eigen::Index j = 0; j < d; ++j) eta[j] = normal(rng);
    for (Eigen::Index i = 0; i < q; ++i) xi[i] = normal(rng);
    const double t_prev = static_cast<double>(k - 1) * delta_sim;
    for (Eigen::Index i = 0; i < q; ++i) {
      const double shared = d > 0 ? lambda.row(i).dot(eta) : 0.0;
      const double x_prev = x[i];
      const double x_new =
          x_prev + theta.mu[i] * delta_sim + sqrt_dt * (shared + idio_sd[i] * xi[i]);
      if (x_new >= theta.b[i]) {
        const double frac = (theta.b[i] - x_prev) / (x_new - x_prev);
        double t_spike = t_prev + frac * delta_sim;
        // Keep spike times inside the substep under rounding.
        const double t_hi = std::min(static_cast<double>(k) * delta_sim, t_end);
        if (t_spike > t_hi) t_spike = t_hi;
        auto& train = spikes[static_cast<std::size_t>(i)];
        if (!(t_spike > 0.0)) t_spike = std::nextafter(0.0, 1.0);
        if (!train.empty() && !(t_spike > train.back())) t_spike = std::nextafter(train.back(), t_hi + 1.0);
        train.push_back(t_spike);
        x[i] = 0.0;
      } else {
        x[i] = x_new;
      }
    }
    f += sqrt_dt * eta;
    if (stride != 0 && k % stride == 0) {
      const auto col = static_cast<Eigen::Index>(k / stride - 1);
      out.latent.x.col(col) = x;
      out.factors.f.col(col) = f;
    }
  }
  out.spikes = SpikeData(t_end, std::move(spikes));
  return out;
}

std::vector<double> sample_ig(double mean, double shape, std::size_t n, std::uint64_t seed) {
  if (!(mean > 0.0) || !(shape > 0.0) || !std::isfinite(mean) || !std::isfinite(shape)) {
    throw InvalidArgument("sample_ig: mean and shape must be positive");
  }
  if (n < 1) throw InvalidArgument("sample_ig: n must be >= 1");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::vector<double> out;
  out.reserve(n);
  while (out.size() < n) {
    const double nu = normal(rng);
    const double y = mean * nu * nu;
    // x = mean + mean·(y - sqrt(y² + 4·shape·y))/(2·shape), rearranged to avoid cancellation.
    const double x = mean - 2.0 * mean * y / (y + std::sqrt(y * y + 4.0 * shape * y));
    const double u = uniform(rng);
    const double draw = u <= mean / (mean + x) ? x : mean * mean / x;
    if (draw > 0.0 && std::isfinite(draw)) out.push_back(draw);
  }
  return out;
}

std::vector<double> simulate_renewal_single(double mu, double b, std::size_t n,
                                            std::uint64_t seed) {
  if (!(mu > 0.0) || !(b > 0.0)) throw InvalidArgument("simulate_renewal_single: need mu, b > 0");
  return sample_ig(b / mu, b * b, n, seed);
}

SpikeData spikes_from_isis(const std::vector<std::vector<double>>& isis, double t_end) {
  std::vector<std::vector<double>> spikes(isis.size());
  for (std::size_t i = 0; i < isis.size(); ++i) {
    double t = 0.0;
    for (double isi : isis[i]) {
      t += isi;
      if (t > t_end) break;
      spikes[i].push_back(t);
    }
  }
  return SpikeData(t_end, std::move(spikes));
}

}  // namespace ctlfm

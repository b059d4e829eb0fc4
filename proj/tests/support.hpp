#pragma once

#include <cmath>
#include <cstdint>

#include "ctlfm/model.hpp"
#include "ctlfm/simulate.hpp"

namespace ctlfm::fixtures {

// Loadings of two equal blocks, each neuron loading only on its block's factor.
inline Matrix two_block_lambda(Eigen::Index q, double loading = std::sqrt(0.5)) {
  Matrix l = Matrix::Zero(q, 2);
  for (Eigen::Index i = 0; i < q; ++i) l(i, i < q / 2 ? 0 : 1) = loading;
  return l;
}

struct Dataset {
  NeuronParams theta;
  Matrix lambda;
  SpikeData spikes;
  BinnedSpikes y;
};

// Simulates with the given loadings, bins at delta; θ is the truth.
inline Dataset simulate_binned(const Matrix& lambda, std::size_t bins, double delta, std::uint64_t seed,
                               double mu = 2.0, double b = 1.0) {
  const Eigen::Index q = lambda.rows();
  NeuronParams th{Vector::Constant(q, mu), Vector::Constant(q, b)};
  SimOptions so;
  so.latent_stride = 0;
  const double t_end = delta * static_cast<double>(bins);
  SimOutput sim = simulate_population(th, FactorLoadings(lambda), t_end, delta / 10.0, seed, so);
  BinnedSpikes y = bin_spikes(sim.spikes, GridSpec(delta, bins));
  return Dataset{th, lambda, std::move(sim.spikes), std::move(y)};
}

}  // namespace ctlfm::fixtures

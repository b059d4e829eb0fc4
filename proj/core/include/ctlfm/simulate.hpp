#pragma once

#include <cstdint>
#include <vector>

#include "ctlfm/model.hpp"

namespace ctlfm {

struct SimOptions {
  // Keep every `latent_stride`-th substep of the latent and factor paths;
  // 0 drops them entirely.
  std::size_t latent_stride = 1;
};

struct SimOutput {
  SpikeData spikes;
  LatentPath latent;   // q × (substeps / stride), pre-reset values are never stored
  FactorPath factors;  // d × (substeps / stride), cumulative factor Brownian motion
  std::uint64_t seed = 0;
  double delta_sim = 0.0;
  std::size_t latent_stride = 1;
};

/// Euler–Maruyama simulation of q drift-diffusion neurons whose increments
/// are correlated through the factor loadings:
///
///   ΔX = μ·δ + sqrt(δ)·(Λη + sqrt(Ψ)∘ξ),  η ~ N(0, I_d), ξ ~ N(0, I_q).
///
/// A neuron spikes when its level reaches bᵢ; the crossing time is linearly
/// interpolated inside the substep and the level restarts from 0. Resets do
/// not touch the driving noise.
SimOutput simulate_population(const NeuronParams& theta, const FactorLoadings& fl, double t_end,
                              double delta_sim, std::uint64_t seed, const SimOptions& opts = {});

/// Inverse-Gaussian variates (Michael–Schucany–Haas transform).
std::vector<double> sample_ig(double mean, double shape, std::size_t n, std::uint64_t seed);

/// Exact first-passage intervals of a unit-diffusion Wiener process with
/// drift mu to barrier b: IG(mean = b/mu, shape = b²).
std::vector<double> simulate_renewal_single(double mu, double b, std::size_t n,
                                            std::uint64_t seed);

/// Builds spike times from consecutive intervals (cumulative sums).
SpikeData spikes_from_isis(const std::vector<std::vector<double>>& isis, double t_end);

}  // namespace ctlfm

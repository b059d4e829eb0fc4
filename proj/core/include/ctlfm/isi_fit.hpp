#pragma once

#include <utility>
#include <vector>

#include "ctlfm/model.hpp"

namespace ctlfm {

struct IsiSet {
  std::vector<std::vector<double>> isis;  // per neuron, censored edges dropped

  std::size_t count(std::size_t neuron) const { return isis.at(neuron).size(); }
};

struct IgParams {
  double mean = 0.0;
  double shape = 0.0;
};

struct IgEstimate {
  std::vector<IgParams> params;
  std::vector<std::size_t> n;
};

/// Stage-1 output for a whole population. Neurons whose intervals do not
/// support the closed-form estimator are flagged and carry NaN parameters.
struct ThetaEstimate {
  IgEstimate ig;
  NeuronParams theta;
  std::vector<bool> estimable;
  std::vector<std::string> reasons;  // empty for estimable neurons

  std::vector<std::size_t> estimable_indices() const;
};

/// Successive differences within each train; the intervals before the first
/// and after the last spike are censored and discarded.
IsiSet isi_extract(const SpikeData& s);

/// Concatenates the intervals of several windows; no interval spans a window boundary.
IsiSet merge_isis(const std::vector<IsiSet>& windows);

/// Maximum-likelihood IG fit: mean = t̄, shape = n / Σ(1/tⱼ - 1/t̄).
IgParams ig_mle(const std::vector<double>& isis);

/// Log-likelihood of intervals under IG(mean, shape).
double ig_loglik(const std::vector<double>& isis, const IgParams& p);

/// Inverts IG(mean = b/μ, shape = b²): b = sqrt(shape), μ = sqrt(shape)/mean.
NeuronParams theta_from_ig(const IgEstimate& est);

/// ig_mle + theta_from_ig per neuron, flagging neurons without enough data.
ThetaEstimate estimate_theta(const IsiSet& isis);

}  // namespace ctlfm

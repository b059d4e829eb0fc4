#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ctlfm/fit.hpp"
#include "ctlfm/model.hpp"

namespace ctlfm {

using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

struct MaskedCorrelation {
  Matrix sigma_hat;  // unmasked estimate, unit diagonal
  Matrix display;    // non-significant entries and the diagonal set to 0
  BoolMatrix mask;   // true = shown; diagonal false
  Matrix z_scores;   // |Σ̂ᵢⱼ| / SE, 0 on the diagonal
  double alpha = 0.05;
  double threshold = 0.0;  // two-sided critical value actually used
  bool bonferroni = false;
};

/// Wald test per off-diagonal entry: keep (i,j) when |Σ̂ᵢⱼ|/SEᵢⱼ ≥ z_{1-α/2}.
/// With `bonferroni`, α is divided by the number of pairs.
MaskedCorrelation mask_correlation(const Matrix& sigma_hat, const Matrix& se, double alpha,
                                   bool bonferroni = false);

/// Throws InvalidArgument when the fit carries no standard errors.
MaskedCorrelation corr_with_significance(const FitResult& fit, double alpha,
                                         bool bonferroni = false);

struct Clustering {
  std::vector<int> labels;  // 1..k, numbered by first appearance
  int k = 0;                // requested
  int effective_k = 0;      // distinct labels actually used
  double inertia = 0.0;     // within-cluster sum of squares
  std::uint64_t seed = 0;
  std::vector<std::string> warnings;
};

/// Best of `restarts` Lloyd runs from k-means++ seeds; deterministic given seed.
Clustering kmeans_rows(const Matrix& m, int k, int restarts = 10, std::uint64_t seed = 0,
                       int max_iters = 300);

/// (i,j) = 1 iff i and j share a label.
Matrix comembership(const Clustering& c);
Matrix comembership(const std::vector<int>& labels);

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b);

struct SmoothedCorrelation {
  Matrix correlation;  // q×q, unit diagonal
  std::vector<std::string> warnings;
};

/// Pearson correlation of Gaussian-smoothed spike trains (sd = kernel_width)
/// sampled every kernel_width/4 on (0, t_end]. A silent neuron has zero
/// correlation with every other neuron.
SmoothedCorrelation smoothed_correlation(const std::vector<std::vector<double>>& spikes,
                                         double t_end, double kernel_width);

/// Data-level comparator: k-means on rows of the smoothed-trace correlation matrix.
Clustering baseline_cluster(const SpikeData& s, double kernel_width, int k, std::uint64_t seed,
                            int restarts = 10);

}  // namespace ctlfm

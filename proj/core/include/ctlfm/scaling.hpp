#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ctlfm/latent_hessian.hpp"

namespace ctlfm {

struct ScalingOptions {
  std::vector<std::size_t> neurons{8, 16, 32, 64};
  std::size_t factors = 2;
  std::size_t bins = 2000;
  double delta = 0.01;
  int iterations = 5;  // timed outer iterations per q
  std::uint64_t seed = 0;
  HessianBackend backend = HessianBackend::automatic;
};

struct ScalingRow {
  std::size_t neurons = 0;
  HessianBackend backend = HessianBackend::automatic;  // as resolved for this q
  int iterations = 0;
  int evaluations = 0;
  int newton_iterations = 0;  // inner iterations over the timed evaluations
  double median_seconds = 0.0;  // per outer iteration
  double mean_seconds = 0.0;
};

/// Times outer BFGS iterations of the loadings fit on simulated two-block
/// data of each size, with θ fixed at its true value.
std::vector<ScalingRow> run_scaling(const ScalingOptions& opts);

/// Plain-text table with the ratio to the previous row.
std::string format_scaling_table(const std::vector<ScalingRow>& rows);
std::string format_scaling_csv(const std::vector<ScalingRow>& rows);

}  // namespace ctlfm

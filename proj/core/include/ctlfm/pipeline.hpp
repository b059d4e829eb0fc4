#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ctlfm/fit.hpp"
#include "ctlfm/model.hpp"
#include "ctlfm/simulate.hpp"

namespace ctlfm {

// One piece of a simulated recording. Segments are simulated back to back,
// each from a fresh reset with its own derived seed; `lambda_scale`
// multiplies the planted loadings inside the segment.
struct SimSegment {
  double duration = 0.0;
  double lambda_scale = 1.0;
};

struct SimulationConfig {
  Vector mu;
  Vector b;
  Matrix lambda;  // q×d planted loadings
  double delta_sim = 1e-3;
  std::uint64_t seed = 1;
  std::vector<SimSegment> segments;

  double t_end() const;
};

struct PipelineConfig {
  std::vector<std::filesystem::path> inputs;
  std::optional<SimulationConfig> simulation;
  std::vector<std::pair<double, double>> windows;  // empty = whole recording
  double delta = 0.01;
  std::size_t factors = 1;
  double tau = 0.0;  // <= 0 selects sqrt(delta)
  int restarts = 5;
  double outer_tol = 1e-5;
  double inner_tol = 1e-8;
  int max_iters = 500;
  std::uint64_t seed = 0;
  bool spectral_start = true;
  bool standard_errors = true;
  double alpha = 0.05;
  bool bonferroni = false;
  int k = 2;
  int cluster_restarts = 10;
  double kernel_width = 0.05;
  std::filesystem::path output_dir = "ctlfm-out";
  int threads = 1;
};

/// Parses a config or a run manifest (which embeds its config under "config").
/// Relative input paths resolve against `base_dir`. Throws ConfigError naming
/// the offending field.
PipelineConfig parse_pipeline_config(const std::string& text,
                                     const std::filesystem::path& base_dir = {});
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
SimulationConfig parse_simulation_config(const std::string& text);

/// Normalized echo of a config; parse_pipeline_config(config_to_json(c)) == c.
std::string config_to_json(const PipelineConfig& cfg);

/// Field-level checks that need no data. Overlapping windows are reported
/// with their indices.
void validate_config(const PipelineConfig& cfg);

/// Concatenates the segments; ids are n0..n{q-1}.
SpikeData simulate_recording(const SimulationConfig& sim);

struct WindowReport {
  std::size_t index = 0;
  double start = 0.0;
  double end = 0.0;
  std::string status;  // "ok" or "nonconvergence"
  std::filesystem::path dir;
  std::vector<std::string> included;
  std::vector<std::pair<std::string, std::string>> excluded;  // id, reason
  double nll = 0.0;
  double mean_abs_masked_offdiag = 0.0;
  double seconds = 0.0;
};

struct PipelineReport {
  int exit_code = 0;  // 0 ok, 3 some window did not converge
  std::filesystem::path manifest;
  std::vector<WindowReport> windows;
};

/// Bins, fits θ and Λ, masks Σ̂, clusters, and writes the per-window bundle
/// plus manifest.json under cfg.output_dir. Config and data problems throw
/// ConfigError, file problems IoError.
PipelineReport run_pipeline(const PipelineConfig& cfg);

}  // namespace ctlfm

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace ctlfm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using SpikeMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

// Margin kept between a loading row norm² and 1 when validating
// externally supplied loadings.
inline constexpr double kPsiMargin = 1e-6;

/// Continuous-time spike trains of q neurons observed on (0, t_end].
///
/// Construction validates that every train is strictly increasing and lies
/// inside the recording window, so a SpikeData value is always well formed.
class SpikeData {
 public:
  SpikeData() = default;
  SpikeData(double t_end, std::vector<std::vector<double>> spikes,
            std::vector<std::string> ids = {});

  std::size_t neuron_count() const noexcept { return spikes_.size(); }
  double t_end() const noexcept { return t_end_; }
  const std::vector<std::vector<double>>& spikes() const noexcept { return spikes_; }
  const std::vector<double>& spikes(std::size_t i) const { return spikes_.at(i); }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  std::size_t total_spikes() const noexcept;

  /// Spikes in (start, end], shifted so the window starts at 0.
  SpikeData window(double start, double end) const;
  /// Keeps the listed neurons, in the given order.
  SpikeData subset(const std::vector<std::size_t>& neurons) const;

  friend bool operator==(const SpikeData&, const SpikeData&) = default;

 private:
  double t_end_ = 0.0;
  std::vector<std::vector<double>> spikes_;
  std::vector<std::string> ids_;
};

/// Inference grid with bins ((t-1)·delta, t·delta], t = 1..bins.
class GridSpec {
 public:
  GridSpec(double delta, std::size_t bins);
  /// Smallest grid with step delta covering (0, t_end].
  static GridSpec covering(double t_end, double delta);

  double delta() const noexcept { return delta_; }
  std::size_t bins() const noexcept { return bins_; }
  double t_end() const noexcept { return delta_ * static_cast<double>(bins_); }

 private:
  double delta_;
  std::size_t bins_;
};

struct BinnedSpikes {
  SpikeMatrix y;  // q×T, column t holds the neurons spiking in bin t
  GridSpec grid;

  std::size_t neuron_count() const noexcept { return static_cast<std::size_t>(y.rows()); }
  std::size_t bins() const noexcept { return static_cast<std::size_t>(y.cols()); }
};

/// Per-neuron drift and threshold of the unit-diffusion latent process.
struct NeuronParams {
  Vector mu;
  Vector b;

  std::size_t size() const noexcept { return static_cast<std::size_t>(mu.size()); }
  /// Throws InvalidArgument unless sizes agree and every entry is finite and positive.
  void validate() const;
};

/// Loading matrix Λ (q×d) with the implied idiosyncratic variances
/// Ψᵢ = 1 - ‖Λᵢ‖², so that ΛΛ' + diag(Ψ) has unit diagonal.
class FactorLoadings {
 public:
  FactorLoadings() = default;
  /// Validates finiteness, d < q and ‖Λᵢ‖² ≤ 1 - margin.
  explicit FactorLoadings(Matrix lambda, double margin = kPsiMargin);

  const Matrix& lambda() const noexcept { return lambda_; }
  const Vector& psi() const noexcept { return psi_; }
  std::size_t neurons() const noexcept { return static_cast<std::size_t>(lambda_.rows()); }
  std::size_t factors() const noexcept { return static_cast<std::size_t>(lambda_.cols()); }

 private:
  friend FactorLoadings lambda_from_unconstrained(const Matrix& z);
  FactorLoadings(Matrix lambda, Vector psi) : lambda_(std::move(lambda)), psi_(std::move(psi)) {}

  Matrix lambda_;
  Vector psi_;
};

struct CorrelationModel {
  Matrix sigma;
};

struct LatentPath {
  Matrix x;  // q×T
};

struct FactorPath {
  Matrix f;  // d×T
};

// Smooth bijection between q×d reals and loadings with row norms < 1:
// Λᵢ = zᵢ / sqrt(1 + ‖zᵢ‖²).
FactorLoadings lambda_from_unconstrained(const Matrix& z);
Matrix unconstrained_from_lambda(const FactorLoadings& fl);

/// Σ = ΛΛ' + diag(Ψ); unit diagonal up to rounding.
CorrelationModel build_correlation(const FactorLoadings& fl);

/// Maps spikes onto the grid. Throws ResolutionTooCoarse when one neuron
/// has two spikes in the same bin.
BinnedSpikes bin_spikes(const SpikeData& s, const GridSpec& g);

/// Bin index (0-based) holding time t under the half-open rule ((k-1)δ, kδ].
std::size_t bin_index(double t, double delta);

}  // namespace ctlfm

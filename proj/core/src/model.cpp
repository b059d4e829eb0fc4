#include "ctlfm/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ctlfm/error.hpp"

namespace ctlfm {

namespace {

bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace

SpikeData::SpikeData(double t_end, std::vector<std::vector<double>> spikes,
                     std::vector<std::string> ids)
    : t_end_(t_end), spikes_(std::move(spikes)), ids_(std::move(ids)) {
  if (!(t_end_ > 0.0) || !std::isfinite(t_end_)) {
    throw InvalidArgument("spike data: t_end must be positive and finite");
  }
  if (ids_.empty()) {
    ids_.reserve(spikes_.size());
    for (std::size_t i = 0; i < spikes_.size(); ++i) ids_.push_back("n" + std::to_string(i));
  }
  if (ids_.size() != spikes_.size()) {
    throw InvalidArgument("spike data: id count does not match neuron count");
  }
  for (std::size_t i = 0; i < spikes_.size(); ++i) {
    const auto& train = spikes_[i];
    for (std::size_t k = 0; k < train.size(); ++k) {
      const double t = train[k];
      if (!(t > 0.0) || t > t_end_ || !std::isfinite(t)) {
        std::ostringstream os;
        os << "spike data: neuron " << ids_[i] << " spike " << k << " at " << t
           << " outside (0, " << t_end_ << "]";
        throw InvalidArgument(os.str());
      }
      if (k > 0 && !(t > train[k - 1])) {
        std::ostringstream os;
        os << "spike data: neuron " << ids_[i] << " spikes not strictly increasing at index " << k;
        throw InvalidArgument(os.str());
      }
    }
  }
}

std::size_t SpikeData::total_spikes() const noexcept {
  std::size_t n = 0;
  for (const auto& train : spikes_) n += train.size();
  return n;
}

SpikeData SpikeData::window(double start, double end) const {
  if (!(end > start) || start < 0.0) throw InvalidArgument("window: need 0 <= start < end");
  std::vector<std::vector<double>> out(spikes_.size());
  for (std::size_t i = 0; i < spikes_.size(); ++i) {
    for (double t : spikes_[i]) {
      if (t > start && t <= end) {
        const double shifted = t - start;
        // Shifting can round a spike just above `start` onto 0.
        if (shifted > 0.0 && (out[i].empty() || shifted > out[i].back())) out[i].push_back(shifted);
      }
    }
  }
  return SpikeData(end - start, std::move(out), ids_);
}

SpikeData SpikeData::subset(const std::vector<std::size_t>& neurons) const {
  std::vector<std::vector<double>> out;
  std::vector<std::string> ids;
  for (std::size_t i : neurons) {
    out.push_back(spikes_.at(i));
    ids.push_back(ids_.at(i));
  }
  return SpikeData(t_end_, std::move(out), std::move(ids));
}

GridSpec::GridSpec(double delta, std::size_t bins) : delta_(delta), bins_(bins) {
  if (!(delta > 0.0) || !std::isfinite(delta)) throw InvalidArgument("grid: delta must be > 0");
  if (bins < 1) throw InvalidArgument("grid: need at least one bin");
}

GridSpec GridSpec::covering(double t_end, double delta) {
  if (!(delta > 0.0) || !std::isfinite(delta)) throw InvalidArgument("grid: delta must be > 0");
  if (!(t_end > 0.0)) throw InvalidArgument("grid: t_end must be > 0");
  auto bins = static_cast<std::size_t>(std::ceil(t_end / delta));
  bins = std::max<std::size_t>(bins, 1);
  while (static_cast<double>(bins) * delta < t_end) ++bins;
  while (bins > 1 && static_cast<double>(bins - 1) * delta >= t_end) --bins;
  return GridSpec(delta, bins);
}

void NeuronParams::validate() const {
  if (mu.size() != b.size()) throw InvalidArgument("neuron params: mu and b sizes differ");
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    if (!(mu[i] > 0.0) || !std::isfinite(mu[i]) || !(b[i] > 0.0) || !std::isfinite(b[i])) {
      std::ostringstream os;
      os << "neuron params: neuron " << i << " needs finite mu > 0 and b > 0 (mu=" << mu[i]
         << ", b=" << b[i] << ")";
      throw InvalidArgument(os.str());
    }
  }
}

FactorLoadings::FactorLoadings(Matrix lambda, double margin) : lambda_(std::move(lambda)) {
  if (!all_finite(lambda_)) throw InvalidArgument("loadings: non-finite entries");
  if (lambda_.rows() > 0 && lambda_.cols() >= lambda_.rows()) {
    throw InvalidArgument("loadings: factor count d must be smaller than neuron count q");
  }
  psi_.resize(lambda_.rows());
  for (Eigen::Index i = 0; i < lambda_.rows(); ++i) {
    const double norm2 = lambda_.row(i).squaredNorm();
    if (norm2 > 1.0 - margin) {
      std::ostringstream os;
      os << "loadings: row " << i << " has squared norm " << norm2 << " > 1 - " << margin;
      throw InvalidArgument(os.str());
    }
    psi_[i] = 1.0 - norm2;
  }
}

FactorLoadings lambda_from_unconstrained(const Matrix& z) {
  if (!all_finite(z)) throw InvalidArgument("lambda_from_unconstrained: non-finite input");
  Matrix lambda(z.rows(), z.cols());
  Vector psi(z.rows());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double n2 = z.row(i).squaredNorm();
    lambda.row(i) = z.row(i) / std::sqrt(1.0 + n2);
    psi[i] = 1.0 / (1.0 + n2);
  }
  if (z.rows() > 0 && z.cols() >= z.rows()) {
    throw InvalidArgument("loadings: factor count d must be smaller than neuron count q");
  }
  return FactorLoadings(std::move(lambda), std::move(psi));
}

Matrix unconstrained_from_lambda(const FactorLoadings& fl) {
  const Matrix& lambda = fl.lambda();
  Matrix z(lambda.rows(), lambda.cols());
  for (Eigen::Index i = 0; i < lambda.rows(); ++i) {
    z.row(i) = lambda.row(i) / std::sqrt(fl.psi()[i]);
  }
  return z;
}

CorrelationModel build_correlation(const FactorLoadings& fl) {
  Matrix sigma = fl.lambda() * fl.lambda().transpose();
  sigma.diagonal() += fl.psi();
  return {std::move(sigma)};
}

std::size_t bin_index(double t, double delta) {
  auto k = static_cast<long long>(std::ceil(t / delta));
  if (k < 1) k = 1;
  // The products k·δ define the boundaries; correct any rounding in t/δ.
  while (k > 1 && static_cast<double>(k - 1) * delta >= t) --k;
  while (static_cast<double>(k) * delta < t) ++k;
  return static_cast<std::size_t>(k - 1);
}

BinnedSpikes bin_spikes(const SpikeData& s, const GridSpec& g) {
  if (g.t_end() < s.t_end()) {
    throw InvalidArgument("bin_spikes: grid ends before the recording window");
  }
  const auto q = static_cast<Eigen::Index>(s.neuron_count());
  const auto bins = static_cast<Eigen::Index>(g.bins());
  SpikeMatrix y = SpikeMatrix::Zero(q, bins);
  for (Eigen::Index i = 0; i < q; ++i) {
    for (double t : s.spikes(static_cast<std::size_t>(i))) {
      const auto k = static_cast<Eigen::Index>(bin_index(t, g.delta()));
      if (y(i, k) != 0) {
        std::ostringstream os;
        os << "resolution too coarse: neuron " << s.ids()[static_cast<std::size_t>(i)]
           << " has two spikes in bin " << k + 1 << " (delta=" << g.delta() << "); shrink delta";
        throw ResolutionTooCoarse(static_cast<std::size_t>(i), static_cast<std::size_t>(k + 1),
                                  os.str());
      }
      y(i, k) = 1;
    }
  }
  return {std::move(y), g};
}

}  // namespace ctlfm

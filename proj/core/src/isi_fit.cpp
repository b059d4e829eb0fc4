#include "ctlfm/isi_fit.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "ctlfm/error.hpp"

namespace ctlfm {

IsiSet isi_extract(const SpikeData& s) {
  IsiSet out;
  out.isis.resize(s.neuron_count());
  for (std::size_t i = 0; i < s.neuron_count(); ++i) {
    const auto& train = s.spikes(i);
    for (std::size_t k = 1; k < train.size(); ++k) out.isis[i].push_back(train[k] - train[k - 1]);
  }
  return out;
}

IsiSet merge_isis(const std::vector<IsiSet>& windows) {
  IsiSet out;
  for (const auto& w : windows) {
    if (out.isis.empty()) out.isis.resize(w.isis.size());
    if (w.isis.size() != out.isis.size()) {
      throw InvalidArgument("merge_isis: windows disagree on neuron count");
    }
    for (std::size_t i = 0; i < w.isis.size(); ++i) {
      out.isis[i].insert(out.isis[i].end(), w.isis[i].begin(), w.isis[i].end());
    }
  }
  return out;
}

IgParams ig_mle(const std::vector<double>& isis) {
  const std::size_t n = isis.size();
  if (n < 2) throw InsufficientData("ig_mle: need at least 2 intervals");
  double sum = 0.0;
  double sum_inv = 0.0;
  for (double t : isis) {
    if (!(t > 0.0) || !std::isfinite(t)) throw InvalidArgument("ig_mle: intervals must be > 0");
    sum += t;
    sum_inv += 1.0 / t;
  }
  const double nn = static_cast<double>(n);
  const double mean = sum / nn;
  const double denom = sum_inv - nn / mean;
  // Jensen gives denom >= 0; anything within rounding of 0 is degenerate.
  if (!(denom > 64.0 * std::numeric_limits<double>::epsilon() * sum_inv)) {
    throw DegenerateData("ig_mle: intervals are (numerically) identical, shape is unbounded");
  }
  return {mean, nn / denom};
}

double ig_loglik(const std::vector<double>& isis, const IgParams& p) {
  double ll = 0.0;
  for (double t : isis) {
    const double r = t - p.mean;
    ll += 0.5 * std::log(p.shape / (2.0 * std::numbers::pi * t * t * t)) -
          p.shape * r * r / (2.0 * p.mean * p.mean * t);
  }
  return ll;
}

NeuronParams theta_from_ig(const IgEstimate& est) {
  const auto q = static_cast<Eigen::Index>(est.params.size());
  NeuronParams theta{Vector(q), Vector(q)};
  for (Eigen::Index i = 0; i < q; ++i) {
    const auto& p = est.params[static_cast<std::size_t>(i)];
    if (!(p.mean > 0.0) || !(p.shape > 0.0)) {
      throw InvalidArgument("theta_from_ig: IG parameters must be positive");
    }
    theta.b[i] = std::sqrt(p.shape);
    theta.mu[i] = theta.b[i] / p.mean;
  }
  return theta;
}

std::vector<std::size_t> ThetaEstimate::estimable_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < estimable.size(); ++i) {
    if (estimable[i]) out.push_back(i);
  }
  return out;
}

ThetaEstimate estimate_theta(const IsiSet& isis) {
  const std::size_t q = isis.isis.size();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  ThetaEstimate out;
  out.theta = {Vector::Constant(static_cast<Eigen::Index>(q), nan),
               Vector::Constant(static_cast<Eigen::Index>(q), nan)};
  out.estimable.assign(q, false);
  out.reasons.assign(q, "");
  out.ig.params.assign(q, {nan, nan});
  out.ig.n.assign(q, 0);
  for (std::size_t i = 0; i < q; ++i) {
    out.ig.n[i] = isis.isis[i].size();
    try {
      const IgParams p = ig_mle(isis.isis[i]);
      out.ig.params[i] = p;
      const auto row = static_cast<Eigen::Index>(i);
      out.theta.b[row] = std::sqrt(p.shape);
      out.theta.mu[row] = out.theta.b[row] / p.mean;
      out.estimable[i] = true;
    } catch (const InsufficientData& e) {
      out.reasons[i] = e.what();
    } catch (const DegenerateData& e) {
      out.reasons[i] = e.what();
    }
  }
  return out;
}

}  // namespace ctlfm

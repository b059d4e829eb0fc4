#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ctlfm/isi_fit.hpp"
#include "ctlfm/simulate.hpp"

using namespace ctlfm;

namespace {

double phi(double u) { return 0.5 * std::erfc(-u / std::sqrt(2.0)); }

double ig_cdf(double x, double mean, double shape) {
  const double s = std::sqrt(shape / x);
  return phi(s * (x / mean - 1.0)) + std::exp(2.0 * shape / mean) * phi(-s * (x / mean + 1.0));
}

double ks_distance(std::vector<double> xs, double mean, double shape) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const double f = ig_cdf(xs[k], mean, shape);
    d = std::max({d, std::abs(f - static_cast<double>(k) / n), std::abs(static_cast<double>(k + 1) / n - f)});
  }
  return d;
}

}  // namespace

TEST(Simulate, IgSamplerMoments) {
  const auto xs = sample_ig(2.0, 3.0, 200000, 5);
  const double m = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double v = 0.0;
  for (double x : xs) v += (x - m) * (x - m);
  v /= static_cast<double>(xs.size() - 1);
  EXPECT_NEAR(m, 2.0, 0.02);
  EXPECT_NEAR(v, 8.0 / 3.0, 0.06);  // mean³/shape
}

TEST(Simulate, RenewalMatchesIgDistribution) {
  const auto xs = simulate_renewal_single(1.0, 1.5, 20000, 3);
  EXPECT_LT(ks_distance(xs, 1.5, 2.25), 0.015);
}

TEST(Simulate, EulerFirstPassageMatchesIg) {
  // Independent neurons (zero loadings): each ISI is a first passage time.
  const NeuronParams th{Vector::Constant(2, 2.0), Vector::Constant(2, 1.0)};
  const FactorLoadings fl(Matrix::Zero(2, 1));
  SimOptions so;
  so.latent_stride = 0;
  const SimOutput out = simulate_population(th, fl, 1500.0, 1e-3, 17, so);
  const IsiSet isis = isi_extract(out.spikes);
  std::vector<double> all;
  for (const auto& v : isis.isis) all.insert(all.end(), v.begin(), v.end());
  ASSERT_GT(all.size(), 4000u);
  EXPECT_LT(ks_distance(all, 0.5, 1.0), 0.03);
}

TEST(Simulate, SeededDeterminism) {
  const NeuronParams th{Vector::Constant(3, 2.0), Vector::Constant(3, 1.0)};
  Matrix l = Matrix::Zero(3, 1);
  l.col(0).setConstant(0.6);
  const SimOutput a = simulate_population(th, FactorLoadings(l), 20.0, 1e-3, 9);
  const SimOutput b = simulate_population(th, FactorLoadings(l), 20.0, 1e-3, 9);
  const SimOutput c = simulate_population(th, FactorLoadings(l), 20.0, 1e-3, 10);
  EXPECT_EQ(a.spikes, b.spikes);
  EXPECT_FALSE(a.spikes == c.spikes);
  EXPECT_EQ(a.latent.x, b.latent.x);
}

TEST(Simulate, LatentStaysBelowThreshold) {
  const NeuronParams th{Vector::Constant(2, 3.0), Vector::Constant(2, 1.0)};
  const SimOutput out = simulate_population(th, FactorLoadings(Matrix::Zero(2, 1)), 5.0, 1e-3, 1);
  EXPECT_LT(out.latent.x.maxCoeff(), 1.0);
  EXPECT_EQ(out.latent.x.cols(), 5000);
}

TEST(Simulate, CorrelatedNoiseCorrelatesCounts) {
  const NeuronParams th{Vector::Constant(2, 5.0), Vector::Constant(2, 1.0)};
  Matrix l(2, 1);
  l << 0.9, 0.9;
  SimOptions so;
  so.latent_stride = 0;
  const SimOutput out = simulate_population(th, FactorLoadings(l), 400.0, 1e-3, 4, so);
  // Spike counts in 1 s bins.
  std::vector<double> c0(400, 0.0), c1(400, 0.0);
  for (double t : out.spikes.spikes(0)) c0[std::min<std::size_t>(399, static_cast<std::size_t>(t))] += 1;
  for (double t : out.spikes.spikes(1)) c1[std::min<std::size_t>(399, static_cast<std::size_t>(t))] += 1;
  const double m0 = std::accumulate(c0.begin(), c0.end(), 0.0) / 400.0;
  const double m1 = std::accumulate(c1.begin(), c1.end(), 0.0) / 400.0;
  double s01 = 0, s00 = 0, s11 = 0;
  for (int k = 0; k < 400; ++k) {
    s01 += (c0[k] - m0) * (c1[k] - m1);
    s00 += (c0[k] - m0) * (c0[k] - m0);
    s11 += (c1[k] - m1) * (c1[k] - m1);
  }
  EXPECT_GT(s01 / std::sqrt(s00 * s11), 0.4);
}

TEST(Simulate, SpikesFromIsis) {
  const SpikeData s = spikes_from_isis({{0.5, 0.25}, {2.0}}, 3.0);
  ASSERT_EQ(s.spikes(0).size(), 2u);
  EXPECT_DOUBLE_EQ(s.spikes(0)[1], 0.75);
  EXPECT_DOUBLE_EQ(s.spikes(1)[0], 2.0);
}

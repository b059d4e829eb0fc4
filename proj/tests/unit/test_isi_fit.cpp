#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "ctlfm/error.hpp"
#include "ctlfm/isi_fit.hpp"
#include "ctlfm/simulate.hpp"

using namespace ctlfm;

TEST(IsiExtract, DropsCensoredEdges) {
  const SpikeData s(10.0, {{1.0, 3.0, 3.5}, {2.0}, {}});
  const IsiSet isis = isi_extract(s);
  ASSERT_EQ(isis.count(0), 2u);
  EXPECT_DOUBLE_EQ(isis.isis[0][0], 2.0);
  EXPECT_DOUBLE_EQ(isis.isis[0][1], 0.5);
  EXPECT_EQ(isis.count(1), 0u);
  EXPECT_EQ(isis.count(2), 0u);
}

TEST(IsiExtract, MergeKeepsWindowsApart) {
  const IsiSet a = isi_extract(SpikeData(5.0, {{1.0, 2.0}}));
  const IsiSet b = isi_extract(SpikeData(5.0, {{0.5, 3.5}}));
  const IsiSet m = merge_isis({a, b});
  ASSERT_EQ(m.count(0), 2u);
  EXPECT_DOUBLE_EQ(m.isis[0][0], 1.0);
  EXPECT_DOUBLE_EQ(m.isis[0][1], 3.0);
}

TEST(IgMle, ClosedForm) {
  const std::vector<double> t{0.5, 1.0, 2.0};
  const IgParams p = ig_mle(t);
  const double mean = 3.5 / 3.0;
  const double s = 1.0 / 0.5 + 1.0 + 0.5 - 3.0 / mean;
  EXPECT_NEAR(p.mean, mean, 1e-15);
  EXPECT_NEAR(p.shape, 3.0 / s, 1e-13);
}

TEST(IgMle, LoglikIsMaximizedAtMle) {
  const auto xs = sample_ig(1.5, 2.0, 2000, 8);
  const IgParams p = ig_mle(xs);
  const double best = ig_loglik(xs, p);
  for (double f : {0.97, 1.03}) {
    EXPECT_LT(ig_loglik(xs, {p.mean * f, p.shape}), best);
    EXPECT_LT(ig_loglik(xs, {p.mean, p.shape * f}), best);
  }
  // Density of one point against the textbook formula.
  const double x = 0.8;
  const double ref = 0.5 * std::log(2.0 / (2.0 * std::numbers::pi * x * x * x)) -
                     2.0 * (x - 1.5) * (x - 1.5) / (2.0 * 1.5 * 1.5 * x);
  EXPECT_NEAR(ig_loglik({x}, {1.5, 2.0}), ref, 1e-13);
}

TEST(IgMle, Errors) {
  EXPECT_THROW(ig_mle({1.0}), InsufficientData);
  EXPECT_THROW(ig_mle({1.0, 1.0, 1.0}), DegenerateData);
  EXPECT_THROW(ig_mle({1.0, -1.0}), InvalidArgument);
}

TEST(Theta, InvertsIgParameters) {
  IgEstimate est;
  est.params = {{2.0, 4.0}};
  est.n = {10};
  const NeuronParams th = theta_from_ig(est);
  EXPECT_NEAR(th.b[0], 2.0, 1e-15);
  EXPECT_NEAR(th.mu[0], 1.0, 1e-15);
}

TEST(Theta, RecoversDriftAndThreshold) {
  const auto xs = simulate_renewal_single(1.0, 1.5, 100000, 42);
  IsiSet set;
  set.isis = {xs};
  const ThetaEstimate est = estimate_theta(set);
  ASSERT_TRUE(est.estimable[0]);
  EXPECT_NEAR(est.theta.mu[0], 1.0, 0.03);
  EXPECT_NEAR(est.theta.b[0], 1.5, 0.045);
}

TEST(Theta, FlagsNeuronsWithoutData) {
  IsiSet set;
  set.isis = {{0.4, 0.6, 0.5}, {0.3}, {}};
  const ThetaEstimate est = estimate_theta(set);
  EXPECT_TRUE(est.estimable[0]);
  EXPECT_FALSE(est.estimable[1]);
  EXPECT_FALSE(est.estimable[2]);
  EXPECT_TRUE(std::isnan(est.theta.mu[1]));
  EXPECT_FALSE(est.reasons[1].empty());
  EXPECT_EQ(est.estimable_indices(), std::vector<std::size_t>{0});
}

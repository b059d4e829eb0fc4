#include <gtest/gtest.h>

#include <cmath>

#include "ctlfm/analysis.hpp"
#include "ctlfm/error.hpp"
#include "ctlfm/probit.hpp"
#include "support.hpp"

using namespace ctlfm;

TEST(Ari, KnownValues) {
  EXPECT_DOUBLE_EQ(adjusted_rand_index({1, 1, 2, 2}, {2, 2, 1, 1}), 1.0);
  // Classic example: ARI = 0.24242...
  const std::vector<int> a{1, 1, 1, 2, 2, 2};
  const std::vector<int> b{1, 1, 2, 2, 3, 3};
  EXPECT_NEAR(adjusted_rand_index(a, b), 0.24242424242424243, 1e-12);
  EXPECT_NEAR(adjusted_rand_index({1, 2, 1, 2}, {1, 1, 2, 2}), -0.5, 1e-12);
  EXPECT_THROW(adjusted_rand_index({1}, {1, 2}), InvalidArgument);
}

TEST(Kmeans, SeparatesWellSeparatedRows) {
  Matrix m(6, 2);
  m << 0, 0, 0.1, 0, 0, 0.1, 5, 5, 5.1, 5, 5, 5.1;
  const Clustering c = kmeans_rows(m, 2, 5, 3);
  EXPECT_EQ(c.labels, (std::vector<int>{1, 1, 1, 2, 2, 2}));
  EXPECT_EQ(c.effective_k, 2);
  EXPECT_NEAR(c.inertia, 4 * 0.1 * 0.1 * 2.0 / 3.0 * 1.0, 1e-12);
  const Clustering again = kmeans_rows(m, 2, 5, 3);
  EXPECT_EQ(again.labels, c.labels);
}

TEST(Kmeans, ErrorsAndDuplicates) {
  EXPECT_THROW(kmeans_rows(Matrix::Zero(2, 1), 3), InvalidArgument);
  EXPECT_THROW(kmeans_rows(Matrix::Zero(2, 1), 0), InvalidArgument);
  const Clustering c = kmeans_rows(Matrix::Zero(4, 2), 2);
  EXPECT_EQ(c.effective_k, 1);
  EXPECT_FALSE(c.warnings.empty());
}

TEST(Comembership, FromLabels) {
  const Matrix m = comembership(std::vector<int>{1, 2, 1});
  Matrix ref(3, 3);
  ref << 1, 0, 1, 0, 1, 0, 1, 0, 1;
  EXPECT_EQ(m, ref);
}

TEST(Mask, WaldThresholdAndBonferroni) {
  Matrix s = Matrix::Identity(3, 3);
  s(0, 1) = s(1, 0) = 0.3;
  s(0, 2) = s(2, 0) = 0.1;
  s(1, 2) = s(2, 1) = -0.22;
  Matrix se = Matrix::Constant(3, 3, 0.1);
  se.diagonal().setZero();
  const MaskedCorrelation m = mask_correlation(s, se, 0.05);
  EXPECT_NEAR(m.threshold, normal_quantile(0.975), 1e-12);
  EXPECT_TRUE(m.mask(0, 1));
  EXPECT_FALSE(m.mask(0, 2));
  EXPECT_TRUE(m.mask(1, 2));
  EXPECT_FALSE(m.mask(0, 0));
  EXPECT_EQ(m.display(0, 2), 0.0);
  EXPECT_EQ(m.display(1, 1), 0.0);
  EXPECT_DOUBLE_EQ(m.display(1, 2), -0.22);
  const MaskedCorrelation b = mask_correlation(s, se, 0.05, true);
  EXPECT_NEAR(b.threshold, normal_quantile(1.0 - 0.05 / 6.0), 1e-12);  // 3 pairs, two-sided
  EXPECT_FALSE(b.mask(1, 2));                                         // |z| = 2.2 < 2.39
  EXPECT_TRUE(b.mask(0, 1));
}

TEST(SmoothedCorrelation, IdenticalAndSilentTrains) {
  const std::vector<std::vector<double>> spikes{{1.0, 2.5, 4.0}, {1.0, 2.5, 4.0}, {}};
  const SmoothedCorrelation c = smoothed_correlation(spikes, 5.0, 0.05);
  EXPECT_NEAR(c.correlation(0, 1), 1.0, 1e-12);
  EXPECT_EQ(c.correlation(0, 2), 0.0);
  EXPECT_EQ(c.correlation(2, 2), 1.0);
  EXPECT_FALSE(c.warnings.empty());
}

TEST(Baseline, ClustersStronglyCoupledBlocks) {
  const auto ds = fixtures::simulate_binned(fixtures::two_block_lambda(6, 0.95), 20000, 0.01, 4);
  const Clustering c = baseline_cluster(ds.spikes, 0.05, 2, 1);
  EXPECT_EQ(adjusted_rand_index(c.labels, {1, 1, 1, 2, 2, 2}), 1.0);
}

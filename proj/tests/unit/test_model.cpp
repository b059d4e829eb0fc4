#include <gtest/gtest.h>

#include <cmath>

#include "ctlfm/error.hpp"
#include "ctlfm/model.hpp"

using namespace ctlfm;

TEST(SpikeData, RejectsUnsortedAndOutOfRange) {
  EXPECT_THROW(SpikeData(1.0, {{0.5, 0.2}}), InvalidArgument);
  EXPECT_THROW(SpikeData(1.0, {{0.5, 0.5}}), InvalidArgument);
  EXPECT_THROW(SpikeData(1.0, {{1.5}}), InvalidArgument);
  EXPECT_THROW(SpikeData(1.0, {{0.0}}), InvalidArgument);
  EXPECT_NO_THROW(SpikeData(1.0, {{1.0}}));
}

TEST(SpikeData, DefaultIdsAndWindow) {
  const SpikeData s(10.0, {{1.0, 4.0, 6.0}, {5.0}});
  ASSERT_EQ(s.ids().size(), 2u);
  EXPECT_EQ(s.ids()[0], "n0");
  EXPECT_EQ(s.ids()[1], "n1");
  const SpikeData w = s.window(4.0, 8.0);  // (4, 8]
  EXPECT_DOUBLE_EQ(w.t_end(), 4.0);
  ASSERT_EQ(w.spikes(0).size(), 1u);
  EXPECT_DOUBLE_EQ(w.spikes(0)[0], 2.0);
  EXPECT_EQ(w.spikes(1).size(), 1u);
  EXPECT_EQ(s.total_spikes(), 4u);
}

TEST(Binning, HalfOpenBins) {
  EXPECT_EQ(bin_index(0.01, 0.01), 0u);
  EXPECT_EQ(bin_index(0.0100001, 0.01), 1u);
  EXPECT_EQ(bin_index(0.3, 0.1), 2u);  // 0.3 lies in (0.2, 0.3]
  const SpikeData s(1.0, {{0.1, 0.55, 1.0}});
  const BinnedSpikes y = bin_spikes(s, GridSpec::covering(1.0, 0.1));
  ASSERT_EQ(y.bins(), 10u);
  EXPECT_EQ(y.y(0, 0), 1);
  EXPECT_EQ(y.y(0, 5), 1);
  EXPECT_EQ(y.y(0, 9), 1);
  EXPECT_EQ(y.y.cast<int>().sum(), 3);
}

TEST(Binning, TwoSpikesInOneBinIsReported) {
  const SpikeData s(1.0, {{0.5}, {0.11, 0.12}});
  try {
    bin_spikes(s, GridSpec::covering(1.0, 0.1));
    FAIL() << "expected ResolutionTooCoarse";
  } catch (const ResolutionTooCoarse& e) {
    EXPECT_EQ(e.neuron(), 1u);
    EXPECT_EQ(e.bin(), 2u);  // 1-based, as in the message
  }
}

TEST(Loadings, ValidationAndPsi) {
  Matrix l(3, 1);
  l << 0.5, -0.6, 0.0;
  const FactorLoadings fl(l);
  EXPECT_NEAR(fl.psi()[0], 0.75, 1e-15);
  EXPECT_NEAR(fl.psi()[1], 0.64, 1e-15);
  EXPECT_NEAR(fl.psi()[2], 1.0, 1e-15);
  Matrix bad(2, 1);
  bad << 1.0, 0.0;
  EXPECT_THROW(FactorLoadings{bad}, InvalidArgument);
  EXPECT_THROW(FactorLoadings(Matrix::Zero(2, 2)), InvalidArgument);  // d must be < q
}

TEST(Loadings, UnconstrainedRoundTrip) {
  Matrix z(4, 2);
  z << 0.3, -1.2, 2.0, 0.1, -0.7, 0.0, 5.0, -3.0;
  const FactorLoadings fl = lambda_from_unconstrained(z);
  for (Eigen::Index i = 0; i < 4; ++i) EXPECT_LT(fl.lambda().row(i).squaredNorm(), 1.0);
  EXPECT_LT((unconstrained_from_lambda(fl) - z).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Correlation, UnitDiagonal) {
  Matrix l(3, 2);
  l << 0.5, 0.2, -0.3, 0.7, 0.1, 0.1;
  const CorrelationModel c = build_correlation(FactorLoadings(l));
  for (Eigen::Index i = 0; i < 3; ++i) EXPECT_NEAR(c.sigma(i, i), 1.0, 1e-15);
  EXPECT_NEAR(c.sigma(0, 1), 0.5 * -0.3 + 0.2 * 0.7, 1e-15);
}

TEST(NeuronParams, Validate) {
  NeuronParams p{Vector::Constant(2, 1.0), Vector::Constant(2, 1.0)};
  EXPECT_NO_THROW(p.validate());
  p.b[1] = -1.0;
  EXPECT_THROW(p.validate(), InvalidArgument);
  p.b.resize(1);
  EXPECT_THROW(p.validate(), InvalidArgument);
}

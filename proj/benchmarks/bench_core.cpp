#include <benchmark/benchmark.h>

#include <random>

#include "ctlfm/fit.hpp"
#include "ctlfm/laplace.hpp"
#include "ctlfm/latent_hessian.hpp"
#include "ctlfm/simulate.hpp"
#include "ctlfm/woodbury.hpp"

using namespace ctlfm;

namespace {

Matrix block_loadings(Eigen::Index q, Eigen::Index d) {
  Matrix l = Matrix::Zero(q, d);
  for (Eigen::Index i = 0; i < q; ++i) l(i, i * d / q) = 0.6;
  return l;
}

struct Data {
  NeuronParams theta;
  BinnedSpikes y;
};

Data make_data(Eigen::Index q, Eigen::Index d, std::size_t bins, double delta = 0.01) {
  NeuronParams th{Vector::Constant(q, 2.0), Vector::Constant(q, 1.0)};
  SimOptions so;
  so.latent_stride = 0;
  const SimOutput sim = simulate_population(th, FactorLoadings(block_loadings(q, d)),
                                            delta * static_cast<double>(bins), delta / 10.0, 3, so);
  return {th, bin_spikes(sim.spikes, GridSpec(delta, bins))};
}

void BM_WoodburySolve(benchmark::State& state) {
  const auto q = state.range(0);
  const auto d = state.range(1);
  const FactorLoadings fl(block_loadings(q, d));
  const Matrix rhs = Matrix::Random(q, 200);
  for (auto _ : state) {
    const WoodburySolver ws(fl);
    benchmark::DoNotOptimize(ws.solve(rhs));
  }
  state.SetComplexityN(q);
}
BENCHMARK(BM_WoodburySolve)->ArgsProduct({{16, 64, 256, 1024}, {2, 5}})->Complexity(benchmark::oN);

void BM_HessianFactor(benchmark::State& state, HessianBackend backend) {
  const auto q = state.range(0);
  const Data data = make_data(q, 2, 2000);
  const FactorLoadings fl(block_loadings(q, 2));
  const WoodburySolver ws(fl);
  const Matrix keep = (1 - data.y.y.cast<int>().array()).cast<double>().matrix();
  const Matrix w = Matrix::Constant(q, 2000, 5.0);
  auto h = make_latent_hessian(backend, keep, ws, data.y.grid.delta());
  for (auto _ : state) benchmark::DoNotOptimize(h->factor(w, 0.0));
}
BENCHMARK_CAPTURE(BM_HessianFactor, dense, HessianBackend::block_dense)->Arg(16)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_HessianFactor, envelope, HessianBackend::factor_envelope)->Arg(16)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_LaplaceNllGrad(benchmark::State& state) {
  const auto q = state.range(0);
  const Data data = make_data(q, 2, 1000);
  const LaplaceModel model(data.y, data.theta);
  const FactorLoadings fl(block_loadings(q, 2) * 0.9);
  const ModeResult start = model.inner_mode(fl);
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.evaluate(fl, true, InnerOptions{}, &start.mode.x));
  }
}
BENCHMARK(BM_LaplaceNllGrad)->Arg(8)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();

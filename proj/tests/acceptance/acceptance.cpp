// One line per acceptance criterion; exit status 1 when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ctlfm/analysis.hpp"
#include "ctlfm/fit.hpp"
#include "ctlfm/io.hpp"
#include "ctlfm/isi_fit.hpp"
#include "ctlfm/laplace.hpp"
#include "ctlfm/pipeline.hpp"
#include "ctlfm/scaling.hpp"
#include "ctlfm/simulate.hpp"
#include "ctlfm/woodbury.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace ctlfm;
using namespace ctlfm::fixtures;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double max_offdiag_abs(const Matrix& a) {
  double m = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      if (i != j) m = std::max(m, std::abs(a(i, j)));
    }
  }
  return m;
}

double mean_offdiag_abs(const Matrix& a) {
  double s = 0.0;
  Eigen::Index n = 0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < a.cols(); ++j, ++n) s += std::abs(a(i, j));
  }
  return n > 0 ? s / static_cast<double>(n) : 0.0;
}

Outcome ig_recovery() {
  const auto t0 = std::chrono::steady_clock::now();
  IsiSet set;
  set.isis = {simulate_renewal_single(1.0, 1.5, 100000, 2024)};
  const ThetaEstimate est = estimate_theta(set);
  const double secs = seconds_since(t0);
  const double em = std::abs(est.theta.mu[0] - 1.0);
  const double eb = std::abs(est.theta.b[0] - 1.5) / 1.5;
  return {em < 0.03 && eb < 0.03 && secs < 5.0,
          fmt("mu=%.4f (rel %.2e) b=%.4f (rel %.2e) in %.2fs", est.theta.mu[0], em, est.theta.b[0], eb, secs)};
}

Outcome woodbury() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> qd(2, 64);
  std::normal_distribution<double> n01;
  double worst_solve = 0.0, worst_logdet = 0.0;
  for (int k = 0; k < 100; ++k) {
    const int q = qd(rng);
    const int d = std::uniform_int_distribution<int>(1, std::min(5, q - 1))(rng);
    Matrix z(q, d);
    for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = n01(rng);
    const FactorLoadings fl = lambda_from_unconstrained(z);
    const Matrix sigma = build_correlation(fl).sigma;
    Matrix rhs(q, 3);
    for (Eigen::Index i = 0; i < rhs.size(); ++i) rhs.data()[i] = n01(rng);
    const Eigen::LLT<Matrix> llt(sigma);
    const Matrix ref = llt.solve(rhs);
    const double ref_logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    worst_solve = std::max(worst_solve, (woodbury_solve(fl, rhs) - ref).cwiseAbs().maxCoeff());
    worst_logdet = std::max(worst_logdet, std::abs(woodbury_logdet(fl) - ref_logdet));
  }
  const double secs = seconds_since(t0);
  return {worst_solve < 1e-8 && worst_logdet < 1e-8 && secs < 10.0,
          fmt("max solve err %.2e, max logdet err %.2e, %.2fs", worst_solve, worst_logdet, secs)};
}

Outcome laplace_exact() {
  const BinnedSpikes y = binned({{0, 1, 0, 0, 1}, {1, 0, 0, 1, 0}, {0, 0, 1, 0, 0}}, 0.1);
  const NeuronParams th{Vector::Constant(3, 2.0), Vector::Constant(3, 1.0)};
  Matrix l(3, 1);
  l << 0.5, -0.4, 0.3;
  const FactorLoadings fl(l);
  Matrix w(3, 5);
  w << 0.1, 0.9, 0.2, 0.3, 1.1, 1.0, 0.1, 0.2, 0.8, 0.0, 0.05, 0.4, 1.2, 0.1, 0.3;
  const double got = laplace_nll(y, th, fl, ObsModel::gaussian_surrogate(w));
  const double ref = surrogate_marginal_nll(y, th, fl, w);
  const double r = rel(got, ref);
  return {r < 1e-8, fmt("laplace %.12f closed form %.12f rel %.2e", got, ref, r)};
}

Outcome laplace_quadrature() {
  const auto [oracle, got] = quadrature_vs_laplace(0.1, 2.0, 1.0, {0, 0, 1});
  const double r = rel(got, oracle);
  return {r < 1e-2, fmt("delta=0.1 y=(0,0,1): laplace %.6f quadrature %.6f rel %.2e", got, oracle, r)};
}

Outcome gradient() {
  const auto ds = simulate_binned(two_block_lambda(6), 200, 0.01, 5);
  const LaplaceModel model(ds.y, ds.theta);
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  const double h = 1e-4;
  double worst = 0.0;
  for (int p = 0; p < 5; ++p) {
    Vector z(12);
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = u(rng);
    OuterObjective obj(model, 2, InnerOptions{});
    Vector g;
    obj(z, &g);
    Vector fd(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      Vector zp = z, zm = z;
      zp[i] += 0.5 * h;
      zm[i] -= 0.5 * h;
      fd[i] = (obj(zp, nullptr) - obj(zm, nullptr)) / h;
    }
    worst = std::max(worst, max_rel(g, fd));
  }
  return {worst < 1e-4, fmt("worst relative error %.2e over 5 points", worst)};
}

Outcome rotation() {
  const auto ds = simulate_binned(two_block_lambda(6), 200, 0.01, 6);
  std::mt19937_64 rng(41);
  Matrix l = two_block_lambda(6, 0.6);
  l(0, 1) = 0.3;
  l(5, 0) = -0.2;
  const double base = laplace_nll(ds.y, ds.theta, FactorLoadings(l));
  double worst = 0.0;
  for (int k = 0; k < 10; ++k) {
    const Matrix q = random_orthogonal(2, rng);
    worst = std::max(worst, std::abs(laplace_nll(ds.y, ds.theta, FactorLoadings(l * q)) - base));
  }
  return {worst < 1e-6, fmt("max |change| %.2e over 10 rotations", worst)};
}

// Planted two-block recording shared by the recovery, clustering and grid checks.
struct Recovery {
  SpikeData spikes;
  Matrix sigma_true;
  std::vector<int> truth;
  ThetaEstimate theta;
  FitOptions opts;
  FitResult fit;
  double seconds = 0.0;
  std::size_t min_spikes = 0;
  double t_end = 0.0;
};

Recovery& recovery() {
  static Recovery r = [] {
    Recovery out;
    const Matrix lambda = two_block_lambda(12);
    const NeuronParams th{Vector::Constant(12, 2.0), Vector::Constant(12, 1.0)};
    SimOptions so;
    so.latent_stride = 0;
    const auto t0 = std::chrono::steady_clock::now();
    for (double t_end = 300.0;; t_end += 50.0) {
      SimOutput sim = simulate_population(th, FactorLoadings(lambda), t_end, 1e-3, 11, so);
      std::size_t least = sim.spikes.spikes(0).size();
      for (std::size_t i = 1; i < 12; ++i) least = std::min(least, sim.spikes.spikes(i).size());
      if (least >= 500) {
        out.spikes = std::move(sim.spikes);
        out.min_spikes = least;
        out.t_end = t_end;
        break;
      }
    }
    out.sigma_true = build_correlation(FactorLoadings(lambda)).sigma;
    for (int i = 0; i < 12; ++i) out.truth.push_back(i < 6 ? 1 : 2);
    out.theta = estimate_theta(isi_extract(out.spikes));
    out.opts.restarts = 2;
    out.opts.seed = 7;
    out.opts.standard_errors = false;
    const BinnedSpikes y = bin_spikes(out.spikes, GridSpec::covering(out.t_end, 0.01));
    out.fit = fit_loadings(y, out.theta.theta, 2, out.opts);
    out.seconds = seconds_since(t0);
    return out;
  }();
  return r;
}

Outcome loading_recovery() {
  const Recovery& r = recovery();
  const double mae = mean_offdiag_abs(r.fit.sigma_hat - r.sigma_true);
  return {mae < 0.1 && r.seconds < 600.0 && r.fit.converged,
          fmt("t_end=%.0fs min spikes %zu, MAE %.4f, max %.4f, converged %d, %.1fs", r.t_end, r.min_spikes, mae,
              max_offdiag_abs(r.fit.sigma_hat - r.sigma_true), r.fit.converged ? 1 : 0, r.seconds)};
}

Outcome clustering() {
  const Recovery& r = recovery();
  const Clustering ours = kmeans_rows(r.fit.lambda_hat.lambda(), 2, 10, 3);
  const Clustering base = baseline_cluster(r.spikes, 0.05, 2, 3);
  const double a = adjusted_rand_index(ours.labels, r.truth);
  const double b = adjusted_rand_index(base.labels, r.truth);
  return {a == 1.0 && a >= b, fmt("ARI loadings %.4f, ARI baseline %.4f", a, b)};
}

Outcome grid_robustness() {
  const Recovery& r = recovery();
  const BinnedSpikes y = bin_spikes(r.spikes, GridSpec::covering(r.t_end, 0.005));
  const FitResult half = fit_loadings(y, r.theta.theta, 2, r.opts);
  const double change = max_offdiag_abs(half.sigma_hat - r.fit.sigma_hat);
  return {change < 0.05, fmt("delta 0.01 -> 0.005: max off-diagonal change %.4f", change)};
}

Outcome scaling() {
  ScalingOptions so;
  so.neurons = {32, 64};
  so.factors = 2;
  so.bins = 2000;
  so.delta = 0.01;
  const std::vector<ScalingRow> rows = run_scaling(so);
  const double ratio = rows[1].median_seconds / rows[0].median_seconds;
  return {ratio < 3.0, fmt("q=32 %s %.3fs/iter, q=64 %s %.3fs/iter, ratio %.2f", to_string(rows[0].backend).c_str(),
                           rows[0].median_seconds, to_string(rows[1].backend).c_str(), rows[1].median_seconds,
                           ratio)};
}

// Every output except manifest.json, which records wall-clock times.
std::vector<fs::path> numeric_outputs(const fs::path& root) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file() && e.path().filename() != "manifest.json") files.push_back(fs::relative(e.path(), root));
  }
  std::sort(files.begin(), files.end());
  return files;
}

Outcome determinism(const fs::path& workdir) {
  PipelineConfig cfg;
  SimulationConfig sim;
  sim.mu = Vector::Constant(6, 2.0);
  sim.b = Vector::Constant(6, 1.0);
  sim.lambda = two_block_lambda(6);
  sim.seed = 3;
  sim.segments = {{60.0, 1.0}};
  cfg.simulation = sim;
  cfg.delta = 0.02;
  cfg.factors = 2;
  cfg.restarts = 1;
  cfg.seed = 5;
  cfg.threads = 2;
  const fs::path a = workdir / "determinism_a", b = workdir / "determinism_b";
  fs::remove_all(a);
  fs::remove_all(b);
  cfg.output_dir = a;
  const PipelineReport ra = run_pipeline(cfg);
  cfg.output_dir = b;
  const PipelineReport rb = run_pipeline(cfg);
  const auto fa = numeric_outputs(a), fb = numeric_outputs(b);
  if (fa != fb) return {false, "output file sets differ"};
  for (const auto& f : fa) {
    if (read_text(a / f) != read_text(b / f)) return {false, "differs: " + f.string()};
  }
  return {ra.exit_code == 0 && rb.exit_code == 0, fmt("%zu files identical, exit codes %d/%d", fa.size(), ra.exit_code,
                                                      rb.exit_code)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ctlfm acceptance checks"};
  fs::path workdir = fs::temp_directory_path() / "ctlfm_acceptance";
  std::vector<int> only;
  app.add_option("--workdir", workdir, "Scratch directory for pipeline outputs");
  app.add_option("--only", only, "Run just these criteria");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(workdir);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> checks{
      {"IG recovery", ig_recovery},
      {"Woodbury correctness", woodbury},
      {"Laplace exactness", laplace_exact},
      {"Laplace accuracy", laplace_quadrature},
      {"gradient contract", gradient},
      {"rotation invariance", rotation},
      {"loading/correlation recovery", loading_recovery},
      {"clustering", clustering},
      {"scaling", scaling},
      {"grid robustness", grid_robustness},
      {"determinism", [&] { return determinism(workdir); }},
  };
  int failures = 0;
  for (std::size_t k = 0; k < checks.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome o;
    try {
      o = checks[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("criterion %d: %s %s: %s\n", id, o.pass ? "PASS" : "FAIL", checks[k].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}

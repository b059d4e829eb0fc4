#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ctlfm/analysis.hpp"
#include "ctlfm/error.hpp"
#include "ctlfm/fit.hpp"
#include "ctlfm/io.hpp"
#include "ctlfm/isi_fit.hpp"
#include "ctlfm/pipeline.hpp"
#include "ctlfm/rng.hpp"
#include "ctlfm/scaling.hpp"
#include "ctlfm/simulate.hpp"
#include "ctlfm/svg.hpp"

namespace fs = std::filesystem;
using namespace ctlfm;

namespace {

enum Exit { kOk = 0, kUsage = 2, kNonConvergence = 3, kIo = 4 };

struct Globals {
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string config;
  std::string output;
};

fs::path output_dir(const Globals& g, const std::optional<PipelineConfig>& cfg) {
  if (!g.output.empty()) return g.output;
  if (const char* env = std::getenv("CTLFM_OUTPUT_DIR"); env != nullptr && *env != '\0') return env;
  if (cfg) return cfg->output_dir;
  return "ctlfm-out";
}

std::optional<PipelineConfig> maybe_config(const Globals& g) {
  if (g.config.empty()) return std::nullopt;
  return load_pipeline_config(g.config);
}

LabeledMatrix labeled(const Matrix& m, std::vector<std::string> rows, std::vector<std::string> cols) {
  return LabeledMatrix{std::move(rows), std::move(cols), m};
}

// Accepts a full pipeline config with a "simulation" section, or the section alone.
SimulationConfig load_simulation(const fs::path& path) {
  const std::string text = read_text(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  if (j.is_object() && (j.contains("simulation") || j.contains("tool"))) {
    PipelineConfig cfg = parse_pipeline_config(text, fs::absolute(path).parent_path());
    if (!cfg.simulation) throw ConfigError(path.string() + ": config has no 'simulation' section");
    return *cfg.simulation;
  }
  return parse_simulation_config(text);
}

int cmd_simulate(const Globals& g, const std::string& out_file, bool csv) {
  if (g.config.empty()) throw ConfigError("simulate: --config with a simulation section is required");
  SimulationConfig sim = load_simulation(g.config);
  if (g.seed) sim.seed = *g.seed;
  const fs::path dir = output_dir(g, std::nullopt);
  const fs::path target = out_file.empty() ? dir / (csv ? "spikes.csv" : "spikes.json") : fs::path(out_file);
  const SpikeData data = simulate_recording(sim);
  write_spikes(target, data);
  const FactorLoadings truth(sim.lambda);
  write_matrix_csv(target.parent_path() / "loadings_true.csv",
                   labeled(truth.lambda(), data.ids(), factor_ids(truth.factors())));
  write_matrix_csv(target.parent_path() / "corr_true.csv",
                   labeled(build_correlation(truth).sigma, data.ids(), data.ids()));
  std::cout << "wrote " << target.string() << " (" << data.neuron_count() << " neurons, "
            << data.total_spikes() << " spikes, t_end " << data.t_end() << " s)\n";
  return kOk;
}

struct FitArgs {
  std::string stage = "all";
  std::string input;
  std::string params;
  std::optional<double> delta;
  std::optional<std::size_t> factors;
  std::optional<double> tau;
  std::optional<int> restarts;
  std::string backend = "auto";
  bool no_se = false;
};

int cmd_fit(const Globals& g, const FitArgs& a) {
  const auto cfg = maybe_config(g);
  fs::path input = a.input;
  if (input.empty() && cfg && !cfg->inputs.empty()) input = cfg->inputs.front();
  if (input.empty()) throw ConfigError("fit: --input spike file is required");
  const fs::path dir = output_dir(g, cfg);
  const SpikeData data = read_spikes(input);

  ThetaEstimate est;
  std::vector<std::string> ids = data.ids();
  if (a.stage == "loadings") {
    const fs::path pp = a.params.empty() ? dir / "params.csv" : fs::path(a.params);
    ParamsTable pt = parse_params_csv(read_text(pp));
    if (pt.ids != ids) throw ConfigError(pp.string() + ": neuron ids do not match " + input.string());
    est = std::move(pt.estimate);
  } else {
    est = estimate_theta(isi_extract(data));
    atomic_write(dir / "params.csv", format_params_csv(ParamsTable{ids, est}));
    std::cout << "wrote " << (dir / "params.csv").string() << "\n";
    if (a.stage == "isi") return kOk;
  }

  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < data.neuron_count(); ++i) {
    if (est.estimable[i]) {
      keep.push_back(i);
    } else {
      std::cerr << "excluding " << ids[i] << ": " << est.reasons[i] << "\n";
    }
  }
  const std::size_t d = a.factors.value_or(cfg ? cfg->factors : 1);
  if (keep.size() <= d) {
    throw ConfigError("fit: " + std::to_string(keep.size()) +
                      " estimable neurons; the factor count must be smaller");
  }
  const SpikeData sub = data.subset(keep);
  NeuronParams theta;
  theta.mu.resize(static_cast<Eigen::Index>(keep.size()));
  theta.b.resize(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) {
    theta.mu[static_cast<Eigen::Index>(k)] = est.theta.mu[static_cast<Eigen::Index>(keep[k])];
    theta.b[static_cast<Eigen::Index>(k)] = est.theta.b[static_cast<Eigen::Index>(keep[k])];
  }
  const double delta = a.delta.value_or(cfg ? cfg->delta : 0.01);
  auto bin = [&] {
    try {
      return bin_spikes(sub, GridSpec::covering(sub.t_end(), delta));
    } catch (const ResolutionTooCoarse& e) {
      throw ConfigError(std::string("fit: ") + e.what() + "; decrease --delta");
    }
  };
  const BinnedSpikes y = bin();

  FitOptions fo;
  if (cfg) {
    fo.restarts = cfg->restarts;
    fo.spectral_start = cfg->spectral_start;
    fo.outer_tol = cfg->outer_tol;
    fo.inner_tol = cfg->inner_tol;
    fo.max_iters = cfg->max_iters;
    fo.seed = cfg->seed;
    fo.standard_errors = cfg->standard_errors;
    fo.spectral_kernel_width = cfg->kernel_width;
    fo.threads = cfg->threads;
  }
  if (a.restarts) fo.restarts = *a.restarts;
  if (g.seed) fo.seed = *g.seed;
  if (g.threads) fo.threads = *g.threads;
  if (a.no_se) fo.standard_errors = false;
  fo.obs = ObsModel::probit(a.tau.value_or(cfg ? cfg->tau : 0.0));
  fo.inner_backend = parse_hessian_backend(a.backend);

  FitResult fit;
  try {
    fit = fit_loadings(y, theta, d, fo);
  } catch (const NonConvergence& e) {
    std::string text = std::string(e.what()) + "\n";
    for (const auto& line : e.trace()) text += line + "\n";
    atomic_write(dir / "nonconvergence.txt", text);
    std::cerr << e.what() << "\ntrace written to " << (dir / "nonconvergence.txt").string() << "\n";
    return kNonConvergence;
  }
  const auto& sids = sub.ids();
  const auto fids = factor_ids(d);
  atomic_write(dir / "fit.json", format_fit_json(fit, sids));
  write_matrix_csv(dir / "loadings.csv", labeled(fit.lambda_hat.lambda(), sids, fids));
  write_matrix_csv(dir / "loadings_se.csv", labeled(fit.se_z, sids, fids));
  write_matrix_csv(dir / "corr.csv", labeled(fit.sigma_hat, sids, sids));
  write_matrix_csv(dir / "corr_se.csv", labeled(fit.sigma_se, sids, sids));
  std::cout << "nll " << format_double(fit.nll) << ", " << fit.iterations << " iterations, restart "
            << fit.best_restart << "; wrote " << dir.string() << "/{fit.json,loadings.csv,corr.csv}\n";
  return kOk;
}

struct AnalyzeArgs {
  std::string fit;
  std::string input;
  std::optional<double> alpha;
  bool bonferroni = false;
  std::optional<int> k;
  int cluster_restarts = 10;
};

int cmd_analyze(const Globals& g, const AnalyzeArgs& a) {
  const auto cfg = maybe_config(g);
  const fs::path dir = output_dir(g, cfg);
  const fs::path fit_path = a.fit.empty() ? dir / "fit.json" : fs::path(a.fit);
  std::vector<std::string> ids;
  const FitResult fit = parse_fit_json(read_text(fit_path), &ids);
  const double alpha = a.alpha.value_or(cfg ? cfg->alpha : 0.05);
  const bool bonf = a.bonferroni || (cfg && cfg->bonferroni);
  const int k = a.k.value_or(cfg ? cfg->k : 2);
  const std::uint64_t seed = g.seed.value_or(cfg ? cfg->seed : 0);

  if (fit.has_standard_errors) {
    const MaskedCorrelation mc = corr_with_significance(fit, alpha, bonf);
    write_matrix_csv(dir / "corr_masked.csv", labeled(mc.display, ids, ids));
    std::cout << "wrote corr_masked.csv (critical |z| " << format_double(mc.threshold) << ")\n";
  } else {
    std::cerr << "fit has no standard errors; corr_masked.csv not written\n";
  }
  const Clustering cl = kmeans_rows(fit.lambda_hat.lambda(), k, a.cluster_restarts, seed);
  for (const auto& w : cl.warnings) std::cerr << "kmeans: " << w << "\n";
  atomic_write(dir / "labels.csv", format_labels_csv(ids, cl.labels));
  write_matrix_csv(dir / "comembership.csv", labeled(comembership(cl), ids, ids));
  std::cout << "wrote labels.csv, comembership.csv (k " << k << ", effective " << cl.effective_k << ")\n";

  if (!a.input.empty()) {
    const SpikeData data = read_spikes(a.input);
    std::vector<std::size_t> rows;
    for (const auto& id : ids) {
      const auto it = std::find(data.ids().begin(), data.ids().end(), id);
      if (it == data.ids().end()) throw ConfigError(a.input + ": neuron " + id + " not found");
      rows.push_back(static_cast<std::size_t>(it - data.ids().begin()));
    }
    const double width = cfg ? cfg->kernel_width : 0.05;
    const Clustering base = baseline_cluster(data.subset(rows), width, k, seed, a.cluster_restarts);
    atomic_write(dir / "baseline_labels.csv", format_labels_csv(ids, base.labels));
    std::cout << "wrote baseline_labels.csv\n";
  }
  return kOk;
}

int cmd_report(const Globals& g) {
  const auto cfg = maybe_config(g);
  const fs::path dir = output_dir(g, cfg);
  struct Item {
    const char* csv;
    const char* svg;
    const char* title;
  };
  const Item items[] = {{"corr.csv", "corr.svg", "correlation"},
                        {"corr_masked.csv", "corr_masked.svg", "significant correlations"},
                        {"comembership.csv", "comembership.svg", "co-membership"},
                        {"corr_true.csv", "corr_true.svg", "planted correlation"}};
  std::ostringstream summary;
  int written = 0;
  for (const auto& it : items) {
    const fs::path src = dir / it.csv;
    if (!fs::exists(src)) continue;
    const LabeledMatrix m = read_matrix_csv(src);
    HeatmapStyle style;
    style.title = it.title;
    atomic_write(dir / it.svg, heatmap_svg(m.values, m.row_ids, m.col_ids, style));
    const Eigen::Index q = m.values.rows();
    if (q == m.values.cols() && q > 1) {
      const double off =
          (m.values.cwiseAbs().sum() - m.values.diagonal().cwiseAbs().sum()) / static_cast<double>(q * (q - 1));
      summary << it.csv << ": " << q << "x" << q << ", mean |off-diagonal| " << format_double(off) << "\n";
    }
    ++written;
  }
  if (written == 0) throw IoError("report: no matrix CSVs found in " + dir.string());
  atomic_write(dir / "report.txt", summary.str());
  std::cout << summary.str();
  return kOk;
}

struct BenchArgs {
  std::vector<std::size_t> neurons{8, 16, 32, 64};
  std::size_t factors = 2;
  std::size_t bins = 2000;
  double delta = 0.01;
  int iterations = 5;
  std::string backend = "auto";
  std::string csv;
};

int cmd_bench(const Globals& g, const BenchArgs& a) {
  ScalingOptions so;
  so.neurons = a.neurons;
  so.factors = a.factors;
  so.bins = a.bins;
  so.delta = a.delta;
  so.iterations = a.iterations;
  so.seed = g.seed.value_or(0);
  so.backend = parse_hessian_backend(a.backend);
  const auto rows = run_scaling(so);
  std::cout << format_scaling_table(rows);
  if (!a.csv.empty()) atomic_write(a.csv, format_scaling_csv(rows));
  return kOk;
}

int cmd_validate(const Globals& g, const std::vector<std::string>& files) {
  if (g.config.empty() && files.empty()) throw ConfigError("validate: nothing to check");
  if (!g.config.empty()) {
    const PipelineConfig cfg = load_pipeline_config(g.config);
    for (const auto& in : cfg.inputs) {
      const SpikeData s = read_spikes(in);
      for (std::size_t w = 0; w < cfg.windows.size(); ++w) {
        if (cfg.windows[w].second > s.t_end()) {
          throw ConfigError("config.windows[" + std::to_string(w) + "]: ends after " + in.string() +
                            " (t_end = " + format_double(s.t_end()) + ")");
        }
      }
    }
    std::cout << "ok " << g.config << "\n";
  }
  for (const auto& f : files) {
    const fs::path p(f);
    const std::string name = p.filename().string();
    if (name == "params.csv") {
      parse_params_csv(read_text(p));
    } else if (name == "labels.csv" || name == "baseline_labels.csv") {
      parse_labels_csv(read_text(p));
    } else if (p.extension() == ".csv" && read_text(p).rfind("id,", 0) == 0) {
      read_matrix_csv(p);
    } else if (name == "fit.json") {
      parse_fit_json(read_text(p));
    } else {
      const SpikeData s = read_spikes(p);
      std::cout << "ok " << f << " (" << s.neuron_count() << " neurons, " << s.total_spikes() << " spikes)\n";
      continue;
    }
    std::cout << "ok " << f << "\n";
  }
  return kOk;
}

int cmd_run(const Globals& g) {
  if (g.config.empty()) throw ConfigError("run: --config is required");
  PipelineConfig cfg = load_pipeline_config(g.config);
  if (g.seed) cfg.seed = *g.seed;
  if (g.threads) cfg.threads = *g.threads;
  if (!g.output.empty()) {
    cfg.output_dir = g.output;
  } else if (const char* env = std::getenv("CTLFM_OUTPUT_DIR"); env != nullptr && *env != '\0') {
    cfg.output_dir = env;
  }
  const PipelineReport rep = run_pipeline(cfg);
  for (const auto& w : rep.windows) {
    std::cout << "window " << w.index << " [" << w.start << ", " << w.end << "]: " << w.status << ", "
              << w.included.size() << " neurons";
    if (!w.excluded.empty()) std::cout << " (" << w.excluded.size() << " excluded)";
    std::cout << ", mean |masked off-diagonal| " << format_double(w.mean_abs_masked_offdiag) << "\n";
  }
  std::cout << "manifest " << rep.manifest.string() << "\n";
  return rep.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ctlfm: continuous-time latent factor model for spike trains"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Random seed");
  app.add_option("--threads", g.threads, "Worker threads (1 = serial reference run)")->check(CLI::PositiveNumber);
  app.add_option("--config", g.config, "Pipeline config (JSON) or run manifest");
  app.add_option("-o,--output", g.output, "Output directory (default: $CTLFM_OUTPUT_DIR, then config)");

  std::string sim_out;
  bool sim_csv = false;
  auto* sim = app.add_subcommand("simulate", "Simulate spike trains from a config");
  sim->add_option("--out", sim_out, "Spike file to write");
  sim->add_flag("--csv", sim_csv, "Write CSV instead of JSON");

  FitArgs fa;
  auto* fit = app.add_subcommand("fit", "Fit neuron parameters and loadings");
  fit->add_option("--stage", fa.stage, "isi, loadings or all")->check(CLI::IsMember({"isi", "loadings", "all"}));
  fit->add_option("-i,--input", fa.input, "Spike file (.json or .csv)");
  fit->add_option("--params", fa.params, "params.csv from the isi stage (for --stage loadings)");
  fit->add_option("--delta", fa.delta, "Grid step in seconds")->check(CLI::PositiveNumber);
  fit->add_option("-d,--factors", fa.factors, "Number of factors");
  fit->add_option("--tau", fa.tau, "Probit smoothing (default sqrt(delta))");
  fit->add_option("--restarts", fa.restarts, "Random restarts");
  fit->add_option("--backend", fa.backend, "Inner Hessian backend")
      ->check(CLI::IsMember({"auto", "block_dense", "factor_envelope"}));
  fit->add_flag("--no-se", fa.no_se, "Skip standard errors");

  AnalyzeArgs aa;
  auto* an = app.add_subcommand("analyze", "Mask correlations and cluster neurons");
  an->add_option("--fit", aa.fit, "fit.json (default <output>/fit.json)");
  an->add_option("-i,--input", aa.input, "Spike file; adds baseline clustering");
  an->add_option("--alpha", aa.alpha, "Significance level");
  an->add_flag("--bonferroni", aa.bonferroni, "Bonferroni-correct the mask");
  an->add_option("-k", aa.k, "Number of clusters");
  an->add_option("--cluster-restarts", aa.cluster_restarts, "k-means restarts")->check(CLI::PositiveNumber);

  auto* rep = app.add_subcommand("report", "Render heatmaps and a summary for an output directory");

  BenchArgs ba;
  auto* bench = app.add_subcommand("bench-scaling", "Time outer iterations against q");
  bench->add_option("--neurons", ba.neurons, "Population sizes")->delimiter(',');
  bench->add_option("-d,--factors", ba.factors, "Number of factors");
  bench->add_option("--bins", ba.bins, "Grid bins T");
  bench->add_option("--delta", ba.delta, "Grid step");
  bench->add_option("--iterations", ba.iterations, "Timed outer iterations per q");
  bench->add_option("--backend", ba.backend, "Inner Hessian backend")
      ->check(CLI::IsMember({"auto", "block_dense", "factor_envelope"}));
  bench->add_option("--csv", ba.csv, "Also write the table as CSV");

  std::vector<std::string> files;
  auto* val = app.add_subcommand("validate", "Lint a config and data files");
  val->add_option("files", files, "Spike, matrix, params, labels or fit files");

  auto* run = app.add_subcommand("run", "Run the full pipeline from --config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*sim) return cmd_simulate(g, sim_out, sim_csv);
    if (*fit) return cmd_fit(g, fa);
    if (*an) return cmd_analyze(g, aa);
    if (*rep) return cmd_report(g);
    if (*bench) return cmd_bench(g, ba);
    if (*val) return cmd_validate(g, files);
    if (*run) return cmd_run(g);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const NonConvergence& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNonConvergence;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return kUsage;
}

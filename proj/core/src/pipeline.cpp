#include "ctlfm/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ctlfm/analysis.hpp"
#include "ctlfm/error.hpp"
#include "ctlfm/io.hpp"
#include "ctlfm/isi_fit.hpp"
#include "ctlfm/rng.hpp"
#include "ctlfm/svg.hpp"

#ifndef CTLFM_VERSION
#define CTLFM_VERSION "unknown"
#endif

namespace ctlfm {

namespace fs = std::filesystem;
using nlohmann::json;

double SimulationConfig::t_end() const {
  double t = 0.0;
  for (const auto& s : segments) t += s.duration;
  return t;
}

namespace {

void check_keys(const json& obj, const std::string& path, const std::set<std::string>& allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key())) throw ConfigError(path + ": unknown field '" + it.key() + "'");
  }
}

template <typename T>
T field(const json& obj, const std::string& key, const std::string& path, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(path + "." + key + ": wrong type");
  }
}

Vector vector_field(const json& obj, const std::string& key, const std::string& path,
                    std::size_t q) {
  if (!obj.contains(key)) throw ConfigError(path + ": missing field '" + key + "'");
  const json& v = obj.at(key);
  try {
    if (v.is_number()) return Vector::Constant(static_cast<Eigen::Index>(q), v.get<double>());
    const auto xs = v.get<std::vector<double>>();
    if (xs.size() != q) {
      throw ConfigError(path + "." + key + ": expected " + std::to_string(q) + " entries");
    }
    return Eigen::Map<const Vector>(xs.data(), static_cast<Eigen::Index>(xs.size()));
  } catch (const json::exception&) {
    throw ConfigError(path + "." + key + ": expected a number or an array of numbers");
  }
}

SimulationConfig simulation_from_json(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path + ": expected an object");
  check_keys(j, path,
             {"neurons", "mu", "b", "loadings", "blocks", "delta_sim", "seed", "segments", "t_end"});
  SimulationConfig sim;
  Matrix lambda;
  if (j.contains("loadings")) {
    try {
      const auto rows = j.at("loadings").get<std::vector<std::vector<double>>>();
      const std::size_t d = rows.empty() ? 0 : rows[0].size();
      lambda.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != d) throw ConfigError(path + ".loadings: ragged rows");
        for (std::size_t c = 0; c < d; ++c) {
          lambda(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
        }
      }
    } catch (const json::exception&) {
      throw ConfigError(path + ".loadings: expected an array of numeric rows");
    }
  } else if (j.contains("blocks")) {
    const json& blk = j.at("blocks");
    const std::string bp = path + ".blocks";
    if (!blk.is_object()) throw ConfigError(bp + ": expected an object");
    check_keys(blk, bp, {"sizes", "loading"});
    const auto sizes = field<std::vector<int>>(blk, "sizes", bp, {});
    const double loading = field<double>(blk, "loading", bp, std::sqrt(0.5));
    if (sizes.empty()) throw ConfigError(bp + ".sizes: need at least one block");
    int q = 0;
    for (int s : sizes) {
      if (s < 1) throw ConfigError(bp + ".sizes: block sizes must be >= 1");
      q += s;
    }
    lambda = Matrix::Zero(q, static_cast<Eigen::Index>(sizes.size()));
    int row = 0;
    for (std::size_t c = 0; c < sizes.size(); ++c) {
      for (int r = 0; r < sizes[c]; ++r) lambda(row++, static_cast<Eigen::Index>(c)) = loading;
    }
  } else {
    throw ConfigError(path + ": need 'loadings' or 'blocks'");
  }
  const auto q = static_cast<std::size_t>(lambda.rows());
  if (j.contains("neurons") && field<std::size_t>(j, "neurons", path, 0) != q) {
    throw ConfigError(path + ".neurons: disagrees with the loading matrix (" + std::to_string(q) +
                      " rows)");
  }
  sim.lambda = lambda;
  sim.mu = vector_field(j, "mu", path, q);
  sim.b = vector_field(j, "b", path, q);
  sim.delta_sim = field<double>(j, "delta_sim", path, 1e-3);
  sim.seed = field<std::uint64_t>(j, "seed", path, 1);
  if (j.contains("segments")) {
    if (!j.at("segments").is_array()) throw ConfigError(path + ".segments: expected an array");
    for (std::size_t s = 0; s < j.at("segments").size(); ++s) {
      const json& seg = j.at("segments")[s];
      const std::string sp = path + ".segments[" + std::to_string(s) + "]";
      if (!seg.is_object()) throw ConfigError(sp + ": expected an object");
      check_keys(seg, sp, {"duration", "lambda_scale"});
      SimSegment g;
      g.duration = field<double>(seg, "duration", sp, 0.0);
      g.lambda_scale = field<double>(seg, "lambda_scale", sp, 1.0);
      if (!(g.duration > 0.0)) throw ConfigError(sp + ".duration: must be > 0");
      if (!(g.lambda_scale >= 0.0 && g.lambda_scale <= 1.0)) {
        throw ConfigError(sp + ".lambda_scale: must lie in [0, 1]");
      }
      sim.segments.push_back(g);
    }
    if (j.contains("t_end")) throw ConfigError(path + ": give either 't_end' or 'segments'");
  } else {
    const double t_end = field<double>(j, "t_end", path, 0.0);
    if (!(t_end > 0.0)) throw ConfigError(path + ": need 't_end' > 0 or 'segments'");
    sim.segments.push_back({t_end, 1.0});
  }
  if (!(sim.delta_sim > 0.0)) throw ConfigError(path + ".delta_sim: must be > 0");
  try {
    NeuronParams{sim.mu, sim.b}.validate();
    FactorLoadings check(sim.lambda);
  } catch (const InvalidArgument& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return sim;
}

json simulation_to_json(const SimulationConfig& sim) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < sim.lambda.rows(); ++i) {
    std::vector<double> r(sim.lambda.cols());
    for (Eigen::Index c = 0; c < sim.lambda.cols(); ++c) r[static_cast<std::size_t>(c)] = sim.lambda(i, c);
    rows.push_back(r);
  }
  json segs = json::array();
  for (const auto& s : sim.segments) segs.push_back({{"duration", s.duration}, {"lambda_scale", s.lambda_scale}});
  return {{"mu", std::vector<double>(sim.mu.data(), sim.mu.data() + sim.mu.size())},
          {"b", std::vector<double>(sim.b.data(), sim.b.data() + sim.b.size())},
          {"loadings", rows},
          {"delta_sim", sim.delta_sim},
          {"seed", sim.seed},
          {"segments", segs}};
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

LabeledMatrix labeled(const Matrix& m, std::vector<std::string> rows, std::vector<std::string> cols) {
  return LabeledMatrix{std::move(rows), std::move(cols), m};
}

}  // namespace

SimulationConfig parse_simulation_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("simulation config: ") + e.what());
  }
  if (j.contains("simulation")) return simulation_from_json(j.at("simulation"), "simulation");
  return simulation_from_json(j, "simulation");
}

PipelineConfig parse_pipeline_config(const std::string& text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  if (j.contains("config") && j.contains("tool")) j = j.at("config");  // run manifest

  check_keys(j, "config",
             {"input", "inputs", "simulation", "windows", "delta", "factors", "tau", "optimizer",
              "alpha", "bonferroni", "k", "cluster_restarts", "kernel_width", "output_dir",
              "threads"});
  PipelineConfig cfg;
  auto resolve = [&](const std::string& p) {
    fs::path path(p);
    if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
    return path.lexically_normal();
  };
  if (j.contains("input")) cfg.inputs.push_back(resolve(field<std::string>(j, "input", "config", "")));
  if (j.contains("inputs")) {
    for (const auto& p : field<std::vector<std::string>>(j, "inputs", "config", {})) {
      cfg.inputs.push_back(resolve(p));
    }
  }
  if (j.contains("simulation")) cfg.simulation = simulation_from_json(j.at("simulation"), "config.simulation");
  if (j.contains("windows")) {
    const json& w = j.at("windows");
    if (!w.is_array()) throw ConfigError("config.windows: expected an array of [start, end] pairs");
    for (std::size_t i = 0; i < w.size(); ++i) {
      const std::string wp = "config.windows[" + std::to_string(i) + "]";
      std::vector<double> pair;
      try {
        pair = w[i].get<std::vector<double>>();
      } catch (const json::exception&) {
        throw ConfigError(wp + ": expected [start, end]");
      }
      if (pair.size() != 2) throw ConfigError(wp + ": expected [start, end]");
      cfg.windows.emplace_back(pair[0], pair[1]);
    }
  }
  cfg.delta = field<double>(j, "delta", "config", cfg.delta);
  cfg.factors = field<std::size_t>(j, "factors", "config", cfg.factors);
  cfg.tau = field<double>(j, "tau", "config", cfg.tau);
  if (j.contains("optimizer")) {
    const json& o = j.at("optimizer");
    if (!o.is_object()) throw ConfigError("config.optimizer: expected an object");
    const std::string op = "config.optimizer";
    check_keys(o, op, {"restarts", "outer_tol", "inner_tol", "max_iters", "seed", "spectral_start",
                       "standard_errors"});
    cfg.restarts = field<int>(o, "restarts", op, cfg.restarts);
    cfg.outer_tol = field<double>(o, "outer_tol", op, cfg.outer_tol);
    cfg.inner_tol = field<double>(o, "inner_tol", op, cfg.inner_tol);
    cfg.max_iters = field<int>(o, "max_iters", op, cfg.max_iters);
    cfg.seed = field<std::uint64_t>(o, "seed", op, cfg.seed);
    cfg.spectral_start = field<bool>(o, "spectral_start", op, cfg.spectral_start);
    cfg.standard_errors = field<bool>(o, "standard_errors", op, cfg.standard_errors);
  }
  cfg.alpha = field<double>(j, "alpha", "config", cfg.alpha);
  cfg.bonferroni = field<bool>(j, "bonferroni", "config", cfg.bonferroni);
  cfg.k = field<int>(j, "k", "config", cfg.k);
  cfg.cluster_restarts = field<int>(j, "cluster_restarts", "config", cfg.cluster_restarts);
  cfg.kernel_width = field<double>(j, "kernel_width", "config", cfg.kernel_width);
  if (j.contains("output_dir")) cfg.output_dir = resolve(field<std::string>(j, "output_dir", "config", ""));
  cfg.threads = field<int>(j, "threads", "config", cfg.threads);
  validate_config(cfg);
  return cfg;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  std::string text;
  try {
    text = read_text(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  return parse_pipeline_config(text, fs::absolute(path).parent_path());
}

std::string config_to_json(const PipelineConfig& cfg) {
  json j;
  std::vector<std::string> inputs;
  for (const auto& p : cfg.inputs) inputs.push_back(p.string());
  if (!inputs.empty()) j["inputs"] = inputs;
  if (cfg.simulation) j["simulation"] = simulation_to_json(*cfg.simulation);
  json windows = json::array();
  for (const auto& [s, e] : cfg.windows) windows.push_back({s, e});
  j["windows"] = windows;
  j["delta"] = cfg.delta;
  j["factors"] = cfg.factors;
  j["tau"] = cfg.tau;
  j["optimizer"] = {{"restarts", cfg.restarts},           {"outer_tol", cfg.outer_tol},
                    {"inner_tol", cfg.inner_tol},         {"max_iters", cfg.max_iters},
                    {"seed", cfg.seed},                   {"spectral_start", cfg.spectral_start},
                    {"standard_errors", cfg.standard_errors}};
  j["alpha"] = cfg.alpha;
  j["bonferroni"] = cfg.bonferroni;
  j["k"] = cfg.k;
  j["cluster_restarts"] = cfg.cluster_restarts;
  j["kernel_width"] = cfg.kernel_width;
  j["output_dir"] = cfg.output_dir.string();
  j["threads"] = cfg.threads;
  return j.dump(2) + "\n";
}

void validate_config(const PipelineConfig& cfg) {
  if (cfg.inputs.empty() == !cfg.simulation.has_value()) {
    throw ConfigError("config: give exactly one of 'input'/'inputs' or 'simulation'");
  }
  if (!(cfg.delta > 0.0) || !std::isfinite(cfg.delta)) throw ConfigError("config.delta: must be > 0");
  if (cfg.factors < 1) throw ConfigError("config.factors: must be >= 1");
  if (!std::isfinite(cfg.tau)) throw ConfigError("config.tau: must be finite");
  if (cfg.restarts < 0) throw ConfigError("config.optimizer.restarts: must be >= 0");
  if (cfg.restarts == 0 && !cfg.spectral_start) {
    throw ConfigError("config.optimizer: no starting point (restarts = 0 and spectral_start = false)");
  }
  if (!(cfg.outer_tol > 0.0)) throw ConfigError("config.optimizer.outer_tol: must be > 0");
  if (!(cfg.inner_tol > 0.0)) throw ConfigError("config.optimizer.inner_tol: must be > 0");
  if (cfg.max_iters < 1) throw ConfigError("config.optimizer.max_iters: must be >= 1");
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw ConfigError("config.alpha: must lie in (0, 1)");
  if (cfg.k < 1) throw ConfigError("config.k: must be >= 1");
  if (cfg.cluster_restarts < 1) throw ConfigError("config.cluster_restarts: must be >= 1");
  if (!(cfg.kernel_width > 0.0)) throw ConfigError("config.kernel_width: must be > 0");
  if (cfg.threads < 1) throw ConfigError("config.threads: must be >= 1");
  for (std::size_t i = 0; i < cfg.windows.size(); ++i) {
    const auto [s, e] = cfg.windows[i];
    if (!(s >= 0.0) || !(e > s) || !std::isfinite(e)) {
      throw ConfigError("config.windows[" + std::to_string(i) + "]: need 0 <= start < end");
    }
  }
  for (std::size_t i = 0; i < cfg.windows.size(); ++i) {
    for (std::size_t k = i + 1; k < cfg.windows.size(); ++k) {
      const auto [a0, a1] = cfg.windows[i];
      const auto [b0, b1] = cfg.windows[k];
      if (a0 < b1 && b0 < a1) {
        std::ostringstream os;
        os << "config.windows: windows[" << i << "] [" << a0 << ", " << a1 << "] overlaps windows["
           << k << "] [" << b0 << ", " << b1 << "]";
        throw ConfigError(os.str());
      }
    }
  }
  if (cfg.simulation) {
    const double t_end = cfg.simulation->t_end();
    for (std::size_t i = 0; i < cfg.windows.size(); ++i) {
      if (cfg.windows[i].second > t_end) {
        throw ConfigError("config.windows[" + std::to_string(i) + "]: ends after the recording (t_end = " +
                          format_double(t_end) + ")");
      }
    }
  }
}

SpikeData simulate_recording(const SimulationConfig& sim) {
  const auto q = static_cast<std::size_t>(sim.lambda.rows());
  std::vector<std::vector<double>> spikes(q);
  double offset = 0.0;
  SimOptions opts;
  opts.latent_stride = 0;
  for (std::size_t s = 0; s < sim.segments.size(); ++s) {
    const SimSegment& seg = sim.segments[s];
    const FactorLoadings fl(sim.lambda * seg.lambda_scale);
    const SimOutput out = simulate_population(NeuronParams{sim.mu, sim.b}, fl, seg.duration,
                                              sim.delta_sim, derive_seed(sim.seed, s), opts);
    for (std::size_t i = 0; i < q; ++i) {
      for (double t : out.spikes.spikes(i)) {
        const double shifted = offset + t;
        if (spikes[i].empty() || shifted > spikes[i].back()) spikes[i].push_back(shifted);
      }
    }
    offset += seg.duration;
  }
  const double t_end = std::max(offset, sim.t_end());
  for (auto& train : spikes) {
    while (!train.empty() && train.back() > t_end) train.pop_back();
  }
  return SpikeData(t_end, std::move(spikes));
}

namespace {

struct Recording {
  std::string name;
  SpikeData data;
  fs::path dir;
};

json window_json(const WindowReport& w, bool with_times) {
  json excluded = json::array();
  for (const auto& [id, why] : w.excluded) excluded.push_back({{"id", id}, {"reason", why}});
  json j = {{"index", w.index},
            {"start", w.start},
            {"end", w.end},
            {"status", w.status},
            {"dir", w.dir.string()},
            {"included", w.included},
            {"excluded", excluded},
            {"nll", w.nll},
            {"mean_abs_masked_offdiag", w.mean_abs_masked_offdiag}};
  if (with_times) j["seconds"] = w.seconds;
  return j;
}

WindowReport run_window(const PipelineConfig& cfg, const SpikeData& rec, double start, double end,
                        std::size_t index, const fs::path& dir) {
  const auto t0 = std::chrono::steady_clock::now();
  WindowReport rep;
  rep.index = index;
  rep.start = start;
  rep.end = end;
  rep.dir = dir;
  const std::string where = "window " + std::to_string(index);

  const SpikeData win = (start == 0.0 && end == rec.t_end()) ? rec : rec.window(start, end);
  const ThetaEstimate est = estimate_theta(isi_extract(win));
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < win.neuron_count(); ++i) {
    if (est.estimable[i]) {
      keep.push_back(i);
      rep.included.push_back(win.ids()[i]);
    } else {
      rep.excluded.emplace_back(win.ids()[i], est.reasons[i]);
    }
  }
  atomic_write(dir / "params.csv", format_params_csv(ParamsTable{win.ids(), est}));
  if (keep.size() <= cfg.factors) {
    throw ConfigError(where + ": " + std::to_string(keep.size()) +
                      " estimable neurons; the factor count must be smaller");
  }
  if (static_cast<std::size_t>(cfg.k) > keep.size()) {
    throw ConfigError(where + ": k = " + std::to_string(cfg.k) + " exceeds the " +
                      std::to_string(keep.size()) + " estimable neurons");
  }
  const SpikeData sub = win.subset(keep);
  NeuronParams theta;
  theta.mu.resize(static_cast<Eigen::Index>(keep.size()));
  theta.b.resize(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) {
    theta.mu[static_cast<Eigen::Index>(k)] = est.theta.mu[static_cast<Eigen::Index>(keep[k])];
    theta.b[static_cast<Eigen::Index>(k)] = est.theta.b[static_cast<Eigen::Index>(keep[k])];
  }
  auto bin = [&] {
    try {
      return bin_spikes(sub, GridSpec::covering(sub.t_end(), cfg.delta));
    } catch (const ResolutionTooCoarse& e) {
      throw ConfigError(where + ": " + e.what() + "; decrease 'delta'");
    }
  };
  const BinnedSpikes binned = bin();

  FitOptions fo;
  fo.restarts = cfg.restarts;
  fo.spectral_start = cfg.spectral_start;
  fo.outer_tol = cfg.outer_tol;
  fo.inner_tol = cfg.inner_tol;
  fo.max_iters = cfg.max_iters;
  fo.seed = derive_seed(cfg.seed, index);
  fo.obs = ObsModel::probit(cfg.tau);
  fo.standard_errors = cfg.standard_errors;
  fo.spectral_kernel_width = cfg.kernel_width;
  fo.threads = cfg.threads;

  FitResult fit;
  try {
    fit = fit_loadings(binned, theta, cfg.factors, fo);
  } catch (const NonConvergence& e) {
    std::string text = std::string(e.what()) + "\n";
    for (const auto& line : e.trace()) text += line + "\n";
    atomic_write(dir / "nonconvergence.txt", text);
    rep.status = "nonconvergence";
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
  }
  rep.nll = fit.nll;
  const auto& ids = sub.ids();
  const auto fids = factor_ids(cfg.factors);
  atomic_write(dir / "fit.json", format_fit_json(fit, ids));
  write_matrix_csv(dir / "loadings.csv", labeled(fit.lambda_hat.lambda(), ids, fids));
  write_matrix_csv(dir / "loadings_se.csv", labeled(fit.se_z, ids, fids));
  write_matrix_csv(dir / "corr.csv", labeled(fit.sigma_hat, ids, ids));
  write_matrix_csv(dir / "corr_se.csv", labeled(fit.sigma_se, ids, ids));

  HeatmapStyle style;
  style.title = "correlation, " + where;
  atomic_write(dir / "corr.svg", heatmap_svg(fit.sigma_hat, ids, ids, style));
  if (fit.has_standard_errors) {
    const MaskedCorrelation mc = corr_with_significance(fit, cfg.alpha, cfg.bonferroni);
    write_matrix_csv(dir / "corr_masked.csv", labeled(mc.display, ids, ids));
    style.title = "significant correlations, " + where;
    atomic_write(dir / "corr_masked.svg", heatmap_svg(mc.display, ids, ids, style));
    const Eigen::Index q = mc.display.rows();
    rep.mean_abs_masked_offdiag = q > 1 ? mc.display.cwiseAbs().sum() / static_cast<double>(q * (q - 1)) : 0.0;
  } else {
    rep.status = "ok (no standard errors; corr_masked.csv not written)";
  }

  const Clustering cl = kmeans_rows(fit.lambda_hat.lambda(), cfg.k, cfg.cluster_restarts,
                                    derive_seed(cfg.seed, 1000 + index));
  atomic_write(dir / "labels.csv", format_labels_csv(ids, cl.labels));
  const Matrix co = comembership(cl);
  write_matrix_csv(dir / "comembership.csv", labeled(co, ids, ids));
  style.title = "co-membership, " + where;
  style.vmin = -1.0;
  atomic_write(dir / "comembership.svg", heatmap_svg(co, ids, ids, style));
  const Clustering base =
      baseline_cluster(sub, cfg.kernel_width, cfg.k, derive_seed(cfg.seed, 2000 + index),
                       cfg.cluster_restarts);
  atomic_write(dir / "baseline_labels.csv", format_labels_csv(ids, base.labels));

  if (rep.status.empty()) rep.status = "ok";
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

}  // namespace

PipelineReport run_pipeline(const PipelineConfig& cfg) {
  validate_config(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  const std::string started = utc_now();
  std::vector<Recording> recordings;
  if (cfg.simulation) {
    SpikeData data = simulate_recording(*cfg.simulation);
    write_spikes(cfg.output_dir / "simulated_spikes.json", data);
    const FactorLoadings truth(cfg.simulation->lambda);
    const auto& ids = data.ids();
    write_matrix_csv(cfg.output_dir / "loadings_true.csv",
                     labeled(truth.lambda(), ids, factor_ids(truth.factors())));
    write_matrix_csv(cfg.output_dir / "corr_true.csv", labeled(build_correlation(truth).sigma, ids, ids));
    recordings.push_back({"simulation", std::move(data), cfg.output_dir});
  } else {
    for (std::size_t r = 0; r < cfg.inputs.size(); ++r) {
      SpikeData data;
      try {
        data = read_spikes(cfg.inputs[r]);
      } catch (const ConfigError& e) {
        throw ConfigError(cfg.inputs[r].string() + ": " + e.what());
      }
      fs::path dir = cfg.output_dir;
      if (cfg.inputs.size() > 1) dir /= std::to_string(r + 1) + "_" + cfg.inputs[r].stem().string();
      recordings.push_back({cfg.inputs[r].string(), std::move(data), dir});
    }
  }

  PipelineReport report;
  json recs = json::array();
  for (const auto& rec : recordings) {
    auto windows = cfg.windows;
    if (windows.empty()) windows.emplace_back(0.0, rec.data.t_end());
    for (std::size_t w = 0; w < windows.size(); ++w) {
      if (windows[w].second > rec.data.t_end()) {
        throw ConfigError("config.windows[" + std::to_string(w) + "]: ends after the recording " +
                          rec.name + " (t_end = " + format_double(rec.data.t_end()) + ")");
      }
    }
    json wj = json::array();
    for (std::size_t w = 0; w < windows.size(); ++w) {
      const fs::path dir = rec.dir / ("window_" + std::to_string(w + 1));
      WindowReport wr = run_window(cfg, rec.data, windows[w].first, windows[w].second, w + 1, dir);
      if (wr.status == "nonconvergence") report.exit_code = 3;
      wj.push_back(window_json(wr, true));
      report.windows.push_back(std::move(wr));
    }
    recs.push_back({{"recording", rec.name}, {"neurons", rec.data.neuron_count()}, {"t_end", rec.data.t_end()},
                    {"windows", wj}});
  }

  json manifest = {{"tool", "ctlfm"},
                   {"version", CTLFM_VERSION},
                   {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                 "." + std::to_string(EIGEN_MINOR_VERSION)},
                   {"config", json::parse(config_to_json(cfg))},
                   {"seed", cfg.seed},
                   {"threads", cfg.threads},
                   {"started_at", started},
                   {"recordings", recs},
                   {"exit_code", report.exit_code}};
  manifest["wall_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report.manifest = cfg.output_dir / "manifest.json";
  atomic_write(report.manifest, manifest.dump(2) + "\n");
  return report;
}

}  // namespace ctlfm

#include "ctlfm/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <sstream>

#include "ctlfm/error.hpp"
#include "ctlfm/probit.hpp"
#include "ctlfm/rng.hpp"

namespace ctlfm {

MaskedCorrelation mask_correlation(const Matrix& sigma_hat, const Matrix& se, double alpha,
                                   bool bonferroni) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("alpha must lie in (0, 1)");
  const Eigen::Index q = sigma_hat.rows();
  if (sigma_hat.cols() != q || se.rows() != q || se.cols() != q) {
    throw InvalidArgument("mask_correlation: sigma and SE must be square and of equal size");
  }
  MaskedCorrelation out;
  out.sigma_hat = sigma_hat;
  out.alpha = alpha;
  out.bonferroni = bonferroni;
  double level = alpha;
  if (bonferroni && q > 1) level /= static_cast<double>(q * (q - 1) / 2);
  out.threshold = normal_quantile(1.0 - level / 2.0);
  out.display = Matrix::Zero(q, q);
  out.z_scores = Matrix::Zero(q, q);
  out.mask = BoolMatrix::Constant(q, q, false);
  for (Eigen::Index i = 0; i < q; ++i) {
    for (Eigen::Index j = i + 1; j < q; ++j) {
      const double v = 0.5 * (sigma_hat(i, j) + sigma_hat(j, i));
      const double s = 0.5 * (se(i, j) + se(j, i));
      double z = 0.0;
      if (s > 0.0) {
        z = std::abs(v) / s;
      } else if (v != 0.0 && s == 0.0) {
        z = std::numeric_limits<double>::infinity();
      }
      out.z_scores(i, j) = out.z_scores(j, i) = z;
      const bool keep = z >= out.threshold;
      out.mask(i, j) = out.mask(j, i) = keep;
      if (keep) out.display(i, j) = out.display(j, i) = v;
    }
  }
  return out;
}

MaskedCorrelation corr_with_significance(const FitResult& fit, double alpha, bool bonferroni) {
  if (!fit.has_standard_errors) {
    throw InvalidArgument(
        "fit has no standard errors; rerun the loadings fit with standard errors enabled");
  }
  return mask_correlation(fit.sigma_hat, fit.sigma_se, alpha, bonferroni);
}

namespace {

double row_distance2(const Matrix& m, Eigen::Index i, const Matrix& centers, Eigen::Index c) {
  return (m.row(i) - centers.row(c)).squaredNorm();
}

struct LloydRun {
  std::vector<int> assign;
  double inertia = 0.0;
};

Matrix kmeanspp_seed(const Matrix& m, int k, Rng& rng) {
  const Eigen::Index n = m.rows();
  Matrix centers(k, m.cols());
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto first = static_cast<Eigen::Index>(unif(rng) * static_cast<double>(n));
  first = std::min(first, n - 1);
  centers.row(0) = m.row(first);
  Vector d2(n);
  for (Eigen::Index i = 0; i < n; ++i) d2[i] = row_distance2(m, i, centers, 0);
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      const double r = unif(rng) * total;
      double acc = 0.0;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc > r && d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
    }
    centers.row(c) = m.row(pick);
    for (Eigen::Index i = 0; i < n; ++i) d2[i] = std::min(d2[i], row_distance2(m, i, centers, c));
  }
  return centers;
}

LloydRun lloyd(const Matrix& m, Matrix centers, int max_iters) {
  const Eigen::Index n = m.rows();
  const auto k = static_cast<int>(centers.rows());
  LloydRun run;
  run.assign.assign(static_cast<std::size_t>(n), -1);
  double prev = std::numeric_limits<double>::infinity();
  for (int it = 0; it < max_iters; ++it) {
    bool changed = false;
    double inertia = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = row_distance2(m, i, centers, 0);
      for (int c = 1; c < k; ++c) {
        const double dc = row_distance2(m, i, centers, c);
        if (dc < best_d) {
          best_d = dc;
          best = c;
        }
      }
      inertia += best_d;
      if (run.assign[static_cast<std::size_t>(i)] != best) {
        run.assign[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }
    // Assignment and update steps can only lower the objective.
    if (inertia > prev * (1.0 + 1e-12) + 1e-300) {
      throw InternalError("k-means inertia increased during Lloyd iterations");
    }
    prev = inertia;
    run.inertia = inertia;
    if (!changed && it > 0) break;

    Matrix sums = Matrix::Zero(k, m.cols());
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int c = run.assign[static_cast<std::size_t>(i)];
      sums.row(c) += m.row(i);
      ++counts[static_cast<std::size_t>(c)];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        centers.row(c) = sums.row(c) / counts[static_cast<std::size_t>(c)];
      }
    }
  }
  // Inertia of the final assignment against its own centroids.
  Matrix sums = Matrix::Zero(k, m.cols());
  std::vector<int> counts(static_cast<std::size_t>(k), 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int c = run.assign[static_cast<std::size_t>(i)];
    sums.row(c) += m.row(i);
    ++counts[static_cast<std::size_t>(c)];
  }
  double inertia = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int c = run.assign[static_cast<std::size_t>(i)];
    inertia += (m.row(i) - sums.row(c) / counts[static_cast<std::size_t>(c)]).squaredNorm();
  }
  run.inertia = inertia;
  return run;
}

std::vector<int> relabel(const std::vector<int>& raw) {
  std::map<int, int> names;
  std::vector<int> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    auto it = names.find(raw[i]);
    if (it == names.end()) it = names.emplace(raw[i], static_cast<int>(names.size()) + 1).first;
    out[i] = it->second;
  }
  return out;
}

}  // namespace

Clustering kmeans_rows(const Matrix& m, int k, int restarts, std::uint64_t seed, int max_iters) {
  const Eigen::Index n = m.rows();
  if (k < 1) throw InvalidArgument("kmeans_rows: k must be >= 1");
  if (k > n) throw InvalidArgument("kmeans_rows: k must not exceed the number of rows");
  if (!m.allFinite()) throw InvalidArgument("kmeans_rows: non-finite input");
  restarts = std::max(restarts, 1);
  Clustering best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
    const LloydRun run = lloyd(m, kmeanspp_seed(m, k, rng), max_iters);
    if (run.inertia < best.inertia) {
      best.inertia = run.inertia;
      best.labels = relabel(run.assign);
    }
  }
  best.k = k;
  best.seed = seed;
  best.effective_k = *std::max_element(best.labels.begin(), best.labels.end());
  if (best.effective_k < k) {
    std::ostringstream os;
    os << "only " << best.effective_k << " of " << k << " clusters are non-empty";
    best.warnings.push_back(os.str());
  }
  return best;
}

Matrix comembership(const std::vector<int>& labels) {
  const auto n = static_cast<Eigen::Index>(labels.size());
  Matrix c(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      c(i, j) = labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(j)] ? 1.0 : 0.0;
    }
  }
  return c;
}

Matrix comembership(const Clustering& c) { return comembership(c.labels); }

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) throw InvalidArgument("adjusted_rand_index: length mismatch");
  const std::size_t n = a.size();
  if (n < 2) return 1.0;
  std::map<std::pair<int, int>, double> table;
  std::map<int, double> rows;
  std::map<int, double> cols;
  for (std::size_t i = 0; i < n; ++i) {
    table[{a[i], b[i]}] += 1.0;
    rows[a[i]] += 1.0;
    cols[b[i]] += 1.0;
  }
  auto choose2 = [](double x) { return 0.5 * x * (x - 1.0); };
  double index = 0.0;
  for (const auto& [key, v] : table) index += choose2(v);
  double sa = 0.0;
  double sb = 0.0;
  for (const auto& [key, v] : rows) sa += choose2(v);
  for (const auto& [key, v] : cols) sb += choose2(v);
  const double expected = sa * sb / choose2(static_cast<double>(n));
  const double max_index = 0.5 * (sa + sb);
  if (max_index == expected) return index == max_index ? 1.0 : 0.0;
  return (index - expected) / (max_index - expected);
}

SmoothedCorrelation smoothed_correlation(const std::vector<std::vector<double>>& spikes,
                                         double t_end, double kernel_width) {
  if (!(kernel_width > 0.0)) throw InvalidArgument("kernel_width must be > 0");
  if (!(t_end > 0.0)) throw InvalidArgument("t_end must be > 0");
  const auto q = static_cast<Eigen::Index>(spikes.size());
  const double h = kernel_width / 4.0;
  const auto samples = static_cast<Eigen::Index>(std::max(1.0, std::ceil(t_end / h)));
  constexpr int kTaps = 16;  // ±4 standard deviations
  double taps[2 * kTaps + 1];
  for (int j = -kTaps; j <= kTaps; ++j) taps[j + kTaps] = std::exp(-0.5 * (j / 4.0) * (j / 4.0));

  Matrix trace = Matrix::Zero(q, samples);
  for (Eigen::Index i = 0; i < q; ++i) {
    for (double t : spikes[static_cast<std::size_t>(i)]) {
      const auto c = std::clamp<Eigen::Index>(static_cast<Eigen::Index>(std::floor(t / h)), 0,
                                              samples - 1);
      for (int j = -kTaps; j <= kTaps; ++j) {
        const Eigen::Index s = c + j;
        if (s >= 0 && s < samples) trace(i, s) += taps[j + kTaps];
      }
    }
  }
  const Vector mean = trace.rowwise().mean();
  trace.colwise() -= mean;
  const Matrix cov = trace * trace.transpose();

  SmoothedCorrelation out;
  out.correlation = Matrix::Identity(q, q);
  Vector sd(q);
  for (Eigen::Index i = 0; i < q; ++i) {
    sd[i] = std::sqrt(std::max(cov(i, i), 0.0));
    if (!(sd[i] > 0.0)) {
      std::ostringstream os;
      os << "neuron " << i << " has a constant smoothed trace; its correlations are set to 0";
      out.warnings.push_back(os.str());
    }
  }
  for (Eigen::Index i = 0; i < q; ++i) {
    for (Eigen::Index j = i + 1; j < q; ++j) {
      double r = 0.0;
      if (sd[i] > 0.0 && sd[j] > 0.0) r = std::clamp(cov(i, j) / (sd[i] * sd[j]), -1.0, 1.0);
      out.correlation(i, j) = out.correlation(j, i) = r;
    }
  }
  return out;
}

Clustering baseline_cluster(const SpikeData& s, double kernel_width, int k, std::uint64_t seed,
                            int restarts) {
  const SmoothedCorrelation sc = smoothed_correlation(s.spikes(), s.t_end(), kernel_width);
  Clustering c = kmeans_rows(sc.correlation, k, restarts, seed);
  c.warnings.insert(c.warnings.begin(), sc.warnings.begin(), sc.warnings.end());
  return c;
}

}  // namespace ctlfm

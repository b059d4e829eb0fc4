#pragma once

namespace ctlfm {

// log Φ(u) with its first three derivatives in u, accurate in both tails.
struct LogPhi {
  double value;
  double d1;
  double d2;
  double d3;
};

LogPhi log_normal_cdf(double u);

double normal_cdf(double u);
/// Upper quantile: z with Φ(z) = p, for p in (0, 1).
double normal_quantile(double p);

}  // namespace ctlfm

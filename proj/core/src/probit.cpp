#include "ctlfm/probit.hpp"

#include <boost/math/distributions/normal.hpp>

#include <cmath>
#include <numbers>

#include "ctlfm/error.hpp"

namespace ctlfm {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // log(sqrt(2π))

// Mills ratio R(x) = Φ(-x)/φ(x) by its continued fraction, for x >= 8.
double mills_ratio(double x) {
  double f = x;
  for (int k = 80; k >= 1; --k) f = x + k / f;
  return 1.0 / f;
}

}  // namespace

double normal_cdf(double u) { return 0.5 * std::erfc(-u / std::numbers::sqrt2); }

LogPhi log_normal_cdf(double u) {
  LogPhi r{};
  double m;  // φ(u)/Φ(u)
  if (u < -8.0) {
    const double ratio = mills_ratio(-u);
    r.value = -0.5 * u * u - kLogSqrt2Pi + std::log(ratio);
    m = 1.0 / ratio;
  } else {
    const double pdf = std::exp(-0.5 * u * u - kLogSqrt2Pi);
    if (u > 0.0) {
      const double upper = 0.5 * std::erfc(u / std::numbers::sqrt2);
      r.value = std::log1p(-upper);
      m = pdf / (1.0 - upper);
    } else {
      const double cdf = normal_cdf(u);
      r.value = std::log(cdf);
      m = pdf / cdf;
    }
  }
  r.d1 = m;
  r.d2 = -m * (u + m);
  r.d3 = -(r.d2 * (u + m) + m * (1.0 + r.d2));
  return r;
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw InvalidArgument("normal_quantile: p must lie in (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

}  // namespace ctlfm

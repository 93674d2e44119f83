#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <vector>

namespace icarh {

inline double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double norm_logpdf(double x, double mu, double sd) {
  const double z = (x - mu) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * M_PI);
}

// Inverse standard normal CDF, Wichura's AS241 (double precision branch).
inline double norm_quantile(double p) {
  if (p <= 0.0) return -std::numeric_limits<double>::infinity();
  if (p >= 1.0) return std::numeric_limits<double>::infinity();
  const double q = p - 0.5;
  double r, val;
  if (std::fabs(q) <= 0.425) {
    r = 0.180625 - q * q;
    val = q *
          (((((((2509.0809287301226727 * r + 33430.575583588128105) * r + 67265.770927008700853) * r +
               45921.953931549871457) *
                  r +
              13731.693765509461125) *
                 r +
             1971.5909503065514427) *
                r +
            133.14166789178437745) *
               r +
           3.387132872796366608) /
          (((((((5226.495278852545703 * r + 28729.085735721942674) * r + 39307.89580009271061) * r +
               21213.794301586595867) *
                  r +
              5394.1960214247511077) *
                 r +
             687.1870074920579083) *
                r +
            42.313330701600911252) *
               r +
           1.0);
    return val;
  }
  r = (q < 0.0) ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r + 0.24178072517745061177) * r +
               1.27045825245236838258) *
                  r +
              3.64784832476320460504) *
                 r +
             5.7694972214606914055) *
                r +
            4.6303378461565452959) *
               r +
           1.42343711074968357734) /
          (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r + 0.0151986665636164571966) * r +
               0.14810397642748007459) *
                  r +
              0.68976733498510000455) *
                 r +
             1.6763848301838038494) *
                r +
            2.05319162663775882187) *
               r +
           1.0);
  } else {
    r -= 5.0;
    val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r + 0.0012426609473880784386) * r +
               0.026532189526576123093) *
                  r +
              0.29656057182850489123) *
                 r +
             1.7848265399172913358) *
                r +
            5.4637849111641143699) *
               r +
           6.6579046435011037772) /
          (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5) * r +
               7.868691311456132591e-4) *
                  r +
              0.0148753612908506148525) *
                 r +
             0.13692988092273580531) *
                r +
            0.59983220655588793769) *
               r +
           1.0);
  }
  return (q < 0.0) ? -val : val;
}

inline double log_sum_exp(const std::vector<double>& v) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : v) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

// Tanh-sinh (double exponential) quadrature on (a, b). Handles integrable
// endpoint singularities such as the (1-x)^{-1/2} factors appearing in the
// beta-type densities used throughout.
inline double integrate_tanh_sinh(const std::function<double(double)>& f, double a, double b,
                                  int levels = 12) {
  const double c = 0.5 * (b - a);
  const double t_max = 6.1;  // tanh(pi/2 sinh 6.1) is 1 to double precision
  auto term_at = [&](double t) -> double {
    const double u = 0.5 * M_PI * std::sinh(t);
    // distance of the abscissa from the endpoint, computed without the
    // catastrophic cancellation of d +- c*tanh(u) so that integrands with
    // endpoint singularities are evaluated accurately
    const double r = 2.0 / (1.0 + std::exp(2.0 * u));  // 1 - tanh(u)
    const double cu = std::cosh(u);
    const double w = 0.5 * M_PI * std::cosh(t) / (cu * cu);
    double acc = 0.0;
    const double xp = b - c * r;
    const double xm = a + c * r;
    if (r > 0.0 && xp > a && xp < b) {
      const double fx = f(xp);
      if (std::isfinite(fx)) acc += fx * w;
    }
    if (t > 0.0 && r > 0.0 && xm > a && xm < b) {
      const double fx = f(xm);
      if (std::isfinite(fx)) acc += fx * w;
    }
    return acc;
  };
  double h = 1.0;
  double sum = term_at(0.0);
  for (int k = 1; k * h <= t_max; ++k) sum += term_at(k * h);
  double prev = c * h * sum;
  for (int level = 1; level <= levels; ++level) {
    h *= 0.5;
    for (int k = 1; k * h <= t_max; k += 2) sum += term_at(k * h);
    const double estimate = c * h * sum;
    if (level >= 5 && std::fabs(estimate - prev) <= 1e-13 * std::max(1.0, std::fabs(estimate)))
      return estimate;
    prev = estimate;
  }
  return prev;
}

}  // namespace icarh

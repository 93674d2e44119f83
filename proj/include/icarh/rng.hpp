#pragma once

#include <cmath>
#include <cstdint>

#include "icarh/numeric.hpp"

namespace icarh {

// xoshiro256++ with splitmix64 seeding. We carry our own generator and
// distribution code so that draws are bit-identical across platforms and
// standard-library versions; chain/replicate streams are derived from the
// user seed by `Rng(seed, stream)`.
class Rng {
public:
  explicit Rng(uint64_t seed, uint64_t stream = 0) {
    uint64_t x = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    for (auto& si : s_) si = splitmix64(x);
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // uniform on (0, 1); never returns an exact endpoint
  double uniform() {
    double u = (next_u64() >> 11) * 0x1.0p-53;
    return (u == 0.0) ? 0x1.0p-53 : u;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  uint64_t uniform_int(uint64_t n) {  // in [0, n)
    const uint64_t bound = n * ((~0ULL) / n);
    uint64_t x;
    do {
      x = next_u64();
    } while (x >= bound);
    return x % n;
  }

  double normal() {  // Box-Muller, cached pair
    if (has_cache_) {
      has_cache_ = false;
      return cache_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    cache_ = r * std::sin(2.0 * M_PI * u2);
    has_cache_ = true;
    return r * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mu, double sd) { return mu + sd * normal(); }

  // Marsaglia-Tsang; valid for any shape > 0
  double gamma(double shape, double scale) {
    if (shape < 1.0) {
      const double u = uniform();
      return gamma(shape + 1.0, scale) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v * scale;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v * scale;
    }
  }

  double inverse_gamma(double shape, double rate) { return rate / gamma(shape, 1.0); }

  double chi_squared(double df) { return gamma(0.5 * df, 2.0); }

  double student_t(double df) { return normal() / std::sqrt(chi_squared(df) / df); }

  double half_student_t(double df) { return std::fabs(student_t(df)); }

  // inverse-CDF truncated normal on [lo, hi]
  double truncated_normal(double mu, double sd, double lo, double hi) {
    const double a = norm_cdf((lo - mu) / sd);
    const double b = norm_cdf((hi - mu) / sd);
    const double u = a + (b - a) * uniform();
    double x = mu + sd * norm_quantile(u);
    if (x < lo) x = lo;
    if (x > hi) x = hi;
    return x;
  }

private:
  static uint64_t splitmix64(uint64_t& x) {
    uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  uint64_t s_[4];
  double cache_ = 0.0;
  bool has_cache_ = false;
};

}  // namespace icarh

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "margeff/errors.hpp"
#include "margeff/normal.hpp"

namespace margeff {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Derives an independent stream id from a root seed and a path of tags.
// Used so simulation columns, CV folds and bootstrap draws never share a
// stream (each consumer constructs Rng(derive_stream(seed, ...))).
inline std::uint64_t derive_stream(std::uint64_t seed,
                                   std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = seed;
  std::uint64_t out = splitmix64(s);
  for (std::uint64_t tag : path) {
    s = out ^ (tag * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL);
    out = splitmix64(s);
  }
  return out;
}

// xoshiro256++ with splitmix64 seeding. All sampling is implemented on top
// of the raw 64-bit output so datasets are bit-reproducible across
// platforms for a given seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t s = seed;
    for (auto& word : state_) word = splitmix64(s);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform on the open interval (0, 1); never returns an endpoint.
  double uniform01() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  double normal(double mean = 0.0, double sd = 1.0) {
    return mean + sd * normal_quantile(uniform01());
  }

  double bernoulli(double p) { return uniform01() < p ? 1.0 : 0.0; }

  double poisson(double mu) {
    if (!(mu >= 0.0) || !std::isfinite(mu)) {
      throw Error(ErrorCode::mean_support, "poisson: mean must be finite and >= 0");
    }
    if (mu == 0.0) return 0.0;
    if (mu < 10.0) return poisson_inversion(mu);
    return poisson_ptrs(mu);
  }

  double gamma(double shape, double scale) {
    if (!(shape > 0.0) || !(scale > 0.0)) {
      throw Error(ErrorCode::bad_argument, "gamma: shape and scale must be > 0");
    }
    if (shape < 1.0) {
      double boost = std::pow(uniform01(), 1.0 / shape);
      return gamma(shape + 1.0, scale) * boost;
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = normal();
      double t = 1.0 + c * x;
      if (t <= 0.0) continue;
      double v = t * t * t;
      double u = uniform01();
      double x2 = x * x;
      if (u < 1.0 - 0.0331 * x2 * x2) return d * v * scale;
      if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v * scale;
    }
  }

  double inverse_gaussian(double mu, double lambda) {
    double nu = normal();
    double y = nu * nu;
    double x = mu + mu * mu * y / (2.0 * lambda) -
               mu / (2.0 * lambda) * std::sqrt(4.0 * mu * lambda * y + mu * mu * y * y);
    if (uniform01() <= mu / (mu + x)) return x;
    return mu * mu / x;
  }

  // Gamma-Poisson mixture: Y | L ~ Poisson(L), L ~ Gamma(theta, mu/theta).
  double negative_binomial(double mu, double theta) {
    double lam = gamma(theta, mu / theta);
    return poisson(lam);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  double poisson_inversion(double mu) {
    double p = std::exp(-mu);
    double cum = p;
    double u = uniform01();
    double k = 0.0;
    while (u > cum) {
      k += 1.0;
      p *= mu / k;
      cum += p;
      if (k > 1e8) break;  // cannot happen for mu < 10 except FP pathologies
    }
    return k;
  }

  // Hormann's PTRS transformed-rejection sampler, O(1) for large means.
  double poisson_ptrs(double mu) {
    const double log_mu = std::log(mu);
    const double b = 0.931 + 2.53 * std::sqrt(mu);
    const double a = -0.059 + 0.02483 * b;
    const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    const double v_r = 0.9277 - 3.6224 / (b - 2.0);
    for (;;) {
      double u = uniform01() - 0.5;
      double v = uniform01();
      double us = 0.5 - std::abs(u);
      double k = std::floor((2.0 * a / us + b) * u + mu + 0.43);
      if (us >= 0.07 && v <= v_r) return k;
      if (k < 0.0 || (us < 0.013 && v > us)) continue;
      if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <=
          k * log_mu - mu - std::lgamma(k + 1.0)) {
        return k;
      }
    }
  }

  std::uint64_t state_[4];
};

}  // namespace margeff

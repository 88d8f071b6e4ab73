#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "npel/types.hpp"

namespace npel {

// Seed derivation: one root seed fans out to independent streams keyed by
// (purpose, repetition). splitmix64 is the usual mixer for this; the draw
// engine itself is mt19937_64. All variate transforms are implemented here
// from raw 64-bit words, so published seeds reproduce across platforms.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t purpose,
                                 std::uint64_t rep = 0) {
  return splitmix64(splitmix64(root ^ splitmix64(purpose)) ^ rep);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t bits() { return eng_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(bits() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; pairs are cached.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

  VectorXd normal_vector(Index n) {
    VectorXd v(n);
    for (Index i = 0; i < n; ++i) v(i) = normal();
    return v;
  }

  /// Gamma(shape, scale) by Marsaglia-Tsang squeeze; shape < 1 uses the
  /// boosting identity Gamma(a) = Gamma(a+1) * U^{1/a}.
  double gamma(double shape, double scale) {
    if (shape < 1.0) {
      const double u = std::max(uniform(), 1e-300);
      return gamma(shape + 1.0, scale) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = normal();
      double v = 1.0 + c * x;
      if (v <= 0.0) continue;
      v = v * v * v;
      const double u = uniform();
      const double x2 = x * x;
      if (u < 1.0 - 0.0331 * x2 * x2) return d * v * scale;
      if (u > 0.0 && std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) {
        return d * v * scale;
      }
    }
  }

  double chi_squared(double dof) { return gamma(dof / 2.0, 2.0); }

  /// Draw an index with probabilities p (assumed to sum to ~1).
  Index categorical(const VectorXd& p) {
    const double u = uniform() * p.sum();
    double acc = 0.0;
    for (Index k = 0; k < p.size(); ++k) {
      acc += p(k);
      if (u < acc) return k;
    }
    return p.size() - 1;
  }

  /// Random permutation by Fisher-Yates.
  std::vector<Index> permutation(Index n) {
    std::vector<Index> idx(n);
    for (Index i = 0; i < n; ++i) idx[i] = i;
    for (Index i = n - 1; i > 0; --i) {
      const Index j = static_cast<Index>(bits() % static_cast<std::uint64_t>(i + 1));
      std::swap(idx[i], idx[j]);
    }
    return idx;
  }

 private:
  std::mt19937_64 eng_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace npel

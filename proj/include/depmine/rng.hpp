#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>

namespace depmine {

/// SplitMix64 stream. The output sequence is fixed by the seed on every
/// platform, which is what every generator and sampler in the project relies
/// on for reproducibility. Floating-point draws are derived from the integer
/// stream only through IEEE operations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below: empty range");
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller (no cached second variate, so the stream
  /// position after a call does not depend on call history).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  /// Gamma(shape, 1) by Marsaglia-Tsang.
  double gamma(double shape) {
    if (shape <= 0.0) throw std::invalid_argument("Rng::gamma: shape must be positive");
    if (shape < 1.0) return gamma(shape + 1.0) * std::pow(uniform_open(), 1.0 / shape);
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = normal();
      double v = 1.0 + c * x;
      if (v <= 0.0) continue;
      v = v * v * v;
      const double u = uniform_open();
      if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
    }
  }

  /// Index drawn proportionally to non-negative `weights`.
  std::size_t categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    if (!(total > 0.0)) throw std::invalid_argument("Rng::categorical: weights sum to zero");
    double r = uniform() * total;
    for (std::size_t k = 0; k < weights.size(); ++k) {
      r -= weights[k];
      if (r < 0.0) return k;
    }
    // Rounding can leave r marginally non-negative; return the last positive entry.
    for (std::size_t k = weights.size(); k-- > 0;) {
      if (weights[k] > 0.0) return k;
    }
    return weights.size() - 1;
  }

  /// Independent child stream; `stream` distinguishes siblings split from
  /// the same parent state.
  Rng split(std::uint64_t stream) const {
    Rng mixer(state_ ^ (0xd1b54a32d192ed03ULL * (stream + 1)));
    return Rng(mixer.next_u64());
  }

  std::uint64_t state() const { return state_; }

 private:
  double uniform_open() {
    double u = uniform();
    while (u <= 0.0) u = uniform();
    return u;
  }

  std::uint64_t state_;
};

}  // namespace depmine

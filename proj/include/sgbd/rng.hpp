#pragma once

#include <cmath>
#include <cstdint>

namespace sgbd {

namespace detail {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

constexpr std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 33;
  z *= 0xFF51AFD7ED558CCDull;
  z ^= z >> 33;
  z *= 0xC4CEB9FE1A85EC53ull;
  z ^= z >> 33;
  return z;
}

constexpr std::uint64_t derive_key(std::uint64_t key, std::uint64_t v) {
  return mix64((key ^ mix64(v * kGolden + 0x632BE59BD9B4E019ull)) + kGolden);
}

}  // namespace detail

/// Counter-mode pseudo-random stream (splitmix64 finalizer over an
/// incrementing counter). Cheap to construct, so a fresh stream is made for
/// every (iteration, coordinate, purpose) triple; draws in one stream never
/// shift the draws of another.
class RngStream {
 public:
  explicit RngStream(std::uint64_t key) : key_(key) {}

  std::uint64_t next_u64() { return detail::mix64(key_ + detail::kGolden * ++ctr_); }

  /// Uniform on the open interval (0,1), on a lattice symmetric about 1/2.
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal deviate (Marsaglia polar method, second deviate cached).
  /// Trig-free on purpose: sqrt and log keep bit-identical results across
  /// translation units, which keeps seeded chains reproducible everywhere.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  /// Unbiased integer in [0, n) via Lemire's multiply-with-rejection.
  std::uint64_t below(std::uint64_t n) {
    std::uint64_t x = next_u64();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    auto lo = static_cast<std::uint64_t>(m);
    if (lo < n) {
      const std::uint64_t t = (0 - n) % n;
      while (lo < t) {
        x = next_u64();
        m = static_cast<__uint128_t>(x) * n;
        lo = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

 private:
  std::uint64_t key_;
  std::uint64_t ctr_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Purpose tags for stream splitting. Keeping every consumer of randomness on
/// its own keyed stream makes trajectories reproducible regardless of which
/// optional draws a sampler variant performs.
enum class StreamUse : std::uint64_t {
  batch = 1,       // minibatch index sampling, one stream per iteration
  kernel = 2,      // proposal increment / flip / artificial noise, per (iter, coord)
  grad_noise = 3,  // injected gradient noise, per (iter, coord)
  warmup = 4,      // noise-scale warm-up batch
  mc = 5,          // Monte Carlo estimator studies
  data = 6,        // synthetic data generation
};

/// Splittable source of independent RngStreams, keyed from one 64-bit seed.
class RngSeq {
 public:
  explicit RngSeq(std::uint64_t seed) : key_(detail::mix64(seed + detail::kGolden)) {}

  RngStream stream(StreamUse use, std::uint64_t a = 0, std::uint64_t b = 0) const {
    std::uint64_t k = detail::derive_key(key_, static_cast<std::uint64_t>(use));
    k = detail::derive_key(k, a);
    k = detail::derive_key(k, b);
    return RngStream(k);
  }

  /// 64-bit child seed, e.g. one per sweep point so every point can be
  /// reproduced in isolation.
  std::uint64_t child_seed(std::uint64_t a, std::uint64_t b = 0) const {
    return detail::derive_key(detail::derive_key(key_, a), b);
  }

 private:
  std::uint64_t key_;
};

}  // namespace sgbd

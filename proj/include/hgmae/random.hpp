#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace hgmae {

/// Mixes a seed with a stream name and two counters into an independent seed.
/// Streams with different names never share draws.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream,
                          std::uint64_t a = 0, std::uint64_t b = 0);

/// Seeded generator with portable distributions. The standard library's
/// distributions are implementation-defined, so results would differ across
/// toolchains; these are written out explicitly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  /// Standard normal via Box-Muller.
  double normal();

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace hgmae

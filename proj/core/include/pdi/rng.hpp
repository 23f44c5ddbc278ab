#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace pdi {

/// SplitMix64 finalizer. Used to derive independent substream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for substream `tags...` of `seed`. Order of tags matters.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t s = mix64(seed);
  for (auto t : tags) s = mix64(s ^ mix64(t + 0x632be59bd9b4e019ULL));
  return s;
}

// Stream tags, so that e.g. the draw stream of a trial never aliases its
// batch-assignment stream.
enum class Stream : std::uint64_t {
  kDraws = 1,
  kBatches = 2,
  kBootstrap = 3,
  kTrial = 4,
  kGenerator = 5,
  kBurnIn = 6,
};

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t seed, Stream stream)
      : engine_(derive_seed(seed, {static_cast<std::uint64_t>(stream)})) {}

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n). Lemire's method without the rejection bias.
  std::uint64_t index(std::uint64_t n) {
    if (n == 0) return 0;
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      std::uint64_t x = engine_();
      __uint128_t m = static_cast<__uint128_t>(x) * n;
      if (static_cast<std::uint64_t>(m) >= threshold) return static_cast<std::uint64_t>(m >> 64);
    }
  }

  bool bernoulli(double p) { return uniform() < p; }

  std::uint64_t binomial(std::uint64_t n, double p) {
    if (n == 0 || p <= 0.0) return 0;
    if (p >= 1.0) return n;
    std::binomial_distribution<std::uint64_t> dist(n, p);
    return dist(engine_);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace pdi

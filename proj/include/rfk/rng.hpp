#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace rfk {

/// Named sub-streams derived from a single run seed.
enum class Substream : std::uint64_t {
  dataset = 1,
  init = 2,
  training = 3,
  sampling = 4,
  noise = 5,
  render = 6,
};

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seeded random stream. Streams are keyed by a path of integers (run seed,
/// substream, iteration, ray index, ...) so that any unit of work can
/// reconstruct its own stream without sharing state with other workers.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(splitmix64(seed)) {}

  static Rng stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    std::uint64_t h = splitmix64(seed);
    for (std::uint64_t p : path) h = splitmix64(h ^ splitmix64(p + 0x632be59bd9b4e019ULL));
    return Rng(h);
  }
  static Rng stream(std::uint64_t seed, Substream sub, std::initializer_list<std::uint64_t> path = {}) {
    Rng r = stream(seed, {static_cast<std::uint64_t>(sub)});
    std::uint64_t h = r.engine_();
    for (std::uint64_t p : path) h = splitmix64(h ^ splitmix64(p + 0x632be59bd9b4e019ULL));
    return Rng(h);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) {
    double v = lo + (hi - lo) * uniform();
    return v < hi ? v : std::nextafter(hi, lo);
  }

  double normal() { return normal_(engine_); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

}  // namespace rfk

#pragma once

#include <cmath>
#include <cstdint>

namespace tvharm {

/// Splittable counter-style generator (splitmix64). Streams derived from a
/// base seed and task indices are independent of execution order, which
/// keeps parallel Monte Carlo runs bit-reproducible.
struct SplitMix64 {
  std::uint64_t state = 0;

  explicit SplitMix64(std::uint64_t seed = 0) : state(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (no rejection, so the stream layout is
  /// fixed by construction).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

 private:
  double spare_ = 0.0;
  bool have_spare_ = false;
};

/// Hash-combines task indices into an independent stream seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0,
                                 std::uint64_t c = 0) {
  SplitMix64 g(base);
  std::uint64_t s = g.next();
  s ^= a + 0x9e3779b97f4a7c15ULL + (s << 6) + (s >> 2);
  s = SplitMix64(s).next();
  s ^= b + 0x9e3779b97f4a7c15ULL + (s << 6) + (s >> 2);
  s = SplitMix64(s).next();
  s ^= c + 0x9e3779b97f4a7c15ULL + (s << 6) + (s >> 2);
  return SplitMix64(s).next();
}

}  // namespace tvharm

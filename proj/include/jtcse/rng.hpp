#pragma once

#include <cmath>
#include <cstdint>
#include <string>

namespace jtcse {

// Counter-based generator: every consumer derives its own stream from one
// root seed plus a stream label, so adding a consumer never perturbs the
// draws of the others.
class Rng {
public:
  explicit Rng(uint64_t seed) : state_(splitmix(seed + 0x9e3779b97f4a7c15ULL)) {}

  static Rng split(uint64_t seed, const std::string& label, uint64_t counter = 0) {
    uint64_t h = 1469598103934665603ULL;  // FNV-1a over the label
    for (unsigned char c : label) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    return Rng(splitmix(seed) ^ splitmix(h) ^ splitmix(counter * 0x9e3779b97f4a7c15ULL + 1));
  }

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return splitmix(state_);
  }

  // uniform in [0, 1)
  double next_double() { return (next_u64() >> 11) * 0x1.0p-53; }

  // uniform integer in [0, n)
  uint64_t next_below(uint64_t n) { return next_u64() % n; }

  int next_bit() { return static_cast<int>(next_u64() >> 63); }

  double next_normal() {
    // Box-Muller, one value per call (the pair's second half is dropped)
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = next_double();
    double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  // normal(0, std) rejected outside +-2*std
  double next_trunc_normal(double std_dev) {
    for (;;) {
      double z = next_normal();
      if (std::fabs(z) <= 2.0) return z * std_dev;
    }
  }

private:
  static uint64_t splitmix(uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  uint64_t state_;
};

}  // namespace jtcse

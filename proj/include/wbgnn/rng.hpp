#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace wbgnn {

// Deterministic RNG: mt19937_64 raw stream (bit-pinned by the standard) with
// explicit transforms. std::*_distribution is avoided on purpose: its output
// sequences are implementation-defined.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // [0, 1)
  double uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  // standard normal via Box-Muller; second value cached
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * M_PI * u2;
    spare_ = r * std::sin(t);
    have_spare_ = true;
    return r * std::cos(t);
  }

  // exponential with given mean (mean 0 -> always 0)
  double exponential(double mean) {
    const double u = 1.0 - uniform();
    return mean > 0.0 ? -mean * std::log(u) : 0.0;
  }

  // [0, n)
  int64_t uniform_int(int64_t n) {
    return static_cast<int64_t>(
        (static_cast<unsigned __int128>(eng_()) * static_cast<uint64_t>(n)) >> 64);
  }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace wbgnn

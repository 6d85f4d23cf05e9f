#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace mdbert {

// xoshiro256++ seeded through splitmix64. Bit-identical integer stream on
// every platform, which keeps initialization and shuffling reproducible
// from a single 64-bit seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& word : state_) {
      x += 0x9e3779b97f4a7c15ULL;
      std::uint64_t z = x;
      z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
      z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
      word = z ^ (z >> 31);
    }
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

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n).
  std::uint64_t uniform_below(std::uint64_t n) {
    // Rejection sampling keeps the draw unbiased.
    const std::uint64_t threshold = (0ULL - n) % n;
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = radius * std::sin(theta);
    have_spare_ = true;
    return radius * std::cos(theta);
  }

  // Normal(0, stddev) resampled until within two standard deviations.
  double truncated_normal(double stddev) {
    for (;;) {
      const double z = normal();
      if (z >= -2.0 && z <= 2.0) return z * stddev;
    }
  }

  template <class T>
  void shuffle(std::vector<T>& items) {
    if (items.size() < 2) return;
    for (std::size_t i = items.size() - 1; i > 0; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform_below(i + 1));
      std::swap(items[i], items[j]);
    }
  }

  // Independent stream for a sub-task, avoids long-range state sharing.
  Rng fork(std::uint64_t stream) { return Rng(next_u64() ^ (stream * 0x9e3779b97f4a7c15ULL)); }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::uint64_t state_[4] = {};
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace mdbert

#ifndef NSG_CORE_RNG_HPP
#define NSG_CORE_RNG_HPP

#include <cmath>
#include <cstdint>

#include "nsg/core/tensor.hpp"

namespace nsg {

// splitmix64 step; also used as the seed-derivation hash so that every
// stochastic quantity in the project is a pure function of (master seed, tags).
inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline uint64_t hash_combine(uint64_t a, uint64_t b) { return mix64(a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2))); }

/// Deterministic stream RNG. Bit-for-bit reproducible for a given seed on any
/// platform; draws are generated in double and cast at the call site.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(mix64(seed ^ 0x5851f42d4c957f2dull)) {}

  /// Independent child stream tagged by one or more integers.
  Rng derive(uint64_t tag) const { return Rng(hash_combine(state_, tag)); }
  Rng derive(uint64_t a, uint64_t b) const { return Rng(hash_combine(hash_combine(state_, a), b)); }
  Rng derive(uint64_t a, uint64_t b, uint64_t c) const {
    return Rng(hash_combine(hash_combine(hash_combine(state_, a), b), c));
  }

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  /// Uniform in [0,1) with 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo,hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0,n).
  int64_t below(int64_t n) { return static_cast<int64_t>(next_u64() % static_cast<uint64_t>(n)); }

  /// Standard normal via Box-Muller (cos branch; the sin branch is dropped
  /// for single draws and used when filling arrays).
  double normal() {
    double u1, u2;
    next_pair(u1, u2);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  template <typename Scalar>
  void fill_normal(Tensor<Scalar>& t, double stddev = 1.0, double mean = 0.0) {
    const int64_t n = t.numel();
    for (int64_t i = 0; i + 1 < n; i += 2) {
      double u1, u2;
      next_pair(u1, u2);
      const double r = std::sqrt(-2.0 * std::log(u1));
      t.data[i] = static_cast<Scalar>(mean + stddev * r * std::cos(6.283185307179586477 * u2));
      t.data[i + 1] = static_cast<Scalar>(mean + stddev * r * std::sin(6.283185307179586477 * u2));
    }
    if (n % 2) t.data[n - 1] = static_cast<Scalar>(mean + stddev * normal());
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int64_t i = static_cast<int64_t>(v.size()) - 1; i > 0; --i) {
      std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(below(i + 1))]);
    }
  }

  uint64_t state() const { return state_; }

 private:
  void next_pair(double& u1, double& u2) {
    // u1 in (0,1] so log() is finite
    u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  uint64_t state_;
};

}  // namespace nsg

#endif

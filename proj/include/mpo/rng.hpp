// rng.hpp - deterministic random streams with named derivation
//
// All randomness in the library flows from a single top-level seed through
// derive_seed(component, index), so results are independent of worker
// scheduling and reproducible bit-for-bit.
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <vector>

namespace mpo {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Derives an independent stream seed from (base, component name, index).
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view component,
                                 std::uint64_t index = 0) {
  std::uint64_t h = fnv1a64(component);
  std::uint64_t state = base ^ (h + 0x9e3779b97f4a7c15ull * (index + 1));
  splitmix64(state);
  return splitmix64(state);
}

// Small counter-based generator (splitmix64 core). Deterministic across
// platforms, unlike the std:: distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  Rng child(std::string_view component, std::uint64_t index = 0) const {
    return Rng(derive_seed(state_, component, index));
  }

  std::uint64_t next_u64() { return splitmix64(state_); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), n > 0.
  std::uint64_t uniform_int(std::uint64_t n) {
    // Multiply-shift; bias is < 2^-64 per draw, irrelevant at desk scale.
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Standard normal via Box-Muller.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

}  // namespace mpo

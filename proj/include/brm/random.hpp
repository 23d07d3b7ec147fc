#pragma once

// Seeded randomness whose output does not depend on the standard library
// implementation: only the mt19937_64 engine itself is used, distributions
// are computed here.

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace brm {

class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : gen_(seed) {}

  void seed(std::uint64_t s) { gen_.seed(s); }
  std::uint64_t next() { return gen_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::size_t below(std::size_t n) { return n == 0 ? 0 : static_cast<std::size_t>(gen_() % n); }

  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

  // Derives an independent stream, e.g. one per epoch or component.
  Rng fork(std::uint64_t salt) { return Rng(gen_() ^ (salt * 0x9E3779B97F4A7C15ULL)); }

 private:
  std::mt19937_64 gen_;
};

}  // namespace brm

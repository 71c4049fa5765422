#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace fused {

// Splittable counter-based generator (SplitMix64 core). Cheap to copy, never
// global: every component receives its own value, and independent streams are
// obtained with derive() rather than by sharing state. All floating-point
// draws are built from the integer stream directly, so a seed reproduces the
// same sequence on any platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed), seed_(seed) {}

  std::uint64_t next_u64();

  // Uniform in [0, 1), 53-bit resolution.
  double next_double();

  // Uniform in [lo, hi).
  double uniform(double lo, double hi);

  // Standard normal via Box-Muller.
  double normal();

  // Uniform integer in [0, bound), bound >= 1. Rejection sampled, no modulo
  // bias.
  std::uint64_t next_index(std::uint64_t bound);

  // Gamma(shape, 1), shape > 0. Marsaglia-Tsang squeeze.
  double gamma(double shape);

  // Symmetric Dirichlet(alpha) sample of length n.
  std::vector<double> dirichlet(double alpha, std::size_t n);

  // Bernoulli(p) draw.
  bool bernoulli(double p) { return next_double() < p; }

  // Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[next_index(i)]);
    }
  }

  // Child stream keyed by (seed, role, a, b). Documented derivation: FNV-1a
  // over the parent seed, the role bytes and the two tags.
  Rng derive(std::string_view role, std::uint64_t a = 0, std::uint64_t b = 0) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t state_;
  std::uint64_t seed_;
};

}  // namespace fused

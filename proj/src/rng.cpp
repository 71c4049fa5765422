#include "fused/rng.hpp"

#include <cmath>
#include <numbers>

#include "fused/errors.hpp"

namespace fused {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::uint64_t h, const void* bytes, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace

std::uint64_t Rng::next_u64() {
  state_ += kGolden;
  return mix64(state_);
}

double Rng::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
  return lo + (hi - lo) * next_double();
}

double Rng::normal() {
  // Box-Muller; u1 shifted into (0, 1] so the log is finite.
  const double u1 = 1.0 - next_double();
  const double u2 = next_double();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::next_index(std::uint64_t bound) {
  if (bound == 0) throw DomainError("Rng::next_index: bound must be positive");
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % bound;
}

double Rng::gamma(double shape) {
  if (!(shape > 0.0)) throw DomainError("Rng::gamma: shape must be positive");
  if (shape < 1.0) {
    const double u = 1.0 - next_double();
    return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x;
    double v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = 1.0 - next_double();
    if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) {
      return d * v;
    }
  }
}

std::vector<double> Rng::dirichlet(double alpha, std::size_t n) {
  if (!(alpha > 0.0)) throw DomainError("Rng::dirichlet: alpha must be positive");
  std::vector<double> out(n);
  double total = 0.0;
  for (auto& x : out) {
    x = gamma(alpha);
    total += x;
  }
  if (total <= 0.0) {
    // All gammas underflowed (tiny alpha); fall back to a single winner.
    out.assign(n, 0.0);
    out[next_index(n)] = 1.0;
    return out;
  }
  for (auto& x : out) x /= total;
  return out;
}

Rng Rng::derive(std::string_view role, std::uint64_t a, std::uint64_t b) const {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  h = fnv1a(h, &seed_, sizeof(seed_));
  h = fnv1a(h, role.data(), role.size());
  h = fnv1a(h, &a, sizeof(a));
  h = fnv1a(h, &b, sizeof(b));
  // One mix step decorrelates nearby tags.
  return Rng(mix64(h));
}

}  // namespace fused

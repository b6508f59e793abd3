#include "metaexp/rng.hpp"

#include <cmath>

#include "metaexp/errors.hpp"

namespace metaexp {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::uint64_t mix_key(std::uint64_t seed, std::initializer_list<std::uint64_t> words) {
  std::uint64_t h = mix64(seed);
  for (std::uint64_t w : words) h = mix64(h ^ mix64(w));
  return h;
}

std::uint64_t Rng::below(std::uint64_t n) {
  check(n > 0, "Rng::below: n must be positive");
  // rejection sampling over the largest multiple of n
  std::uint64_t limit = ~0ull - (~0ull % n + 1) % n;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x > limit);
  return x % n;
}

double Rng::normal() {
  double u1 = uniform01();
  double u2 = uniform01();
  while (u1 <= 0.0) u1 = uniform01();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

int Rng::categorical(std::span<const double> probs) {
  check(!probs.empty(), "Rng::categorical: empty distribution");
  double total = 0.0;
  for (double p : probs) {
    check(p >= 0.0, "Rng::categorical: negative probability");
    total += p;
  }
  check(total > 0.0, "Rng::categorical: zero-mass distribution");
  double u = uniform01() * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;  // u landed on accumulated rounding
}

}  // namespace metaexp

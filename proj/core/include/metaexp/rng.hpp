#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>

namespace metaexp {

// splitmix64; used to derive independent stream seeds from structured keys.
std::uint64_t mix64(std::uint64_t x);
std::uint64_t mix_key(std::uint64_t seed, std::initializer_list<std::uint64_t> words);

// Deterministic RNG.  All sampling helpers are implemented by hand on top of
// the raw mt19937_64 stream because the std distributions are
// implementation-defined and would break bit-level reproducibility.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(mix64(seed)) {}
  static Rng from_key(std::uint64_t seed, std::initializer_list<std::uint64_t> words) {
    return Rng(mix_key(seed, words));
  }

  std::uint64_t next_u64() { return gen_(); }

  // uniform in [0, n) without modulo bias
  std::uint64_t below(std::uint64_t n);

  // uniform in [0, 1) with 53 bits of mantissa
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // standard normal (Box-Muller, one draw per call; cache discarded for
  // stream simplicity)
  double normal();

  // index sampled proportionally to probs (probs need not be normalised)
  int categorical(std::span<const double> probs);

  // in-place Fisher-Yates
  template <typename T>
  void shuffle(std::span<T> xs) {
    for (std::size_t i = xs.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(xs[i - 1], xs[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace metaexp

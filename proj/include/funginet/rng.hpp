#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace funginet {

// Deterministic generator with distribution code pinned by this project, so
// identical seeds reproduce identical streams everywhere. The core sequence
// is std::mt19937_64, itself pinned by the standard; the stdlib
// <random> distributions are not used because their output is
// implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, n); n > 0. Multiply-shift mapping; bias is below n/2^64.
  std::size_t below(std::size_t n);

  // Uniform in [0, 1) with 53-bit resolution.
  double real01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + real01() * (hi - lo); }

  bool bernoulli(double p) { return real01() < p; }

  // Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// Fixed documented mix for deriving independent stream seeds, e.g. per
// repeat, per epoch, or per image: splitmix64 absorption of each word.
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a);
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b);
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b, std::uint64_t c);

// Stream tags for derive_seed so distinct uses never collide.
namespace stream {
inline constexpr std::uint64_t model_init = 0xA1;
inline constexpr std::uint64_t shuffle = 0xA2;
inline constexpr std::uint64_t augment = 0xA3;
inline constexpr std::uint64_t dropout = 0xA4;
inline constexpr std::uint64_t repeat = 0xA5;
inline constexpr std::uint64_t split = 0xA6;
}  // namespace stream

}  // namespace funginet

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace rga {

/// Fixed substream ids. Each consumer draws from its own stream so adding a
/// consumer never shifts another's sequence.
enum class Stream : std::uint64_t {
  kInit = 1,
  kData = 2,
  kSampler = 3,
  kAugment = 4,
  kEvalData = 5,
  kGradCheck = 6,
  kTest = 7,
};

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Splittable generator over mt19937_64. Distribution transforms are written
/// out here rather than using <random> distributions, whose output is
/// implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : key_(splitmix64(seed)), engine_(key_) {}

  Rng split(std::uint64_t stream) const { return Rng(key_, stream); }
  Rng split(Stream stream) const { return split(static_cast<std::uint64_t>(stream)); }
  Rng split(std::string_view name) const { return split(fnv1a(name)); }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  std::int64_t range(std::int64_t lo, std::int64_t hi_inclusive) {
    return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi_inclusive - lo + 1)));
  }

  bool bernoulli(double p) { return uniform() < p; }

  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  template <class It>
  void shuffle(It first, It last) {
    const auto n = last - first;
    for (auto i = n - 1; i > 0; --i) {
      const auto j = static_cast<decltype(i)>(below(static_cast<std::uint64_t>(i + 1)));
      std::swap(first[i], first[j]);
    }
  }

 private:
  Rng(std::uint64_t parent, std::uint64_t stream)
      : key_(splitmix64(parent ^ splitmix64(stream + 0x632BE59BD9B4E019ULL))), engine_(key_) {}

  std::uint64_t key_;
  std::mt19937_64 engine_;
};

}  // namespace rga

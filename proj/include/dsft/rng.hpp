#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace dsft {

/// Counter-based random stream.
///
/// A stream is identified by a 64-bit key; the n-th draw is a pure function of
/// (key, n). Child streams are derived from the parent key and a tag, so the
/// draws of one consumer never shift the draws of another. This is what lets
/// batch items be masked in any order (or concurrently) with identical results.
class CounterRng {
 public:
  CounterRng() = default;
  explicit CounterRng(std::uint64_t seed) : key_(mix(seed ^ 0x6a09e667f3bcc909ULL)) {}

  static CounterRng from_key(std::uint64_t key, std::uint64_t counter = 0) {
    CounterRng r;
    r.key_ = key;
    r.counter_ = counter;
    return r;
  }

  /// Derives an independent child stream. Does not advance this stream.
  CounterRng split(std::string_view tag) const;
  CounterRng split(std::uint64_t index) const;

  std::uint64_t next_u64() { return mix(key_ + 0x9e3779b97f4a7c15ULL * ++counter_); }

  /// Uniform double on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer on [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  /// Standard normal via Box-Muller (one value per call; the pair's twin is discarded).
  double normal();

  /// k distinct elements drawn uniformly without replacement, in draw order.
  std::vector<int> sample_without_replacement(const std::vector<int>& pool, std::size_t k);

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace dsft

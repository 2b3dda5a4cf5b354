#include "dsft/rng.hpp"

#include <cmath>
#include <numbers>

namespace dsft {

namespace {

std::uint64_t tag_hash(std::string_view tag) {
  // FNV-1a; only used to turn stream names into key material.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

CounterRng CounterRng::split(std::string_view tag) const {
  return from_key(mix(key_ ^ mix(tag_hash(tag) + 0x243f6a8885a308d3ULL)));
}

CounterRng CounterRng::split(std::uint64_t index) const {
  return from_key(mix(key_ + mix(index ^ 0x13198a2e03707344ULL)));
}

std::uint64_t CounterRng::below(std::uint64_t n) {
  // Rejection sampling keeps the result exactly uniform.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

double CounterRng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::vector<int> CounterRng::sample_without_replacement(const std::vector<int>& pool, std::size_t k) {
  std::vector<int> scratch(pool);
  if (k > scratch.size()) k = scratch.size();
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(below(scratch.size() - i));
    std::swap(scratch[i], scratch[j]);
  }
  scratch.resize(k);
  return scratch;
}

}  // namespace dsft

#include "pdt/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace pdt {
namespace {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;

// SplitMix64 finalizer (Steele, Lea & Flood 2014). Bijective on 64-bit words.
std::uint64_t mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// FNV-1a over the label bytes, used to key substreams.
std::uint64_t hash_label(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace

Rng Rng::stream(std::uint64_t master_seed, std::string_view purpose) {
  // Two mix rounds decorrelate (seed, label) pairs that differ in one bit.
  return Rng(mix(mix(master_seed + kGolden) ^ hash_label(purpose)));
}

std::uint64_t Rng::next_u64() {
  ++counter_;
  return mix(seed_ + counter_ * kGolden);
}

double Rng::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::next_below(std::uint64_t n) {
  if (n == 0) {
    throw std::invalid_argument("Rng::next_below: n must be positive");
  }
  // Rejection sampling on the top bits: unbiased for every n.
  const std::uint64_t limit = n * (UINT64_MAX / n);
  for (;;) {
    const std::uint64_t v = next_u64();
    if (v < limit) {
      return v % n;
    }
  }
}

double Rng::next_gaussian() {
  // Box-Muller, cosine branch only. The sine mate is discarded so the
  // stream position stays a pure function of the call count.
  const double u1 = next_double();
  const double u2 = next_double();
  const double r = std::sqrt(-2.0 * std::log(1.0 - u1));  // 1-u1 avoids log(0)
  return r * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace pdt

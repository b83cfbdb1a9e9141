#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace pdt {

// Deterministic counter-based pseudo-random generator.
//
// The generator is a SplitMix64 keyed by (seed, counter): draw i of a stream
// with seed s is a pure function mix(s + (i + 1) * GOLDEN), so a stream's
// state is fully described by its seed and the number of values drawn so far.
// That pair is what checkpoints record, which makes every run replayable from
// its seed alone, independent of platform or standard library version
// (std::mt19937 distributions are not bit-portable across implementations,
// so none are used anywhere in this library).
//
// Independent substreams are derived by hashing a purpose label into the
// master seed (see Rng::stream). Labels used by the library:
//
//   "init/encoder", "init/decoder", "init/disc_rf", "init/disc_da"
//       weight initialization, one stream per network
//   "data/split"      product-level train/val/test assignment
//   "train/select"    per-item target selection during adversarial training
//   "train/negative"  negative (mismatched) target draws
//   "train/shuffle"   per-epoch ordering of the training set
//   "synth"           synthetic dataset generation
class Rng {
 public:
  Rng() : Rng(0) {}
  explicit Rng(std::uint64_t seed, std::uint64_t counter = 0)
      : seed_(seed), counter_(counter) {}

  // Derives the substream of `master_seed` identified by `purpose`.
  // Distinct labels give statistically independent streams; the same
  // (master_seed, purpose) pair always gives the same stream.
  static Rng stream(std::uint64_t master_seed, std::string_view purpose);

  // Uniform over all 64-bit values.
  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53 random mantissa bits.
  double next_double();

  // Uniform over {0, 1, ..., n - 1}. Throws std::invalid_argument if n == 0.
  std::uint64_t next_below(std::uint64_t n);

  // Standard normal via Box-Muller. Each call consumes exactly two uniform
  // draws and no state is cached between calls, so (seed, counter) remains a
  // complete description of the stream.
  double next_gaussian();

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace pdt

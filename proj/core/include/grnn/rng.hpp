#pragma once

#include <cstdint>

namespace grnn {

/// Counter-based random stream.
///
/// Each draw hashes (key, counter) through the SplitMix64 finalizer, so the
/// stream is a pure function of the seed and the number of draws taken.
/// `split` derives a child key from the parent key only, which makes
/// substreams independent of how many values the parent has produced.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform();
  /// Standard normal via Box-Muller; caches the second variate.
  double normal();
  /// Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound);

  [[nodiscard]] Rng split(std::uint64_t stream) const;

  [[nodiscard]] std::uint64_t key() const { return key_; }
  [[nodiscard]] std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

std::uint64_t mix64(std::uint64_t z);

}  // namespace grnn

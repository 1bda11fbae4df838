#pragma once

#include <cstdint>

namespace catgcn {

// SplitMix64 output finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return z;
}

// Counter-based SplitMix64 stream.
//
// The i-th draw (i = 0, 1, ...) of a stream with key k is
//   mix64(k + (i + 1) * 0x9E3779B97F4A7C15)
// which is exactly the SplitMix64 sequence seeded with k. Child streams are
// keyed by mix64(mix64(k) ^ stream_id), so a stream can be split into
// independent, addressable sub-streams (per node, per tensor, per epoch)
// without consuming draws from the parent.
class CounterRng {
 public:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

  explicit constexpr CounterRng(std::uint64_t key) noexcept : key_(key) {}

  constexpr CounterRng split(std::uint64_t stream_id) const noexcept {
    return CounterRng(mix64(mix64(key_) ^ stream_id));
  }

  constexpr std::uint64_t next() noexcept { return mix64(key_ + (++counter_) * kGamma); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, bound); rejection sampling on the top of the
  // 64-bit range keeps it exactly unbiased. bound must be positive.
  std::uint64_t below(std::uint64_t bound) noexcept;

  bool bernoulli(double p) noexcept { return uniform() < p; }

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

// Stream identifiers used across the library.
namespace streams {
inline constexpr std::uint64_t kSplit = 1;
inline constexpr std::uint64_t kFeatureSample = 2;
inline constexpr std::uint64_t kInit = 3;
inline constexpr std::uint64_t kDropout = 4;
inline constexpr std::uint64_t kSynthetic = 5;
inline constexpr std::uint64_t kResample = 6;
}  // namespace streams

}  // namespace catgcn

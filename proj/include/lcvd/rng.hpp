#pragma once

#include <array>
#include <cstdint>

namespace lcvd {

// SplitMix64 step: golden-ratio increment followed by the variance-mixing
// finalizer. Bijective on 64-bit words; used to whiten seeds and derive
// substream identifiers.
std::uint64_t mix64(std::uint64_t x);

// One Philox4x32-10 block: 4x32 bits of output from a 128-bit counter and a
// 64-bit key. Pure function, exposed for known-answer tests.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key);

// Deterministic counter-based generator, algorithm "philox4x32-10/v1".
//
// Every output is a pure function of (seed, stream, draw index), so sequences
// are identical across platforms, runs, and compilers. The 128-bit Philox
// counter is split as (64-bit block index, 64-bit stream id): generators with
// distinct stream ids occupy disjoint counter ranges and never overlap.
// Instances are cheap value types; they are not shared across threads —
// concurrent users derive substreams instead.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream) {}

  std::uint32_t next_u32();
  std::uint64_t next_u64();

  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  // Uniform on [low, high); requires low < high.
  double uniform(double low, double high);
  // Unbiased integer on [0, n); requires n >= 1. Lemire rejection method.
  std::uint64_t uniform_int(std::uint64_t n);
  // Standard normal via Box-Muller; draws come in deterministic pairs.
  double normal();
  double normal(double mean, double stddev);

  // Child generator on an independent stream. For a fixed parent, distinct
  // ids map to distinct child streams (the derivation is bijective in id).
  Rng substream(std::uint64_t id) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  static constexpr const char* algorithm() { return "philox4x32-10/v1"; }

 private:
  void refill();

  std::uint64_t seed_ = 0;
  std::uint64_t stream_ = 0;
  std::uint64_t block_ = 0;                // counter: one step per 128-bit block
  std::array<std::uint32_t, 4> buf_{};     // current block's output words
  int pos_ = 4;                            // words of buf_ already consumed
  bool has_cached_normal_ = false;
  double cached_normal_ = 0.0;
};

}  // namespace lcvd

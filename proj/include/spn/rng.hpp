#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <span>

namespace spn {

// Counter-based Philox4x32-10 generator.
//
// A generator is identified by (key, stream). The 64-bit stream id occupies
// the upper two counter words and the block counter the lower two, so two
// generators with different stream ids never visit the same counter block.
// Satisfies UniformRandomBitGenerator with 64-bit output.
class Philox {
 public:
  using result_type = std::uint64_t;

  Philox(std::uint64_t key, std::uint64_t stream) : key_(key), stream_(stream) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  // Standard normal draw (Box-Muller, one value per call).
  double normal();

  std::uint64_t key() const { return key_; }
  std::uint64_t stream() const { return stream_; }
  std::uint64_t blocks_used() const { return counter_; }

 private:
  void refill();

  std::uint64_t key_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> block_{};
  int next_word_ = 4;
};

// Stream-id tags. Ids are packed as tag (8 bits) | a (24 bits) | b (32 bits)
// so that every (tag, a, b) triple maps to a distinct stream.
enum class StreamTag : std::uint8_t {
  kDynamics = 1,
  kActions = 2,
  kShuffle = 3,
  kInit = 4,
  kTest = 5,
};

std::uint64_t make_stream_id(StreamTag tag, std::uint32_t a, std::uint32_t b);

// Inverse-CDF draw from a finite pmf. Consumes exactly one uniform.
int sample_pmf(std::span<const double> pmf, Philox& rng);

// Sum of n independent Bernoulli(p) draws. Consumes n uniforms when
// 0 < p < 1 and none otherwise.
int sample_binomial(int n, double p, Philox& rng);

}  // namespace spn

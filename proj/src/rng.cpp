#include "spn/rng.hpp"

#include <cmath>
#include <numbers>

namespace spn {
namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t prod = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(prod >> 32);
  lo = static_cast<std::uint32_t>(prod);
}

}  // namespace

void Philox::refill() {
  std::array<std::uint32_t, 4> ctr = {static_cast<std::uint32_t>(counter_), static_cast<std::uint32_t>(counter_ >> 32),
                                      static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
  std::uint32_t k0 = static_cast<std::uint32_t>(key_);
  std::uint32_t k1 = static_cast<std::uint32_t>(key_ >> 32);
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, ctr[0], hi0, lo0);
    mulhilo(kMul1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ k0, lo1, hi0 ^ ctr[3] ^ k1, lo0};
    k0 += kWeyl0;
    k1 += kWeyl1;
  }
  block_ = ctr;
  ++counter_;
  next_word_ = 0;
}

Philox::result_type Philox::operator()() {
  if (next_word_ > 2) refill();
  const std::uint64_t lo = block_[next_word_];
  const std::uint64_t hi = block_[next_word_ + 1];
  next_word_ += 2;
  return (hi << 32) | lo;
}

double Philox::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t make_stream_id(StreamTag tag, std::uint32_t a, std::uint32_t b) {
  return (static_cast<std::uint64_t>(tag) << 56) | (static_cast<std::uint64_t>(a & 0xFFFFFFu) << 32) | b;
}

int sample_pmf(std::span<const double> pmf, Philox& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  int last_positive = 0;
  for (std::size_t i = 0; i < pmf.size(); ++i) {
    if (pmf[i] <= 0.0) continue;
    last_positive = static_cast<int>(i);
    acc += pmf[i];
    if (u < acc) return static_cast<int>(i);
  }
  // Rounding left u above the accumulated mass.
  return last_positive;
}

int sample_binomial(int n, double p, Philox& rng) {
  if (n <= 0 || p <= 0.0) return 0;
  if (p >= 1.0) return n;
  int hits = 0;
  for (int trial = 0; trial < n; ++trial) {
    if (rng.uniform() < p) ++hits;
  }
  return hits;
}

}  // namespace spn

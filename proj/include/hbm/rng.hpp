#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>

#include <boost/random/exponential_distribution.hpp>
#include <boost/random/normal_distribution.hpp>

namespace hbm {

/// Philox4x32-10 block function (Salmon et al., SC'11).
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter block(Counter ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
      }
      const std::uint64_t p0 = std::uint64_t(kMul0) * ctr[0];
      const std::uint64_t p1 = std::uint64_t(kMul1) * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0],
             static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1],
             static_cast<std::uint32_t>(p0)};
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
};

/// Purpose tags kept in the top byte of a stream id so that the clock, the
/// path and the oracle of one path index never share draws.
enum class StreamPurpose : std::uint64_t {
  kGeneric = 0,
  kClock = 1,
  kPath = 2,
  kEuler = 3,
  kValidation = 4,
};

inline std::uint64_t make_stream_id(StreamPurpose purpose, std::uint64_t index) {
  return (static_cast<std::uint64_t>(purpose) << 56) | (index & ((1ull << 56) - 1));
}

/// Counter-based random stream identified by (seed, stream_id).
///
/// The seed is the Philox key; the stream id fills the upper half of the
/// counter and the draw index the lower half, so streams never overlap and
/// any stream can be built directly without advancing another one.
/// Satisfies UniformRandomBitGenerator with 32-bit output.
class RngStream {
 public:
  using result_type = std::uint32_t;

  RngStream(std::uint64_t seed, std::uint64_t stream_id)
      : seed_(seed), stream_id_(stream_id) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    if (pos_ == 4) {
      refill();
    }
    return buffer_[pos_++];
  }

  /// Uniform in (0, 1), 53 bits.
  double uniform() {
    const std::uint64_t hi = (*this)() >> 5;
    const std::uint64_t lo = (*this)() >> 6;
    return (static_cast<double>(hi * 67108864ull + lo) + 0.5) * 0x1.0p-53;
  }

  double normal() { return normal_(*this); }

  double exponential(double rate) {
    return boost::random::exponential_distribution<double>(rate)(*this);
  }

 private:
  void refill() {
    const Philox4x32::Counter ctr = {
        static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
        static_cast<std::uint32_t>(stream_id_),
        static_cast<std::uint32_t>(stream_id_ >> 32)};
    const Philox4x32::Key key = {static_cast<std::uint32_t>(seed_),
                                 static_cast<std::uint32_t>(seed_ >> 32)};
    buffer_ = Philox4x32::block(ctr, key);
    ++block_;
    pos_ = 0;
  }

  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t block_ = 0;
  Philox4x32::Counter buffer_{};
  int pos_ = 4;
  boost::random::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace hbm

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>

#include "maxup/tensor.hpp"

namespace maxup {

/// Counter-based random stream (Philox4x32-10). The key is the 64-bit seed;
/// the 128-bit counter is (block counter, stream id). Streams with distinct
/// (seed, stream_id) pairs are independent and any stream can be replayed.
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream(std::uint64_t seed, std::uint64_t stream_id) noexcept
      : seed_(seed), stream_id_(stream_id) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }
  /// Number of 128-bit blocks consumed so far.
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64() noexcept;
  /// Uniform in the open interval (0, 1), 53 bits.
  double uniform() noexcept;
  double normal() noexcept;
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t uniform_index(std::uint64_t n) noexcept;

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }
  result_type operator()() noexcept { return next_u64(); }

  /// One Philox4x32-10 block for an explicit key and counter.
  static std::array<std::uint32_t, 4> philox(std::array<std::uint32_t, 2> key,
                                             std::array<std::uint32_t, 4> ctr) noexcept;

 private:
  void refill() noexcept;

  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> block_{};
  int words_left_ = 0;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

/// Purposes that partition the stream-id space.
enum class StreamPurpose : std::uint64_t {
  data = 1,
  init = 2,
  shuffle = 3,
  augment = 4,
  verify = 5,
  bench = 6,
  test = 15,
};

/// Deterministic stream id from a purpose tag and two indices (a < 2^24, b < 2^32).
std::uint64_t stream_id(StreamPurpose purpose, std::uint64_t a, std::uint64_t b = 0) noexcept;

inline RngStream derive_stream(std::uint64_t seed, StreamPurpose purpose, std::uint64_t a,
                               std::uint64_t b = 0) noexcept {
  return RngStream(seed, stream_id(purpose, a, b));
}

/// n i.i.d. standard normal draws, shape [n].
Tensor sample_standard_normal(RngStream& rng, std::size_t n);

/// splitmix64 finalizer, used to fold values into seeds.
std::uint64_t mix64(std::uint64_t x) noexcept;

}  // namespace maxup

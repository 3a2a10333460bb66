#include "maxup/rng.hpp"

#include <cmath>
#include <numbers>

namespace maxup {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

}  // namespace

std::array<std::uint32_t, 4> RngStream::philox(std::array<std::uint32_t, 2> key,
                                               std::array<std::uint32_t, 4> ctr) noexcept {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, ctr[0], hi0, lo0);
    mulhilo(kMul1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return ctr;
}

void RngStream::refill() noexcept {
  const std::array<std::uint32_t, 2> key{static_cast<std::uint32_t>(seed_),
                                         static_cast<std::uint32_t>(seed_ >> 32)};
  const std::array<std::uint32_t, 4> ctr{
      static_cast<std::uint32_t>(counter_), static_cast<std::uint32_t>(counter_ >> 32),
      static_cast<std::uint32_t>(stream_id_), static_cast<std::uint32_t>(stream_id_ >> 32)};
  block_ = philox(key, ctr);
  ++counter_;
  words_left_ = 4;
}

std::uint64_t RngStream::next_u64() noexcept {
  if (words_left_ < 2) refill();
  const std::uint64_t hi = block_[4 - words_left_];
  const std::uint64_t lo = block_[5 - words_left_];
  words_left_ -= 2;
  return (hi << 32) | lo;
}

double RngStream::uniform() noexcept {
  // (k + 0.5) / 2^53 keeps the result strictly inside (0, 1).
  const std::uint64_t k = next_u64() >> 11;
  return (static_cast<double>(k) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() noexcept {
  if (has_spare_) {
    has_spare_ = false;
    return spare_normal_;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_normal_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::uint64_t RngStream::uniform_index(std::uint64_t n) noexcept {
  // Rejection on the top of the range removes modulo bias.
  const std::uint64_t limit = max() - (max() % n + 1) % n;
  std::uint64_t v;
  do {
    v = next_u64();
  } while (v > limit);
  return v % n;
}

std::uint64_t stream_id(StreamPurpose purpose, std::uint64_t a, std::uint64_t b) noexcept {
  return (static_cast<std::uint64_t>(purpose) << 56) | ((a & 0xFFFFFFull) << 32) |
         (b & 0xFFFFFFFFull);
}

Tensor sample_standard_normal(RngStream& rng, std::size_t n) {
  Tensor out(Shape{n});
  for (std::size_t i = 0; i < n; ++i) out[i] = rng.normal();
  return out;
}

std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace maxup

#include "maxup/stats.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <string>
#include <thread>

namespace maxup {

double pairwise_sum(std::span<const double> values) {
  constexpr std::size_t leaf = 32;
  if (values.size() <= leaf) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

void RunningMoments::add(double x) noexcept {
  ++count_;
  const double delta = x - mean_;
  mean_ += delta / static_cast<double>(count_);
  m2_ += delta * (x - mean_);
}

void RunningMoments::merge(const RunningMoments& other) noexcept {
  if (other.count_ == 0) return;
  if (count_ == 0) {
    *this = other;
    return;
  }
  const double na = static_cast<double>(count_);
  const double nb = static_cast<double>(other.count_);
  const double n = na + nb;
  const double delta = other.mean_ - mean_;
  mean_ += delta * nb / n;
  m2_ += other.m2_ + delta * delta * na * nb / n;
  count_ += other.count_;
}

double RunningMoments::variance() const noexcept {
  return count_ < 2 ? 0.0 : m2_ / static_cast<double>(count_ - 1);
}

double RunningMoments::standard_error() const noexcept {
  return count_ == 0 ? 0.0 : std::sqrt(variance() / static_cast<double>(count_));
}

unsigned worker_count() {
  if (const char* env = std::getenv("MAXUP_LAB_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<unsigned>(v);
    } catch (...) {
    }
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1u : hw;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(worker_count(), n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n && !failed; i = next++) {
        try {
          body(i);
        } catch (...) {
          if (!failed.exchange(true)) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

std::vector<Estimate> monte_carlo(std::uint64_t samples, std::size_t outputs, std::uint64_t seed,
                                  std::uint64_t stream_base, const McKernel& kernel) {
  const std::uint64_t blocks = (samples + kMcBlockSize - 1) / kMcBlockSize;
  std::vector<std::vector<RunningMoments>> per_block(blocks,
                                                     std::vector<RunningMoments>(outputs));
  parallel_for(blocks, [&](std::size_t b) {
    RngStream rng(seed, stream_base + b);
    std::vector<double> out(outputs);
    const std::uint64_t begin = b * kMcBlockSize;
    const std::uint64_t end = std::min(samples, begin + kMcBlockSize);
    auto& moments = per_block[b];
    for (std::uint64_t s = begin; s < end; ++s) {
      kernel(rng, out);
      for (std::size_t k = 0; k < outputs; ++k) moments[k].add(out[k]);
    }
  });
  // Pairwise merge tree over blocks, fixed order.
  for (std::size_t stride = 1; stride < blocks; stride *= 2) {
    for (std::size_t b = 0; b + stride < blocks; b += 2 * stride) {
      for (std::size_t k = 0; k < outputs; ++k) per_block[b][k].merge(per_block[b + stride][k]);
    }
  }
  std::vector<Estimate> result(outputs);
  if (blocks == 0) return result;
  for (std::size_t k = 0; k < outputs; ++k) {
    const auto& m = per_block[0][k];
    result[k] = {m.mean(), m.standard_error(), m.count()};
  }
  return result;
}

}  // namespace maxup

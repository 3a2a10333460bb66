#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "maxup/rng.hpp"

namespace maxup {

/// Pairwise (cascade) summation; error grows as O(log n).
double pairwise_sum(std::span<const double> values);

/// Mean/variance accumulator with Chan's merge rule.
class RunningMoments {
 public:
  void add(double x) noexcept;
  void merge(const RunningMoments& other) noexcept;

  std::uint64_t count() const noexcept { return count_; }
  double mean() const noexcept { return mean_; }
  /// Unbiased sample variance; zero with fewer than two samples.
  double variance() const noexcept;
  double standard_error() const noexcept;

 private:
  std::uint64_t count_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

struct Estimate {
  double mean = 0.0;
  double standard_error = 0.0;
  std::uint64_t samples = 0;
};

/// Worker count: MAXUP_LAB_THREADS when set and positive, else hardware concurrency.
unsigned worker_count();

/// Runs body(i) for i in [0, n) over the worker pool. Work items must be independent.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

/// Per-sample kernel: draws from the stream and writes one value per output.
using McKernel = std::function<void(RngStream&, std::span<double>)>;

inline constexpr std::uint64_t kMcBlockSize = 1u << 14;

/// Monte-Carlo means of `outputs` jointly sampled quantities. Samples are split
/// into fixed blocks, block b drawing from stream (seed, stream_base + b), and
/// block moments are merged in block order, so the result depends only on
/// (samples, seed, stream_base) and never on the thread count.
std::vector<Estimate> monte_carlo(std::uint64_t samples, std::size_t outputs, std::uint64_t seed,
                                  std::uint64_t stream_base, const McKernel& kernel);

}  // namespace maxup

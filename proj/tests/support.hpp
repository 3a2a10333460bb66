#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "maxup/rng.hpp"

namespace testing_support {

// Central differences of f at x with step h.
inline std::vector<double> fd_gradient(const std::function<double(std::span<const double>)>& f,
                                       std::span<const double> x, double h = 1e-4) {
  std::vector<double> xp(x.begin(), x.end()), g(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    xp[j] = x[j] + h;
    const double up = f(xp);
    xp[j] = x[j] - h;
    const double down = f(xp);
    xp[j] = x[j];
    g[j] = (up - down) / (2.0 * h);
  }
  return g;
}

// max_j |a_j - b_j| / max(1, max_j |b_j|)
inline double rel_err(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0, scale = 1.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    diff = std::max(diff, std::abs(a[j] - b[j]));
    scale = std::max(scale, std::abs(b[j]));
  }
  return diff / scale;
}

inline maxup::RngStream test_rng(std::uint64_t a, std::uint64_t b = 0) {
  return maxup::RngStream(12345, maxup::stream_id(maxup::StreamPurpose::test, a, b));
}

}  // namespace testing_support

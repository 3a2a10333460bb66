#include "maxup/special.hpp"

#include <cmath>
#include <numbers>

namespace maxup {

double gaussian_cdf(double x) noexcept {
  // erfc keeps full relative precision in the lower tail, where 1 + erf would cancel.
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

double gaussian_pdf(double x) noexcept {
  constexpr double inv_sqrt_2pi = 0.3989422804014326779399460599343819;
  return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

}  // namespace maxup

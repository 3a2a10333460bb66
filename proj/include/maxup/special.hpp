#pragma once

namespace maxup {

/// Standard normal cdf. Total on finite input; saturates to 0/1 in the tails.
double gaussian_cdf(double x) noexcept;

/// Standard normal density exp(-x^2/2)/sqrt(2 pi).
double gaussian_pdf(double x) noexcept;

}  // namespace maxup

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <numbers>
#include <set>

#include "maxup/error.hpp"
#include "maxup/quadrature.hpp"
#include "maxup/rng.hpp"
#include "maxup/special.hpp"
#include "maxup/stats.hpp"
#include "maxup/tensor.hpp"
#include "support.hpp"

using namespace maxup;

TEST(Tensor, ShapeAndData) {
  const Tensor m = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(m.size(), 6u);
  EXPECT_EQ(m.rank(), 2u);
  EXPECT_EQ(m.at(1, 2), 6.0);
  EXPECT_EQ(shape_string(m.shape()), "[2, 3]");
  EXPECT_EQ(Tensor::scalar(2.5).item(), 2.5);
  EXPECT_EQ(Tensor::scalar(2.5).rank(), 0u);
  EXPECT_THROW(Tensor::matrix(2, 2, {1, 2, 3}), ShapeMismatch);
  EXPECT_THROW(Tensor(Shape{2}, std::vector<double>{1.0}), ShapeMismatch);
}

TEST(Tensor, DotAndNorm) {
  const std::vector<double> a = {3, 4}, b = {1, -2};
  EXPECT_EQ(dot(a, b), -5.0);
  EXPECT_EQ(norm2(a), 5.0);
  EXPECT_FALSE(Tensor::vector({1.0, NAN}).all_finite());
}

TEST(Philox, KnownAnswerVectors) {
  // Published known-answer vectors for Philox4x32-10.
  auto zero = RngStream::philox({0, 0}, {0, 0, 0, 0});
  EXPECT_EQ(zero, (std::array<std::uint32_t, 4>{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8}));
  auto ones = RngStream::philox({0xffffffff, 0xffffffff},
                                {0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff});
  EXPECT_EQ(ones, (std::array<std::uint32_t, 4>{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd}));
  auto pi = RngStream::philox({0xa4093822, 0x299f31d0},
                              {0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344});
  EXPECT_EQ(pi, (std::array<std::uint32_t, 4>{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1}));
}

TEST(RngStream, ReplayAndIndependence) {
  RngStream a(7, 3), b(7, 3), c(7, 4), d(8, 3);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 100; ++i) {
    const auto va = a.next_u64();
    EXPECT_EQ(va, b.next_u64());
    seen.insert(va);
    seen.insert(c.next_u64());
    seen.insert(d.next_u64());
  }
  EXPECT_EQ(seen.size(), 300u);
}

TEST(RngStream, UniformOpenInterval) {
  RngStream rng(1, 1);
  double lo = 1.0, hi = 0.0;
  RunningMoments mom;
  for (int i = 0; i < 200000; ++i) {
    const double u = rng.uniform();
    lo = std::min(lo, u);
    hi = std::max(hi, u);
    mom.add(u);
  }
  EXPECT_GT(lo, 0.0);
  EXPECT_LT(hi, 1.0);
  EXPECT_NEAR(mom.mean(), 0.5, 4.0 * mom.standard_error());
}

TEST(RngStream, NormalMoments) {
  RngStream rng(2, 9);
  RunningMoments m1, m2, m4;
  for (int i = 0; i < 400000; ++i) {
    const double z = rng.normal();
    m1.add(z);
    m2.add(z * z);
    m4.add(z * z * z * z);
  }
  EXPECT_NEAR(m1.mean(), 0.0, 4.0 * m1.standard_error());
  EXPECT_NEAR(m2.mean(), 1.0, 4.0 * m2.standard_error());
  EXPECT_NEAR(m4.mean(), 3.0, 4.0 * m4.standard_error());
}

TEST(RngStream, UniformIndexCoversRange) {
  RngStream rng(3, 3);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) ++counts[rng.uniform_index(7)];
  for (int c : counts) EXPECT_NEAR(c, 10000, 400);
}

TEST(RngStream, StreamIdLayout) {
  EXPECT_EQ(stream_id(StreamPurpose::augment, 2, 5), (std::uint64_t{4} << 56) | (std::uint64_t{2} << 32) | 5u);
  EXPECT_NE(stream_id(StreamPurpose::augment, 1, 0), stream_id(StreamPurpose::shuffle, 1, 0));
}

namespace {

// erf by its Maclaurin series in long double; accurate for |x| <= 4.
long double erf_series(long double x) {
  long double term = x, sum = x;
  for (int n = 1; n < 200; ++n) {
    term *= -x * x / n;
    sum += term / (2 * n + 1);
  }
  return 2.0L / std::sqrt(std::numbers::pi_v<long double>) * sum;
}

}  // namespace

TEST(Special, GaussianCdfAgainstSeries) {
  for (double x = -5.0; x <= 5.0; x += 0.125) {
    const long double oracle = 0.5L * (1.0L + erf_series(x / std::numbers::sqrt2_v<long double>));
    EXPECT_NEAR(gaussian_cdf(x), static_cast<double>(oracle), 1e-14) << "x=" << x;
  }
  EXPECT_EQ(gaussian_cdf(0.0), 0.5);
  EXPECT_EQ(gaussian_cdf(-40.0), 0.0);
  EXPECT_EQ(gaussian_cdf(40.0), 1.0);
}

TEST(Special, GaussianPdf) {
  EXPECT_NEAR(gaussian_pdf(0.0), 1.0 / std::sqrt(2.0 * std::numbers::pi), 1e-16);
  EXPECT_NEAR(gaussian_pdf(1.5), gaussian_pdf(-1.5), 0.0);
}

TEST(Quadrature, GaussHermiteMoments) {
  for (int n : {5, 20, 64, 200}) {
    const auto& gh = gauss_hermite_nodes(n);
    double w = 0.0;
    for (double v : gh.weights) w += v;
    EXPECT_NEAR(w, 1.0, 1e-13) << n;
    for (std::size_t k = 1; k < gh.nodes.size(); ++k) EXPECT_LT(gh.nodes[k - 1], gh.nodes[k]);
  }
  const auto rule = QuadratureRule::gauss_hermite(40);
  // E[Z^(2k)] = (2k-1)!!
  EXPECT_NEAR(integrate([](double z) { return z * z; }, rule, QuadratureWeight::gaussian), 1.0, 1e-13);
  EXPECT_NEAR(integrate([](double z) { return std::pow(z, 4); }, rule, QuadratureWeight::gaussian), 3.0, 1e-12);
  EXPECT_NEAR(integrate([](double z) { return std::pow(z, 6); }, rule, QuadratureWeight::gaussian), 15.0, 1e-11);
  EXPECT_NEAR(integrate([](double z) { return std::pow(z, 5); }, rule, QuadratureWeight::gaussian), 0.0, 1e-12);
}

TEST(Quadrature, SimpsonMatchesGaussHermite) {
  auto f = [](double z) { return std::cos(z) + z * z; };
  const double gh = integrate(f, QuadratureRule::gauss_hermite(), QuadratureWeight::gaussian);
  const double simpson = integrate(f, QuadratureRule::adaptive_simpson(1e-12), QuadratureWeight::gaussian);
  // E[cos Z] = e^{-1/2}
  EXPECT_NEAR(gh, std::exp(-0.5) + 1.0, 1e-12);
  EXPECT_NEAR(simpson, std::exp(-0.5) + 1.0, 1e-10);
  EXPECT_NEAR(integrate([](double s) { return s * s; }, QuadratureRule::adaptive_simpson(),
                        QuadratureWeight::none, Interval{0.0, 3.0}),
              9.0, 1e-10);
}

TEST(Quadrature, Errors) {
  auto f = [](double s) { return s; };
  EXPECT_THROW(integrate(f, QuadratureRule::gauss_hermite(), QuadratureWeight::none), BadSpec);
  EXPECT_THROW(integrate(f, QuadratureRule::adaptive_simpson(), QuadratureWeight::none), BadSpec);
  auto wild = [](double s) { return std::sin(1.0 / (s * s + 1e-9)); };
  EXPECT_THROW(integrate(wild, QuadratureRule::adaptive_simpson(1e-14, 3), QuadratureWeight::none,
                         Interval{-1.0, 1.0}),
               NonConvergence);
}

TEST(Stats, PairwiseSum) {
  std::vector<double> v(1000001, 0.1);
  EXPECT_NEAR(pairwise_sum(v), 100000.1, 1e-8);
  EXPECT_EQ(pairwise_sum(std::vector<double>{}), 0.0);
}

TEST(Stats, RunningMomentsMergeMatchesTwoPass) {
  auto rng = testing_support::test_rng(1);
  std::vector<double> xs(1000);
  for (double& x : xs) x = 3.0 + 2.0 * rng.normal();
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= xs.size();
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  RunningMoments a, b;
  for (std::size_t i = 0; i < xs.size(); ++i) (i < 377 ? a : b).add(xs[i]);
  a.merge(b);
  EXPECT_EQ(a.count(), 1000u);
  EXPECT_NEAR(a.mean(), mean, 1e-12);
  EXPECT_NEAR(a.variance(), ss / 999.0, 1e-10);
}

TEST(Stats, MonteCarloIndependentOfThreadCount) {
  auto kernel = [](RngStream& rng, std::span<double> out) {
    const double z = rng.normal();
    out[0] = z * z;
    out[1] = z;
  };
  setenv("MAXUP_LAB_THREADS", "1", 1);
  const auto one = monte_carlo(100000, 2, 5, 77, kernel);
  setenv("MAXUP_LAB_THREADS", "3", 1);
  const auto three = monte_carlo(100000, 2, 5, 77, kernel);
  unsetenv("MAXUP_LAB_THREADS");
  EXPECT_EQ(one[0].mean, three[0].mean);
  EXPECT_EQ(one[1].standard_error, three[1].standard_error);
  EXPECT_EQ(one[0].samples, 100000u);
  EXPECT_NEAR(one[0].mean, 1.0, 4.0 * one[0].standard_error);
}

TEST(Stats, MonteCarloAgainstQuadrature) {
  // E[max(Z, 0)^2] = 1/2 both ways.
  const auto mc = monte_carlo(400000, 1, 9, 0, [](RngStream& rng, std::span<double> out) {
    const double z = std::max(rng.normal(), 0.0);
    out[0] = z * z;
  })[0];
  const double quad = integrate([](double z) { return z > 0 ? z * z : 0.0; },
                                QuadratureRule::adaptive_simpson(), QuadratureWeight::gaussian);
  EXPECT_NEAR(quad, 0.5, 1e-9);
  EXPECT_NEAR(mc.mean, quad, 4.0 * mc.standard_error);
}

TEST(Stats, ParallelForPropagatesExceptions) {
  setenv("MAXUP_LAB_THREADS", "2", 1);
  EXPECT_THROW(parallel_for(10, [](std::size_t i) {
                 if (i == 7) throw BadSpec("boom");
               }),
               BadSpec);
  unsetenv("MAXUP_LAB_THREADS");
}

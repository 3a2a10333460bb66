#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace maxup {

struct QuadratureRule {
  enum class Kind { gauss_hermite, adaptive_simpson };

  Kind kind = Kind::gauss_hermite;
  int node_count = 200;      // gauss_hermite
  double tolerance = 1e-10;  // adaptive_simpson, absolute
  int max_depth = 50;        // adaptive_simpson

  static QuadratureRule gauss_hermite(int nodes = 200) {
    return {Kind::gauss_hermite, nodes, 1e-10, 50};
  }
  static QuadratureRule adaptive_simpson(double tol = 1e-10, int depth = 50) {
    return {Kind::adaptive_simpson, 200, tol, depth};
  }
};

enum class QuadratureWeight { gaussian, none };

struct Interval {
  double lo;
  double hi;
};

/// Nodes and weights for integrals against the standard normal density:
/// sum_k w_k f(z_k) ~ E[f(Z)], Z ~ N(0, 1). Weights sum to one.
struct GaussHermiteNodes {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Cached per node count; safe to call from multiple threads.
const GaussHermiteNodes& gauss_hermite_nodes(int n);

/// Integrates f against the chosen weight. With the gaussian weight the result
/// approximates E[f(Z)]; adaptive Simpson then integrates f*phi over `bounds`
/// (default [-12, 12]). Unweighted integration needs bounds and adaptive Simpson.
/// Throws NonConvergence when refinement exceeds rule.max_depth, BadSpec on an
/// unusable rule/weight combination.
double integrate(const std::function<double(double)>& f, const QuadratureRule& rule,
                 QuadratureWeight weight, std::optional<Interval> bounds = std::nullopt);

}  // namespace maxup

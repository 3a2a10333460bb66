#include "maxup/quadrature.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

#include "maxup/error.hpp"
#include "maxup/special.hpp"

namespace maxup {

namespace {

// Roots of the orthonormal physicists' Hermite polynomial by a sign-change
// scan, bisection and a Newton polish, then rescaled to the probabilists'
// weight phi(z).
GaussHermiteNodes compute_nodes(int n) {
  constexpr double pi_m4 = 0.7511255444649425;  // pi^(-1/4)
  // Returns p_n(z); `deriv` receives p_n'(z).
  auto eval = [n](double z, double& deriv) {
    double p1 = pi_m4, p2 = 0.0;
    for (int j = 0; j < n; ++j) {
      const double p3 = p2;
      p2 = p1;
      p1 = z * std::sqrt(2.0 / (j + 1)) * p2 - std::sqrt(static_cast<double>(j) / (j + 1)) * p3;
    }
    deriv = std::sqrt(2.0 * n) * p2;
    return p1;
  };

  std::vector<double> roots;  // nonnegative roots, ascending
  double unused = 0.0;
  if (n % 2 == 1) roots.push_back(0.0);
  const double top = std::sqrt(2.0 * n + 1.0) + 1.0;
  const int grid = 40 * n;
  double lo = top / grid;
  double plo = eval(lo, unused);
  for (int k = 2; k <= grid; ++k) {
    const double hi = top * k / grid;
    const double phi = eval(hi, unused);
    if ((plo < 0.0) != (phi < 0.0)) {
      double a = lo, b = hi, pa = plo;
      for (int it = 0; it < 200 && b - a > 1e-15 * b; ++it) {
        const double mid = 0.5 * (a + b);
        const double pm = eval(mid, unused);
        if ((pm < 0.0) == (pa < 0.0)) {
          a = mid;
          pa = pm;
        } else {
          b = mid;
        }
      }
      double z = 0.5 * (a + b), d = 0.0;
      for (int it = 0; it < 3; ++it) {
        const double p = eval(z, d);
        const double next = z - p / d;
        if (!(next > lo && next < hi)) break;
        z = next;
      }
      roots.push_back(z);
    }
    lo = hi;
    plo = phi;
  }
  if (roots.size() != static_cast<std::size_t>((n + 1) / 2)) {
    throw NonConvergence("Gauss-Hermite root scan found " + std::to_string(roots.size()) +
                         " of " + std::to_string((n + 1) / 2) + " nonnegative roots");
  }

  GaussHermiteNodes out;
  out.nodes.resize(n);
  out.weights.resize(n);
  const double inv_sqrt_pi = 1.0 / std::sqrt(std::numbers::pi);
  const int half = n / 2;
  for (std::size_t r = 0; r < roots.size(); ++r) {
    double d = 0.0;
    eval(roots[r], d);
    const double w = 2.0 / (d * d) * inv_sqrt_pi;
    const double node = std::numbers::sqrt2 * roots[r];
    // Ascending order: negative roots mirror the positive ones.
    const int pos = half + static_cast<int>(r);
    const int neg = n - 1 - pos;
    out.nodes[pos] = node;
    out.weights[pos] = w;
    out.nodes[neg] = -node;
    out.weights[neg] = w;
  }
  return out;
}

struct SimpsonState {
  const std::function<double(double)>* f;
  int max_depth;
};

double simpson_step(const SimpsonState& s, double a, double b, double fa, double fm, double fb,
                    double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = (*s.f)(lm);
  const double frm = (*s.f)(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  if (depth >= s.max_depth) {
    throw NonConvergence("adaptive Simpson exceeded depth " + std::to_string(s.max_depth) +
                         " near [" + std::to_string(a) + ", " + std::to_string(b) + "]");
  }
  return simpson_step(s, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1) +
         simpson_step(s, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1);
}

double adaptive_simpson(const std::function<double(double)>& f, Interval iv, double tol,
                        int max_depth) {
  // Splitting into panels first avoids false convergence on narrow peaks.
  constexpr int panels = 64;
  const double width = (iv.hi - iv.lo) / panels;
  const SimpsonState state{&f, max_depth};
  double total = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double a = iv.lo + p * width;
    const double b = p + 1 == panels ? iv.hi : a + width;
    const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    total += simpson_step(state, a, b, fa, fm, fb, whole, tol / panels, 0);
  }
  return total;
}

}  // namespace

const GaussHermiteNodes& gauss_hermite_nodes(int n) {
  if (n < 1) throw BadSpec("Gauss-Hermite node count must be positive");
  static std::mutex mu;
  static std::map<int, std::unique_ptr<GaussHermiteNodes>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<GaussHermiteNodes>(compute_nodes(n));
  return *slot;
}

double integrate(const std::function<double(double)>& f, const QuadratureRule& rule,
                 QuadratureWeight weight, std::optional<Interval> bounds) {
  if (rule.kind == QuadratureRule::Kind::gauss_hermite) {
    if (weight != QuadratureWeight::gaussian) {
      throw BadSpec("gauss_hermite integrates against the gaussian weight only");
    }
    const auto& gh = gauss_hermite_nodes(rule.node_count);
    double sum = 0.0;
    for (std::size_t k = 0; k < gh.nodes.size(); ++k) sum += gh.weights[k] * f(gh.nodes[k]);
    return sum;
  }
  if (!(rule.tolerance > 0.0)) throw BadSpec("adaptive Simpson tolerance must be positive");
  if (weight == QuadratureWeight::none) {
    if (!bounds) throw BadSpec("unweighted integration requires bounds");
    return adaptive_simpson(f, *bounds, rule.tolerance, rule.max_depth);
  }
  const Interval iv = bounds.value_or(Interval{-12.0, 12.0});
  const std::function<double(double)> weighted = [&f](double s) {
    return f(s) * gaussian_pdf(s);
  };
  return adaptive_simpson(weighted, iv, rule.tolerance, rule.max_depth);
}

}  // namespace maxup

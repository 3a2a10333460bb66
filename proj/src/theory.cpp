#include "maxup/theory.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "maxup/error.hpp"
#include "maxup/quadrature.hpp"
#include "maxup/rng.hpp"
#include "maxup/special.hpp"

namespace maxup {

using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::uint64_t kStreamSplit = std::uint64_t{1} << 28;

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void check_kink(const ScalarField& f, std::span<const double> x) {
  if (!f.kink_distance) return;
  const double dist = f.kink_distance(x);
  if (dist < 1e-3) {
    throw KinkProximity("input lies " + fmt(dist) + " from a non-differentiable surface");
  }
}

void check_decreasing(std::span<const double> scales, const char* what) {
  if (scales.empty()) throw BadSpec(std::string(what) + " list is empty");
  for (std::size_t i = 0; i < scales.size(); ++i) {
    if (!(scales[i] > 0.0)) throw BadSpec(std::string(what) + " values must be positive");
    if (i > 0 && !(scales[i] < scales[i - 1])) {
      throw BadSpec(std::string(what) + " list must be strictly decreasing");
    }
  }
}

std::vector<double> gradient_of(const ScalarField& f, std::span<const double> x) {
  std::vector<double> g(f.dim);
  f.gradient(x, g);
  return g;
}

// Builds the report for an expansion whose residual should vanish to second order.
VerificationReport slope_report(const std::string& name, const ExpansionResult& res,
                                bool residual_is_zero, std::uint64_t samples) {
  if (residual_is_zero) {
    double worst = 0.0, se = 0.0;
    for (const auto& p : res.points) {
      if (std::abs(p.residual) >= worst) {
        worst = std::abs(p.residual);
        se = p.standard_error;
      }
    }
    auto r = make_report(name, worst, 0.0, se, 0.0, samples,
                         "residual zero at every scale; expansion exact");
    r.status = ReportStatus::pass;
    return r;
  }
  VerificationReport r = make_report(name, res.slope, 2.0, 0.0, 0.5, samples,
                                     "log-log slope of the residual");
  r.bound_low = 1.5;
  r.bound_high = 2.5;
  r.status = judge(r);
  return r;
}

}  // namespace

const char* to_string(ReportStatus s) noexcept {
  switch (s) {
    case ReportStatus::pass: return "pass";
    case ReportStatus::fail: return "fail";
    case ReportStatus::inconclusive: return "inconclusive";
  }
  return "?";
}

ReportStatus judge(const VerificationReport& r) {
  if (!std::isfinite(r.estimate)) return ReportStatus::fail;
  if (!std::isnan(r.oracle)) {
    const double slack = std::max(4.0 * r.standard_error, r.tolerance);
    if (!(std::abs(r.estimate - r.oracle) <= slack)) return ReportStatus::fail;
  }
  if (r.bound_low && !(r.estimate >= *r.bound_low)) return ReportStatus::fail;
  if (r.bound_high && !(r.estimate <= *r.bound_high)) return ReportStatus::fail;
  return ReportStatus::pass;
}

VerificationReport make_report(std::string name, double estimate, double oracle,
                               double standard_error, double tolerance, std::uint64_t samples,
                               std::string note) {
  VerificationReport r;
  r.check_name = std::move(name);
  r.estimate = estimate;
  r.oracle = oracle;
  r.standard_error = standard_error;
  r.tolerance = tolerance;
  r.samples_used = samples;
  r.note = std::move(note);
  r.status = judge(r);
  return r;
}

json to_json(const VerificationReport& r) {
  return {{"check_name", r.check_name},
          {"estimate", number_or_null(r.estimate)},
          {"oracle", number_or_null(r.oracle)},
          {"standard_error", number_or_null(r.standard_error)},
          {"tolerance", number_or_null(r.tolerance)},
          {"bound_low", r.bound_low ? number_or_null(*r.bound_low) : json(nullptr)},
          {"bound_high", r.bound_high ? number_or_null(*r.bound_high) : json(nullptr)},
          {"status", to_string(r.status)},
          {"samples_used", r.samples_used},
          {"note", r.note}};
}

std::string to_jsonl(std::span<const VerificationReport> reports) {
  std::string out;
  for (const auto& r : reports) out += to_json(r).dump() + "\n";
  return out;
}

std::string summary_table(std::span<const VerificationReport> reports) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-28s %-13s %14s %14s %12s  %s\n", "check", "status",
                "estimate", "oracle", "std_err", "note");
  out += buf;
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%-28s %-13s %14.6g %14.6g %12.3g  ", r.check_name.c_str(),
                  to_string(r.status), r.estimate, r.oracle, r.standard_error);
    out += buf;
    out += r.note + "\n";
  }
  return out;
}

std::uint64_t verify_stream(std::uint64_t a, std::uint64_t b) noexcept {
  return stream_id(StreamPurpose::verify, a, b);
}

Estimate estimate_c_m_sigma(std::size_t m, double sigma, const McConfig& mc) {
  if (m == 0) throw BadSpec("m must be at least 1");
  const auto est = monte_carlo(mc.samples, 1, mc.seed, mc.stream,
                               [m, sigma](RngStream& rng, std::span<double> out) {
                                 double best = rng.normal();
                                 for (std::size_t i = 1; i < m; ++i) best = std::max(best, rng.normal());
                                 out[0] = sigma * best;
                               });
  return est[0];
}

VerificationReport verify_max_inner_product(std::span<const double> g, std::size_t m, double sigma,
                                            const McConfig& mc) {
  const double gnorm = norm2(g);
  if (gnorm == 0.0) throw ZeroVector("g must be nonzero");
  const std::size_t d = g.size();
  const auto direct =
      monte_carlo(mc.samples, 1, mc.seed, mc.stream, [&](RngStream& rng, std::span<double> out) {
        double best = -kInf;
        for (std::size_t i = 0; i < m; ++i) {
          double s = 0.0;
          for (std::size_t j = 0; j < d; ++j) s += g[j] * sigma * rng.normal();
          best = std::max(best, s);
        }
        out[0] = best;
      })[0];
  McConfig other = mc;
  other.stream += kStreamSplit;
  const Estimate c = estimate_c_m_sigma(m, sigma, other);
  const double se = std::hypot(direct.standard_error, gnorm * c.standard_error);
  return make_report("max_inner_product", direct.mean, c.mean * gnorm, se, 0.0,
                     direct.samples + c.samples, "E[max <g,z_i>] vs c_{m,sigma} ||g||");
}

ScalarField model_field(const Model& model, const Loss& loss_spec, int y) {
  check_label(model, y);
  ScalarField f;
  f.dim = model.input_dim();
  f.value = [model, loss_spec, y](std::span<const double> x) { return loss(model, loss_spec, x, y); };
  f.gradient = [model, loss_spec, y](std::span<const double> x, std::span<double> g) {
    const auto lg = loss_and_gradient(model, loss_spec, x, y, false, true);
    std::copy(lg.input.values().begin(), lg.input.values().end(), g.begin());
  };
  f.kink_distance = [model, loss_spec, y](std::span<const double> x) {
    return kink_distance(model, loss_spec, x, y);
  };
  return f;
}

ScalarField linear_field(Tensor g, double offset) {
  ScalarField f;
  f.dim = g.size();
  f.value = [g, offset](std::span<const double> x) { return dot(g.values(), x) + offset; };
  f.gradient = [g](std::span<const double>, std::span<double> out) {
    std::copy(g.values().begin(), g.values().end(), out.begin());
  };
  return f;
}

ScalarField quadratic_bowl(std::size_t d) {
  ScalarField f;
  f.dim = d;
  f.value = [](std::span<const double> x) { return 0.5 * dot(x, x); };
  f.gradient = [](std::span<const double> x, std::span<double> out) {
    std::copy(x.begin(), x.end(), out.begin());
  };
  return f;
}

double loglog_slope(std::span<const ExpansionPoint> points) {
  if (points.size() < 2) return kNaN;
  double mx = 0.0, my = 0.0;
  for (const auto& p : points) {
    mx += std::log(p.scale);
    my += std::log(std::abs(p.residual));
  }
  mx /= static_cast<double>(points.size());
  my /= static_cast<double>(points.size());
  double sxy = 0.0, sxx = 0.0;
  for (const auto& p : points) {
    const double dx = std::log(p.scale) - mx;
    sxy += dx * (std::log(std::abs(p.residual)) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

ExpansionResult verify_maxup_expansion(const ExpansionProbe& probe) {
  check_decreasing(probe.sigma_list, "sigma");
  if (probe.m == 0) throw BadSpec("m must be at least 1");
  const ScalarField& f = probe.field;
  const std::span<const double> x = probe.x.values();
  if (x.size() != f.dim) throw ShapeMismatch("probe point does not match the field dimension");
  check_kink(f, x);

  const double l0 = f.value(x);
  const auto g = gradient_of(f, x);
  const double gnorm = norm2(g);
  std::vector<double> ghat(g.size(), 0.0);
  if (gnorm > 0.0) {
    for (std::size_t j = 0; j < g.size(); ++j) ghat[j] = g[j] / gnorm;
  }
  const std::size_t d = f.dim, m = probe.m;

  ExpansionResult res;
  std::uint64_t samples = 0;
  bool all_zero = true;
  for (double sigma : probe.sigma_list) {
    // Same stream for every sigma: the residuals share their draws.
    const auto est = monte_carlo(
        probe.mc.samples, 3, probe.mc.seed, probe.mc.stream,
        [&](RngStream& rng, std::span<double> out) {
          thread_local std::vector<double> xp;
          xp.resize(d);
          double lmax = -kInf, pmax = -kInf;
          for (std::size_t i = 0; i < m; ++i) {
            double proj = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double z = rng.normal();
              proj += ghat[j] * z;
              xp[j] = x[j] + sigma * z;
            }
            lmax = std::max(lmax, f.value(xp));
            pmax = std::max(pmax, proj);
          }
          const double first = sigma * gnorm * pmax;
          out[0] = (lmax - l0) - first;
          out[1] = lmax - l0;
          out[2] = first;
        });
    res.points.push_back({sigma, est[1].mean, est[2].mean, est[0].mean, est[0].standard_error});
    const double roundoff = 1e-12 * (1.0 + std::abs(l0) + std::abs(est[2].mean));
    if (std::abs(est[0].mean) > std::max(4.0 * est[0].standard_error, roundoff)) all_zero = false;
    samples += est[0].samples;
  }
  res.slope = loglog_slope(res.points);
  res.report = slope_report("maxup_expansion", res, all_zero, samples);
  return res;
}

ExpansionResult verify_avg_aug_expansion(const ExpansionProbe& probe, double fd_tolerance,
                                         double h) {
  check_decreasing(probe.sigma_list, "sigma");
  const ScalarField& f = probe.field;
  const std::span<const double> x = probe.x.values();
  if (x.size() != f.dim) throw ShapeMismatch("probe point does not match the field dimension");
  check_kink(f, x);

  const double l0 = f.value(x);
  const double half_trace = 0.5 * hessian_trace_fd(f, x, h);
  const std::size_t d = f.dim;

  ExpansionResult res;
  Estimate last;
  std::uint64_t samples = 0;
  for (double sigma : probe.sigma_list) {
    const auto est = monte_carlo(
        probe.mc.samples, 1, probe.mc.seed, probe.mc.stream,
        [&](RngStream& rng, std::span<double> out) {
          thread_local std::vector<double> plus, minus;
          plus.resize(d);
          minus.resize(d);
          for (std::size_t j = 0; j < d; ++j) {
            const double z = rng.normal();
            plus[j] = x[j] + sigma * z;
            minus[j] = x[j] - sigma * z;
          }
          out[0] = (f.value(plus) + f.value(minus) - 2.0 * l0) / (2.0 * sigma * sigma);
        })[0];
    const double s2 = sigma * sigma;
    res.points.push_back({sigma, s2 * est.mean, s2 * half_trace, s2 * (est.mean - half_trace),
                          s2 * est.standard_error});
    last = est;
    samples += est.samples;
  }
  res.slope = loglog_slope(res.points);
  res.report = make_report("avgaug_expansion", last.mean, half_trace, last.standard_error,
                           4.0 * last.standard_error + fd_tolerance, samples,
                           "(E[L(x+sz)]-L)/s^2 at s=" + fmt(probe.sigma_list.back()) +
                               " vs trace(H)/2");
  return res;
}

double conjugate_exponent(double p) {
  if (!(p >= 1.0)) throw BadExponent("exponent must lie in [1, inf]");
  if (p == 1.0) return kInf;
  if (std::isinf(p)) return 1.0;
  return p / (p - 1.0);
}

double dual_norm(std::span<const double> g, double q) {
  if (!(q >= 1.0)) throw BadExponent("exponent must lie in [1, inf]");
  if (std::isinf(q)) {
    double m = 0.0;
    for (double v : g) m = std::max(m, std::abs(v));
    return m;
  }
  if (q == 1.0) {
    std::vector<double> a(g.size());
    std::transform(g.begin(), g.end(), a.begin(), [](double v) { return std::abs(v); });
    return pairwise_sum(a);
  }
  if (q == 2.0) return norm2(g);
  double scale = 0.0;
  for (double v : g) scale = std::max(scale, std::abs(v));
  if (scale == 0.0) return 0.0;
  std::vector<double> a(g.size());
  std::transform(g.begin(), g.end(), a.begin(),
                 [scale, q](double v) { return std::pow(std::abs(v) / scale, q); });
  return scale * std::pow(pairwise_sum(a), 1.0 / q);
}

void project_l1_ball(std::span<double> v, double r) {
  double total = 0.0;
  for (double e : v) total += std::abs(e);
  if (total <= r) return;
  std::vector<double> u(v.size());
  std::transform(v.begin(), v.end(), u.begin(), [](double e) { return std::abs(e); });
  std::sort(u.begin(), u.end(), std::greater<>());
  double cum = 0.0, theta = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cum += u[j];
    const double t = (cum - r) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) theta = t;
  }
  for (double& e : v) e = std::copysign(std::max(std::abs(e) - theta, 0.0), e);
}

namespace {

int norm_code(double p) {
  if (p == 1.0) return 1;
  if (p == 2.0) return 2;
  if (std::isinf(p) && p > 0) return 0;
  throw BadExponent("adversarial radius norm must be 1, 2 or inf");
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void project(std::span<double> delta, int code, double r) {
  if (code == 0) {
    for (double& e : delta) e = std::clamp(e, -r, r);
  } else if (code == 2) {
    const double n = norm2(delta);
    if (n > r) {
      for (double& e : delta) e *= r / n;
    }
  } else {
    project_l1_ball(delta, r);
  }
}

std::size_t argmax_abs(std::span<const double> g) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < g.size(); ++j) {
    if (std::abs(g[j]) > std::abs(g[best])) best = j;
  }
  return best;
}

}  // namespace

double adversarial_inner_max(const ScalarField& field, std::span<const double> x, double p,
                             double r, int steps) {
  const int code = norm_code(p);
  const std::size_t d = field.dim;
  const auto g0 = gradient_of(field, x);

  std::vector<double> start(d, 0.0);
  if (code == 0) {
    for (std::size_t j = 0; j < d; ++j) start[j] = r * sign(g0[j]);
  } else if (code == 2) {
    const double n = norm2(g0);
    if (n > 0.0) {
      for (std::size_t j = 0; j < d; ++j) start[j] = r * g0[j] / n;
    }
  } else if (d > 0) {
    const std::size_t j = argmax_abs(g0);
    start[j] = r * sign(g0[j]);
  }
  // Stationary point: every boundary direction ties to first order.
  if (d > 0 && std::all_of(start.begin(), start.end(), [](double v) { return v == 0.0; })) {
    start[0] = r;
  }

  std::vector<double> xp(d), grad(d);
  auto value_at = [&](const std::vector<double>& delta) {
    for (std::size_t j = 0; j < d; ++j) xp[j] = x[j] + delta[j];
    return field.value(xp);
  };

  double best = -kInf;
  const double step = r / 10.0;
  for (const auto& init : {start, std::vector<double>(d, 0.0)}) {
    std::vector<double> delta = init;
    best = std::max(best, value_at(delta));
    for (int s = 0; s < steps; ++s) {
      for (std::size_t j = 0; j < d; ++j) xp[j] = x[j] + delta[j];
      field.gradient(xp, grad);
      if (code == 0) {
        for (std::size_t j = 0; j < d; ++j) delta[j] += step * sign(grad[j]);
      } else if (code == 2) {
        const double n = norm2(grad);
        if (n == 0.0) break;
        for (std::size_t j = 0; j < d; ++j) delta[j] += step * grad[j] / n;
      } else {
        const std::size_t j = argmax_abs(grad);
        if (grad[j] == 0.0) break;
        delta[j] += step * sign(grad[j]);
      }
      project(delta, code, r);
      best = std::max(best, value_at(delta));
    }
  }
  return best;
}

ExpansionResult verify_adversarial_expansion(const AdversarialProbe& probe) {
  check_decreasing(probe.radii, "radius");
  const ScalarField& f = probe.field;
  const std::span<const double> x = probe.x.values();
  if (x.size() != f.dim) throw ShapeMismatch("probe point does not match the field dimension");
  norm_code(probe.p);
  check_kink(f, x);

  const double l0 = f.value(x);
  const double gq = dual_norm(gradient_of(f, x), conjugate_exponent(probe.p));
  ExpansionResult res;
  bool all_zero = true;
  for (double r : probe.radii) {
    const double top = adversarial_inner_max(f, x, probe.p, r, probe.steps);
    const double first = r * gq;
    const double residual = (top - l0) - first;
    const double roundoff = 1e-12 * (1.0 + std::abs(l0) + std::abs(first));
    res.points.push_back({r, top - l0, first, residual, 0.0});
    if (std::abs(residual) > roundoff) all_zero = false;
  }
  res.slope = loglog_slope(res.points);
  res.report = slope_report("adversarial_expansion", res, all_zero, 0);
  return res;
}

double compute_G(std::size_t q, double R, double sigma_xi) {
  if (q == 0) throw BadSpec("q must be at least 1");
  if (!(R > 0.0) || !(sigma_xi > 0.0)) throw BadSpec("R and sigma_xi must be positive");
  if (q == 1) return 0.0;
  const double qd = static_cast<double>(q);
  // E[max] = E_Z[q Z Phi(Z)^(q-1)]: the density of the max against the gaussian weight.
  const auto integrand = [qd](double z) { return qd * z * std::pow(gaussian_cdf(z), qd - 1.0); };
  const QuadratureRule rule =
      q <= 16 ? QuadratureRule::gauss_hermite() : QuadratureRule::adaptive_simpson(1e-13);
  return R * sigma_xi * integrate(integrand, rule, QuadratureWeight::gaussian);
}

namespace {

void require_binary(const Dataset& data) {
  if (data.empty()) throw EmptyDataset("dataset is empty");
  if (data.num_classes != 0) throw UnknownLabel("binary {-1, +1} labels required");
}

}  // namespace

RademacherResult empirical_rademacher(const Dataset& data, double R, std::size_t q,
                                      double sigma_xi, const McConfig& mc) {
  require_binary(data);
  const std::size_t n = data.size(), d = data.dim;
  const double c = compute_G(q, 1.0, sigma_xi);
  const double scale = R / static_cast<double>(n);

  const auto est =
      monte_carlo(mc.samples, 3, mc.seed, mc.stream, [&](RngStream& rng, std::span<double> out) {
        thread_local std::vector<double> u;
        u.assign(d, 0.0);
        double hsum = 0.0;
        std::uint64_t bits = 0;
        for (std::size_t i = 0; i < n; ++i) {
          if (i % 64 == 0) bits = rng.next_u64();
          const double h = (bits >> (i % 64)) & 1u ? 1.0 : -1.0;
          hsum += h;
          const auto& ex = data.examples[i];
          const double hy = h * ex.y;
          for (std::size_t j = 0; j < d; ++j) u[j] += hy * ex.x[j];
        }
        const double un = norm2(u);
        const double plain = scale * un;
        const double aug = scale * std::max(un - hsum * c, 0.0);
        out[0] = plain;
        out[1] = aug;
        out[2] = aug - plain;
      });

  RademacherResult res;
  res.rn_f = est[0];
  res.rn_ftilde = est[1];
  res.difference = est[2];
  res.G = compute_G(q, R, sigma_xi);
  res.bound = res.rn_f.mean + res.G / (2.0 * std::sqrt(static_cast<double>(n)));

  const double se = res.difference.standard_error;
  if (q == 1) {
    res.report = make_report("rademacher", res.rn_ftilde.mean, res.rn_f.mean, 0.0, 0.0,
                             res.rn_f.samples, "q=1: augmented class equals the plain class");
  } else {
    VerificationReport r;
    r.check_name = "rademacher";
    r.estimate = res.rn_ftilde.mean;
    r.oracle = kNaN;
    r.standard_error = se;
    r.bound_high = res.bound + 4.0 * se;
    r.samples_used = res.rn_f.samples;
    r.note = "Rn[F~] <= Rn[F] + G/(2 sqrt n); q=" + std::to_string(q) +
             " sigma_xi=" + fmt(sigma_xi) + " n=" + std::to_string(n);
    r.status = judge(r);
    res.report = r;
  }
  return res;
}

double closed_form_worst_case_01(std::span<const double> theta, const Dataset& data, std::size_t q,
                                 double sigma_xi) {
  require_binary(data);
  const double tn = norm2(theta);
  if (tn == 0.0) throw ZeroVector("theta must be nonzero");
  if (theta.size() != data.dim) throw DimensionMismatch("theta does not match the data dimension");
  std::vector<double> per(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& ex = data.examples[i];
    const double margin = ex.y * dot(theta, ex.x.values()) / tn;
    per[i] = 1.0 - std::pow(gaussian_cdf(margin / sigma_xi), static_cast<double>(q));
  }
  return pairwise_sum(per) / static_cast<double>(data.size());
}

Estimate sampled_worst_case_01(std::span<const double> theta, const Dataset& data, std::size_t q,
                               double sigma_xi, const McConfig& mc) {
  require_binary(data);
  if (theta.size() != data.dim) throw DimensionMismatch("theta does not match the data dimension");
  const std::size_t d = data.dim;
  return monte_carlo(mc.samples, 1, mc.seed, mc.stream, [&](RngStream& rng, std::span<double> out) {
    const auto& ex = data.examples[rng.uniform_index(data.size())];
    double worst = 0.0;
    for (std::size_t k = 0; k < q; ++k) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += theta[j] * (ex.x[j] + sigma_xi * rng.normal());
      if (ex.y * s <= 0.0) worst = 1.0;
    }
    out[0] = worst;
  })[0];
}

namespace {

struct GapSums {
  // Per q: mean over draws of (worst-of-q - first copy) and (worst-of-q - clean).
  std::vector<double> aug, clean, var;
};

GapSums gap_for_example(const LabeledExample& ex, std::span<const double> theta, double tnorm,
                        std::size_t qmax, std::span<const std::size_t> q_list, double sigma_xi,
                        const Loss& loss_spec, std::uint64_t draws, RngStream rng) {
  const double margin = ex.y * dot(theta, ex.x.values());
  const double clean = margin_loss(loss_spec, margin);
  std::vector<RunningMoments> aug(q_list.size()), cl(q_list.size());
  std::vector<double> losses(qmax);
  for (std::uint64_t k = 0; k < draws; ++k) {
    // y theta^T (x + sigma xi) = margin + ||theta|| sigma Z in distribution.
    for (std::size_t c = 0; c < qmax; ++c) {
      losses[c] = margin_loss(loss_spec, margin + tnorm * sigma_xi * rng.normal());
    }
    for (std::size_t t = 0; t < q_list.size(); ++t) {
      const double top = *std::max_element(losses.begin(), losses.begin() + q_list[t]);
      aug[t].add(top - losses[0]);
      cl[t].add(top - clean);
    }
  }
  GapSums out;
  for (std::size_t t = 0; t < q_list.size(); ++t) {
    out.aug.push_back(aug[t].mean());
    out.clean.push_back(cl[t].mean());
    out.var.push_back(aug[t].variance() / static_cast<double>(draws));
  }
  return out;
}

struct GapMeans {
  std::vector<double> aug, clean, se;
};

GapMeans gap_means(const Dataset& data, std::span<const double> theta, double tnorm,
                   std::size_t qmax, std::span<const std::size_t> q_list, double sigma_xi,
                   const Loss& loss_spec, const McConfig& mc, std::uint64_t stream) {
  std::vector<GapSums> per(data.size());
  parallel_for(data.size(), [&](std::size_t i) {
    per[i] = gap_for_example(data.examples[i], theta, tnorm, qmax, q_list, sigma_xi, loss_spec,
                             mc.samples, RngStream(mc.seed, stream + i));
  });
  GapMeans out;
  const double n = static_cast<double>(data.size());
  for (std::size_t t = 0; t < q_list.size(); ++t) {
    std::vector<double> a(data.size()), c(data.size()), v(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      a[i] = per[i].aug[t];
      c[i] = per[i].clean[t];
      v[i] = per[i].var[t];
    }
    out.aug.push_back(pairwise_sum(a) / n);
    out.clean.push_back(pairwise_sum(c) / n);
    out.se.push_back(std::sqrt(pairwise_sum(v)) / n);
  }
  return out;
}

}  // namespace

GapTable gap_experiment(const Dataset& train, const Dataset& test, std::span<const double> theta,
                        std::span<const std::size_t> q_list, double L_phi, double R,
                        double sigma_xi, const Loss& loss_spec, const McConfig& mc) {
  require_binary(train);
  require_binary(test);
  if (q_list.empty()) throw BadSpec("q list is empty");
  const double tnorm = norm2(theta);
  if (tnorm == 0.0) throw ZeroVector("theta must be nonzero");
  const std::size_t qmax = *std::max_element(q_list.begin(), q_list.end());
  if (*std::min_element(q_list.begin(), q_list.end()) == 0) throw BadSpec("q must be at least 1");
  if (mc.samples == 0) throw BadSpec("at least one draw per example is required");

  const auto tr = gap_means(train, theta, tnorm, qmax, q_list, sigma_xi, loss_spec, mc, mc.stream);
  const auto te = gap_means(test, theta, tnorm, qmax, q_list, sigma_xi, loss_spec, mc,
                            mc.stream + kStreamSplit);
  const double root_n = std::sqrt(static_cast<double>(train.size()));

  GapTable table;
  table.monotone = true;
  table.train_below_test = true;
  for (std::size_t t = 0; t < q_list.size(); ++t) {
    GapRow row;
    row.q = q_list[t];
    row.complexity = L_phi * compute_G(q_list[t], R, sigma_xi) / root_n;
    row.train_gap = tr.aug[t] + row.complexity;
    row.test_gap = te.aug[t];
    row.train_gap_clean = tr.clean[t] + row.complexity;
    row.test_gap_clean = te.clean[t];
    row.train_se = tr.se[t];
    row.test_se = te.se[t];
    if (!table.rows.empty() && table.rows.back().q < row.q) {
      const auto& prev = table.rows.back();
      if (row.train_gap < prev.train_gap || row.test_gap < prev.test_gap) table.monotone = false;
    }
    if (row.q >= 2 && !(row.train_gap < row.test_gap)) table.train_below_test = false;
    table.rows.push_back(row);
  }
  table.loss_note = std::string("loss ") + to_string(loss_spec.kind) +
                    (loss_spec.bound ? " clipped at " + fmt(*loss_spec.bound) : " unclipped");
  return table;
}

std::string gap_csv(const GapTable& table) {
  std::string out =
      "q,complexity,train_gap,test_gap,train_gap_clean,test_gap_clean,train_se,test_se\n";
  char buf[320];
  for (const auto& r : table.rows) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.q,
                  r.complexity, r.train_gap, r.test_gap, r.train_gap_clean, r.test_gap_clean,
                  r.train_se, r.test_se);
    out += buf;
  }
  return out;
}

double hessian_trace_fd(const ScalarField& field, std::span<const double> x, double h) {
  if (!(h > 0.0)) throw BadSpec("finite-difference step must be positive");
  check_kink(field, x);
  const std::size_t d = field.dim;
  std::vector<double> xp(x.begin(), x.end()), gp(d), gm(d), terms(d);
  for (std::size_t j = 0; j < d; ++j) {
    xp[j] = x[j] + h;
    field.gradient(xp, gp);
    xp[j] = x[j] - h;
    field.gradient(xp, gm);
    xp[j] = x[j];
    terms[j] = (gp[j] - gm[j]) / (2.0 * h);
  }
  return pairwise_sum(terms);
}

std::string expansion_csv(const ExpansionResult& result) {
  std::string out = "scale,increase,first_order,residual,standard_error\n";
  char buf[256];
  for (const auto& p : result.points) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g\n", p.scale, p.increase,
                  p.first_order, p.residual, p.standard_error);
    out += buf;
  }
  return out;
}

}  // namespace maxup

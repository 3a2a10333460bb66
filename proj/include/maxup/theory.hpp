#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "maxup/data.hpp"
#include "maxup/model.hpp"
#include "maxup/stats.hpp"
#include "maxup/tensor.hpp"

namespace maxup {

enum class ReportStatus { pass, fail, inconclusive };

const char* to_string(ReportStatus s) noexcept;

struct VerificationReport {
  std::string check_name;
  double estimate = 0.0;
  double oracle = 0.0;
  double standard_error = 0.0;
  double tolerance = 0.0;
  std::optional<double> bound_low;
  std::optional<double> bound_high;
  ReportStatus status = ReportStatus::inconclusive;
  std::uint64_t samples_used = 0;
  std::string note;
};

/// pass iff |estimate - oracle| <= max(4 se, tolerance) and the bounds, when
/// present, bracket the estimate. Non-finite estimates fail.
ReportStatus judge(const VerificationReport& r);

/// Builds a report and sets its status with judge().
VerificationReport make_report(std::string name, double estimate, double oracle,
                               double standard_error, double tolerance, std::uint64_t samples,
                               std::string note = {});

nlohmann::json to_json(const VerificationReport& r);
/// One JSON object per line.
std::string to_jsonl(std::span<const VerificationReport> reports);
/// Fixed-width table, one row per report.
std::string summary_table(std::span<const VerificationReport> reports);

/// Monte-Carlo budget and stream selection for one estimate.
struct McConfig {
  std::uint64_t samples = 1'000'000;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;  // base stream id; blocks use stream + b
};

/// Base stream for verification work tagged (a, b).
std::uint64_t verify_stream(std::uint64_t a, std::uint64_t b = 0) noexcept;

/// E[max of m i.i.d. N(0, sigma^2)]. The draws for m are a prefix of the draws
/// for any larger m on the same stream.
Estimate estimate_c_m_sigma(std::size_t m, double sigma, const McConfig& mc);

/// Direct estimate of E[max_i <g, z_i>] against c_{m,sigma} ||g||. Throws ZeroVector.
VerificationReport verify_max_inner_product(std::span<const double> g, std::size_t m, double sigma,
                                            const McConfig& mc);

/// A scalar function of the input with its gradient.
struct ScalarField {
  std::size_t dim = 0;
  std::function<double(std::span<const double>)> value;
  std::function<void(std::span<const double>, std::span<double>)> gradient;
  /// Distance to the nearest non-differentiable surface; +inf when smooth.
  std::function<double(std::span<const double>)> kink_distance;
};

/// x -> L(x, theta) for a fixed label.
ScalarField model_field(const Model& model, const Loss& loss, int y);
/// x -> g^T x + offset.
ScalarField linear_field(Tensor g, double offset = 0.0);
/// x -> ||x||^2 / 2.
ScalarField quadratic_bowl(std::size_t d);

struct ExpansionProbe {
  ScalarField field;
  Tensor x;
  std::vector<double> sigma_list;  // strictly decreasing
  std::size_t m = 4;
  McConfig mc;
};

struct ExpansionPoint {
  double scale = 0.0;        // sigma or radius
  double increase = 0.0;     // augmented objective minus L(x)
  double first_order = 0.0;  // predicted leading term
  double residual = 0.0;
  double standard_error = 0.0;
};

struct ExpansionResult {
  std::vector<ExpansionPoint> points;
  /// Slope of log|residual| against log(scale) by least squares.
  double slope = 0.0;
  VerificationReport report;
};

/// Least-squares slope of log|residual| on log(scale).
double loglog_slope(std::span<const ExpansionPoint> points);

/// Residual E[max_i L(x + sigma z_i)] - L(x) - c_{m,sigma} ||grad L|| per sigma,
/// with the same draws reused across sigma. Passes when the residual is zero
/// within 4 s.e. at every sigma or its slope lies in [1.5, 2.5].
/// Throws KinkProximity, BadSpec on an empty or unordered sigma list.
ExpansionResult verify_maxup_expansion(const ExpansionProbe& probe);

/// (E[L(x + sigma z)] - L(x)) / sigma^2 against trace(Hessian)/2 at the
/// smallest sigma, tolerance 4 s.e. + fd_tolerance. Antithetic pairs.
ExpansionResult verify_avg_aug_expansion(const ExpansionProbe& probe, double fd_tolerance = 1e-3,
                                         double h = 1e-4);

/// ||g||_q for q in [1, inf]. Throws BadExponent.
double dual_norm(std::span<const double> g, double q);

/// Conjugate exponent p/(p-1), with 1 <-> inf.
double conjugate_exponent(double p);

/// Euclidean projection onto the l1 ball of radius r.
void project_l1_ball(std::span<double> v, double r);

struct AdversarialProbe {
  ScalarField field;
  Tensor x;
  double p = 2.0;                   // 1, 2 or inf
  std::vector<double> radii;        // strictly decreasing
  int steps = 20;
};

/// max over ||delta||_p <= r of L(x + delta) by projected gradient ascent
/// (step r/10) from the first-order maximizer and from zero; best value seen.
double adversarial_inner_max(const ScalarField& field, std::span<const double> x, double p,
                             double r, int steps = 20);

/// Residual max L(x + delta) - L(x) - r ||grad L||_q per radius.
ExpansionResult verify_adversarial_expansion(const AdversarialProbe& probe);

/// R sigma_xi E[max of q standard normals], by quadrature. Throws NonConvergence.
double compute_G(std::size_t q, double R, double sigma_xi);

struct RademacherResult {
  Estimate rn_f;
  Estimate rn_ftilde;
  Estimate difference;  // rn_ftilde - rn_f, paired
  double G = 0.0;
  double bound = 0.0;   // rn_f + G / (2 sqrt n)
  VerificationReport report;
};

/// Rademacher complexities of the norm-R linear class and its worst-of-q
/// Gaussian-augmented version on binary data. Throws EmptyDataset.
RademacherResult empirical_rademacher(const Dataset& data, double R, std::size_t q,
                                      double sigma_xi, const McConfig& mc);

/// Mean over examples of 1 - Phi(m_i / sigma_xi)^q with m_i = y theta^T x / ||theta||.
/// Throws ZeroVector, EmptyDataset.
double closed_form_worst_case_01(std::span<const double> theta, const Dataset& data, std::size_t q,
                                 double sigma_xi);

/// Brute force: a random example, q full Gaussian copies, max of the 0-1 losses.
Estimate sampled_worst_case_01(std::span<const double> theta, const Dataset& data, std::size_t q,
                               double sigma_xi, const McConfig& mc);

struct GapRow {
  std::size_t q = 0;
  double complexity = 0.0;  // L_phi G_{q,R} / sqrt(n)
  double train_gap = 0.0;
  double test_gap = 0.0;
  double train_gap_clean = 0.0;  // baseline: clean loss
  double test_gap_clean = 0.0;
  double train_se = 0.0;
  double test_se = 0.0;
};

struct GapTable {
  std::vector<GapRow> rows;
  bool monotone = false;           // both gaps nondecreasing in q
  bool train_below_test = false;   // Train_Gap_q < Test_Gap_q for every q >= 2
  std::string loss_note;
};

/// Worst-of-q minus single-copy loss on train (plus the complexity term) and on
/// the held-out set, with the copies shared across q. Throws EmptyDataset.
GapTable gap_experiment(const Dataset& train, const Dataset& test, std::span<const double> theta,
                        std::span<const std::size_t> q_list, double L_phi, double R,
                        double sigma_xi, const Loss& loss, const McConfig& mc);

std::string gap_csv(const GapTable& table);

/// sum_j [dL/dx_j(x + h e_j) - dL/dx_j(x - h e_j)] / (2h). Throws KinkProximity.
double hessian_trace_fd(const ScalarField& field, std::span<const double> x, double h = 1e-4);

/// scale,increase,first_order,residual,standard_error
std::string expansion_csv(const ExpansionResult& result);

}  // namespace maxup

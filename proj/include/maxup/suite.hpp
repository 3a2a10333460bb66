#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "maxup/model.hpp"
#include "maxup/theory.hpp"

namespace maxup {

struct SuiteOptions {
  /// Base Monte-Carlo budget. rademacher uses samples/100 sign vectors and
  /// gap_experiment samples/2000 draws per example.
  std::uint64_t samples = 1'000'000;
  std::uint64_t seed = 0;
};

struct CheckOutput {
  std::vector<VerificationReport> reports;
  /// (file name, contents) of auxiliary CSV tables.
  std::vector<std::pair<std::string, std::string>> files;
};

/// lemma1_band, maxup_expansion, avgaug_expansion, adversarial_expansion,
/// dual_norm, G_coherence, rademacher, worst_case_01, gap_experiment.
const std::vector<std::string>& check_names();
bool is_check_name(const std::string& name);

/// Runs one named check. Throws BadSpec for an unknown name.
CheckOutput run_check(const std::string& name, const SuiteOptions& options);

/// The k-th random probe: a tanh MLP 8-16-16-1 with logistic loss and a
/// standard normal input, label +1.
struct RandomProbe {
  Model model;
  Tensor x;
  Loss loss;
};
RandomProbe random_probe(std::uint64_t seed, std::uint64_t k);

inline constexpr std::size_t kProbeCount = 5;

}  // namespace maxup

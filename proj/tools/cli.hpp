#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "maxup/data.hpp"
#include "maxup/model.hpp"
#include "maxup/trainer.hpp"

namespace maxup::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitCheckFailed = 3;

struct Invocation {
  std::string command;
  std::optional<std::string> config_path;
  std::vector<std::string> sets;  // "dot.path=value"
  std::optional<std::uint64_t> seed;
  std::string out_dir = "maxup-out";
  std::vector<std::string> checks;
  std::optional<std::uint64_t> samples;
};

struct ModelConfig {
  ModelKind kind = ModelKind::linear;
  std::vector<std::size_t> hidden = {16};
  Activation activation = Activation::tanh;
};

struct VerifyConfig {
  std::vector<std::string> checks;  // empty means all
  std::uint64_t samples = 1'000'000;
};

struct BenchConfig {
  std::vector<Method> methods = {Method::erm, Method::avg_aug, Method::maxup, Method::ohem};
  std::size_t repeats = 3;
};

struct RunConfig {
  std::uint64_t seed = 0;
  DatasetSpec data;
  ModelConfig model;
  TrainConfig train;
  VerifyConfig verify;
  BenchConfig bench;
};

/// Sets a dot-path key, parsing the value as JSON when it parses and as a
/// string otherwise. Throws ConfigInvalid.
void apply_override(nlohmann::json& root, const std::string& assignment);

/// Reads the config file (if any), applies overrides and --seed.
nlohmann::json load_config(const Invocation& inv);

/// Validates every section; unknown keys are rejected. Throws ConfigInvalid.
RunConfig resolve(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& cfg);

Model build_model(const ModelConfig& cfg, const Dataset& train, std::uint64_t seed);

int cmd_train(const Invocation& inv, std::ostream& out, std::ostream& err);
int cmd_verify(const Invocation& inv, std::ostream& out, std::ostream& err);
int cmd_bench(const Invocation& inv, std::ostream& out, std::ostream& err);

/// Parses argv and dispatches.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace maxup::cli

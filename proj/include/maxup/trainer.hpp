#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "maxup/augment.hpp"
#include "maxup/data.hpp"
#include "maxup/model.hpp"
#include "maxup/rng.hpp"

namespace maxup {

enum class Method { erm, avg_aug, maxup, ohem };

const char* to_string(Method m) noexcept;
/// Throws ConfigInvalid quoting the bad value.
Method method_from_string(const std::string& s);

struct TrainConfig {
  Method method = Method::maxup;
  std::size_t m = 4;  // augmented copies; ignored by erm and ohem
  std::size_t batch_size = 32;
  double lr = 0.1;
  std::size_t epochs = 10;
  std::size_t warmup_epochs = 0;  // avg_aug with m = 1 before `method` engages
  std::uint64_t seed = 0;
  double weight_decay = 0.0;
  AugmentationSpec augment;
  Loss loss;
};

/// Throws ConfigInvalid.
void validate(const TrainConfig& cfg);
nlohmann::json to_json(const TrainConfig& cfg);
/// Unknown keys are rejected; throws ConfigInvalid naming the key.
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Forward evaluations and backward sweeps, one per (example, copy).
struct StepCounters {
  std::uint64_t forward = 0;
  std::uint64_t backward = 0;

  StepCounters& operator+=(const StepCounters& o) {
    forward += o.forward;
    backward += o.backward;
    return *this;
  }
};

/// One minibatch entry: the example plus its augmentation stream.
struct BatchItem {
  const LabeledExample* example;
  RngStream rng;
};
using Batch = std::vector<BatchItem>;

/// Stream for example `index` in `epoch`: (seed, augment purpose, epoch, index).
Batch make_batch(std::span<const LabeledExample> data, std::span<const std::size_t> indices,
                 std::uint64_t seed, std::uint64_t epoch);

/// Batch-averaged parameter gradient (aligned with Model::parameters()), the
/// per-example selection (copy index for maxup, example position for ohem)
/// and the minibatch objective value.
struct BatchGradient {
  std::vector<Tensor> grads;
  std::vector<std::size_t> selected;
  double objective = 0.0;
  StepCounters counters;
};

/// Lowest index among maximal values.
std::size_t argmax_lowest(std::span<const double> values);

BatchGradient erm_gradient(const Model& model, const Batch& batch, const TrainConfig& cfg);
/// Mean over m copies per example; m backward sweeps per example.
BatchGradient avg_aug_gradient(const Model& model, Batch& batch, const TrainConfig& cfg);
/// m forward passes per example, one backward sweep on the worst copy.
BatchGradient maxup_gradient(const Model& model, Batch& batch, const TrainConfig& cfg);
/// One backward sweep on the hardest example of the batch.
BatchGradient ohem_gradient(const Model& model, const Batch& batch, const TrainConfig& cfg);

/// theta <- theta - lr * (g + weight_decay * theta).
void apply_sgd(Model& model, const std::vector<Tensor>& grads, double lr, double weight_decay);

/// Each step computes its gradient, applies one SGD step to `model` and
/// returns the gradient used. Throws EmptyBatch.
BatchGradient erm_step(Model& model, const Batch& batch, const TrainConfig& cfg);
BatchGradient avg_aug_minibatch_step(Model& model, Batch& batch, const TrainConfig& cfg);
BatchGradient maxup_minibatch_step(Model& model, Batch& batch, const TrainConfig& cfg);
BatchGradient ohem_step(Model& model, const Batch& batch, const TrainConfig& cfg);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
  double mean_input_grad_norm = 0.0;
  std::uint64_t forward_count = 0;
  std::uint64_t backward_count = 0;
  bool warmup = false;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainTrace {
  std::vector<EpochRecord> epochs;
  /// Counters summed over the epochs where the configured method ran.
  StepCounters method_counters() const;
};

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
  double mean_input_grad_norm = 0.0;
};

/// Clean-data loss, accuracy and mean ||grad_x L|| over `data`.
Evaluation evaluate(const Model& model, const Loss& loss, const Dataset& data);

struct TrainResult {
  Model model;
  TrainTrace trace;
};

/// warmup_epochs of avg_aug (m = 1), then cfg.method, reshuffling every
/// epoch from (seed, shuffle purpose, epoch). Throws ConfigInvalid.
TrainResult train(Model model, const TrainTestSplit& data, const TrainConfig& cfg);

/// Seeded Fisher-Yates permutation of [0, n).
std::vector<std::size_t> permutation(std::size_t n, RngStream& rng);

std::string trace_csv(const TrainTrace& trace);
void write_trace_csv(const TrainTrace& trace, const std::string& path);

}  // namespace maxup

#include "maxup/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>

#include "maxup/error.hpp"
#include "maxup/stats.hpp"

namespace maxup {

using nlohmann::json;

const char* to_string(Method m) noexcept {
  switch (m) {
    case Method::erm: return "erm";
    case Method::avg_aug: return "avg_aug";
    case Method::maxup: return "maxup";
    case Method::ohem: return "ohem";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  for (auto m : {Method::erm, Method::avg_aug, Method::maxup, Method::ohem}) {
    if (s == to_string(m)) return m;
  }
  throw ConfigInvalid("train.method: unknown method '" + s +
                      "' (expected erm, avg_aug, maxup or ohem)");
}

void validate(const TrainConfig& cfg) {
  if (cfg.m == 0) throw ConfigInvalid("train.m: must be at least 1");
  if (cfg.batch_size == 0) throw ConfigInvalid("train.batch_size: must be at least 1");
  if (!(cfg.lr >= 0.0) || !std::isfinite(cfg.lr)) {
    throw ConfigInvalid("train.lr: must be a finite nonnegative number");
  }
  if (cfg.warmup_epochs > cfg.epochs) {
    throw ConfigInvalid("train.warmup_epochs: exceeds train.epochs");
  }
  if (!(cfg.weight_decay >= 0.0)) throw ConfigInvalid("train.weight_decay: must be nonnegative");
  if (cfg.loss.kind == LossKind::zero_one) {
    throw ConfigInvalid("train.loss.kind: zero_one is evaluation-only");
  }
  if (cfg.loss.bound && !(*cfg.loss.bound > 0.0)) {
    throw ConfigInvalid("train.loss.bound: must be positive");
  }
  try {
    validate(cfg.augment);
  } catch (const BadSpec& e) {
    throw ConfigInvalid(std::string("train.augment: ") + e.what());
  }
}

json to_json(const TrainConfig& cfg) {
  json loss{{"kind", to_string(cfg.loss.kind)}};
  loss["bound"] = cfg.loss.bound ? json(*cfg.loss.bound) : json(nullptr);
  return {{"method", to_string(cfg.method)},
          {"m", cfg.m},
          {"batch_size", cfg.batch_size},
          {"lr", cfg.lr},
          {"epochs", cfg.epochs},
          {"warmup_epochs", cfg.warmup_epochs},
          {"seed", cfg.seed},
          {"weight_decay", cfg.weight_decay},
          {"augment", to_json(cfg.augment)},
          {"loss", std::move(loss)}};
}

TrainConfig train_config_from_json(const json& j) {
  static const std::set<std::string> known = {"method", "m",      "batch_size",   "lr",
                                              "epochs", "warmup_epochs", "seed", "weight_decay",
                                              "augment", "loss"};
  if (!j.is_object()) throw ConfigInvalid("train: must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ConfigInvalid("train." + key + ": unknown key");
  }
  TrainConfig cfg;
  auto field = [&j](const char* key, auto fallback) {
    try {
      return j.value(key, fallback);
    } catch (const json::exception& e) {
      throw ConfigInvalid(std::string("train.") + key + ": " + e.what());
    }
  };
  cfg.method = method_from_string(field("method", std::string(to_string(cfg.method))));
  cfg.m = field("m", cfg.m);
  cfg.batch_size = field("batch_size", cfg.batch_size);
  cfg.lr = field("lr", cfg.lr);
  cfg.epochs = field("epochs", cfg.epochs);
  cfg.warmup_epochs = field("warmup_epochs", cfg.warmup_epochs);
  cfg.seed = field("seed", cfg.seed);
  cfg.weight_decay = field("weight_decay", cfg.weight_decay);
  if (j.contains("augment")) {
    try {
      cfg.augment = augmentation_from_json(j["augment"]);
    } catch (const ConfigInvalid& e) {
      throw ConfigInvalid(std::string("train.") + e.what());
    }
  }
  if (j.contains("loss")) {
    const auto& l = j["loss"];
    try {
      cfg.loss.kind = loss_kind_from_string(l.value("kind", std::string("logistic")));
      if (l.contains("bound") && !l["bound"].is_null()) cfg.loss.bound = l["bound"].get<double>();
    } catch (const json::exception& e) {
      throw ConfigInvalid(std::string("train.loss: ") + e.what());
    } catch (const ConfigInvalid& e) {
      throw ConfigInvalid(std::string("train.loss.kind: ") + e.what());
    }
  }
  validate(cfg);
  return cfg;
}

Batch make_batch(std::span<const LabeledExample> data, std::span<const std::size_t> indices,
                 std::uint64_t seed, std::uint64_t epoch) {
  Batch batch;
  batch.reserve(indices.size());
  for (std::size_t idx : indices) {
    batch.push_back({&data[idx], derive_stream(seed, StreamPurpose::augment, epoch, idx)});
  }
  return batch;
}

std::size_t argmax_lowest(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

namespace {

void require_nonempty(std::size_t n) {
  if (n == 0) throw EmptyBatch("minibatch is empty");
}

std::vector<Tensor> zeros_like(const Model& model) {
  std::vector<Tensor> out;
  for (const Tensor* p : model.parameters()) out.emplace_back(p->shape());
  return out;
}

void add_into(std::vector<Tensor>& acc, const std::vector<Tensor>& g) {
  for (std::size_t k = 0; k < acc.size(); ++k) {
    for (std::size_t i = 0; i < acc[k].size(); ++i) acc[k][i] += g[k][i];
  }
}

void divide(std::vector<Tensor>& acc, double denom) {
  for (auto& t : acc) {
    for (double& v : t.values()) v /= denom;
  }
}

// Pairwise sum of per-copy gradients, then divided by the copy count. Exact
// for identical copies when the count is a power of two.
std::vector<Tensor> mean_of(std::vector<std::vector<Tensor>> per_copy) {
  const double m = static_cast<double>(per_copy.size());
  for (std::size_t stride = 1; stride < per_copy.size(); stride *= 2) {
    for (std::size_t i = 0; i + stride < per_copy.size(); i += 2 * stride) {
      add_into(per_copy[i], per_copy[i + stride]);
    }
  }
  divide(per_copy[0], m);
  return std::move(per_copy[0]);
}

}  // namespace

BatchGradient erm_gradient(const Model& model, const Batch& batch, const TrainConfig& cfg) {
  require_nonempty(batch.size());
  BatchGradient out{zeros_like(model), {}, 0.0, {}};
  for (const auto& item : batch) {
    const auto lg = loss_and_gradient(model, cfg.loss, item.example->x.values(),
                                      item.example->y, true, false);
    add_into(out.grads, lg.params);
    out.objective += lg.value;
    ++out.counters.forward;
    ++out.counters.backward;
  }
  divide(out.grads, static_cast<double>(batch.size()));
  out.objective /= static_cast<double>(batch.size());
  return out;
}

BatchGradient avg_aug_gradient(const Model& model, Batch& batch, const TrainConfig& cfg) {
  require_nonempty(batch.size());
  validate(cfg.augment);
  BatchGradient out{zeros_like(model), {}, 0.0, {}};
  std::vector<double> copy;
  for (auto& item : batch) {
    std::vector<std::vector<Tensor>> per_copy;
    double loss_sum = 0.0;
    for (std::size_t i = 0; i < cfg.m; ++i) {
      sample_one(cfg.augment, item.example->x.values(), item.rng, copy);
      auto lg = loss_and_gradient(model, cfg.loss, copy, item.example->y, true, false);
      loss_sum += lg.value;
      per_copy.push_back(std::move(lg.params));
      ++out.counters.forward;
      ++out.counters.backward;
    }
    add_into(out.grads, mean_of(std::move(per_copy)));
    out.objective += loss_sum / static_cast<double>(cfg.m);
  }
  divide(out.grads, static_cast<double>(batch.size()));
  out.objective /= static_cast<double>(batch.size());
  return out;
}

BatchGradient maxup_gradient(const Model& model, Batch& batch, const TrainConfig& cfg) {
  require_nonempty(batch.size());
  validate(cfg.augment);
  BatchGradient out{zeros_like(model), {}, 0.0, {}};
  std::vector<std::vector<double>> copies(cfg.m);
  std::vector<double> losses(cfg.m);
  for (auto& item : batch) {
    for (std::size_t i = 0; i < cfg.m; ++i) {
      sample_one(cfg.augment, item.example->x.values(), item.rng, copies[i]);
      losses[i] = loss(model, cfg.loss, copies[i], item.example->y);
      ++out.counters.forward;
    }
    const std::size_t worst = argmax_lowest(losses);
    const auto lg = loss_and_gradient(model, cfg.loss, copies[worst], item.example->y, true, false);
    ++out.counters.backward;
    add_into(out.grads, lg.params);
    out.objective += losses[worst];
    out.selected.push_back(worst);
  }
  divide(out.grads, static_cast<double>(batch.size()));
  out.objective /= static_cast<double>(batch.size());
  return out;
}

BatchGradient ohem_gradient(const Model& model, const Batch& batch, const TrainConfig& cfg) {
  require_nonempty(batch.size());
  std::vector<double> losses;
  losses.reserve(batch.size());
  BatchGradient out;
  for (const auto& item : batch) {
    losses.push_back(loss(model, cfg.loss, item.example->x.values(), item.example->y));
    ++out.counters.forward;
  }
  const std::size_t hardest = argmax_lowest(losses);
  const auto& ex = *batch[hardest].example;
  auto lg = loss_and_gradient(model, cfg.loss, ex.x.values(), ex.y, true, false);
  ++out.counters.backward;
  // Same accumulate-then-divide path as the other methods, over one example.
  out.grads = zeros_like(model);
  add_into(out.grads, lg.params);
  divide(out.grads, 1.0);
  out.selected.push_back(hardest);
  out.objective = losses[hardest];
  return out;
}

void apply_sgd(Model& model, const std::vector<Tensor>& grads, double lr, double weight_decay) {
  auto params = model.parameters();
  if (params.size() != grads.size()) throw ShapeMismatch("gradient count does not match model");
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    if (!p.same_shape(grads[k])) throw ShapeMismatch("gradient shape does not match parameter");
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * (grads[k][i] + weight_decay * p[i]);
  }
}

BatchGradient erm_step(Model& model, const Batch& batch, const TrainConfig& cfg) {
  auto g = erm_gradient(model, batch, cfg);
  apply_sgd(model, g.grads, cfg.lr, cfg.weight_decay);
  return g;
}

BatchGradient avg_aug_minibatch_step(Model& model, Batch& batch, const TrainConfig& cfg) {
  auto g = avg_aug_gradient(model, batch, cfg);
  apply_sgd(model, g.grads, cfg.lr, cfg.weight_decay);
  return g;
}

BatchGradient maxup_minibatch_step(Model& model, Batch& batch, const TrainConfig& cfg) {
  auto g = maxup_gradient(model, batch, cfg);
  apply_sgd(model, g.grads, cfg.lr, cfg.weight_decay);
  return g;
}

BatchGradient ohem_step(Model& model, const Batch& batch, const TrainConfig& cfg) {
  auto g = ohem_gradient(model, batch, cfg);
  apply_sgd(model, g.grads, cfg.lr, cfg.weight_decay);
  return g;
}

StepCounters TrainTrace::method_counters() const {
  StepCounters total;
  for (const auto& e : epochs) {
    if (!e.warmup) total += StepCounters{e.forward_count, e.backward_count};
  }
  return total;
}

Evaluation evaluate(const Model& model, const Loss& loss_spec, const Dataset& data) {
  if (data.empty()) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    return {nan, nan, nan};
  }
  std::vector<double> losses, correct, norms;
  losses.reserve(data.size());
  correct.reserve(data.size());
  norms.reserve(data.size());
  for (const auto& ex : data.examples) {
    const auto lg = loss_and_gradient(model, loss_spec, ex.x.values(), ex.y, false, true);
    losses.push_back(lg.value);
    norms.push_back(norm2(lg.input.values()));
    correct.push_back(predicts_correctly(model, ex.x.values(), ex.y) ? 1.0 : 0.0);
  }
  const double n = static_cast<double>(data.size());
  return {pairwise_sum(losses) / n, pairwise_sum(correct) / n, pairwise_sum(norms) / n};
}

std::vector<std::size_t> permutation(std::size_t n, RngStream& rng) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng.uniform_index(i);
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

TrainResult train(Model model, const TrainTestSplit& data, const TrainConfig& cfg) {
  validate(cfg);
  if (data.train.empty()) throw ConfigInvalid("data: training set is empty");
  if (data.train.dim != model.input_dim()) {
    throw ConfigInvalid("model: input dimension " + std::to_string(model.input_dim()) +
                        " does not match data dimension " + std::to_string(data.train.dim));
  }
  TrainConfig warm = cfg;
  warm.method = Method::avg_aug;
  warm.m = 1;

  TrainTrace trace;
  const auto& examples = data.train.examples;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const bool warmup = epoch < cfg.warmup_epochs;
    const TrainConfig& active = warmup ? warm : cfg;
    RngStream shuffle_rng = derive_stream(cfg.seed, StreamPurpose::shuffle, epoch);
    const auto perm = permutation(examples.size(), shuffle_rng);

    StepCounters counters;
    for (std::size_t start = 0; start < perm.size(); start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, perm.size() - start);
      Batch batch = make_batch(examples, std::span(perm).subspan(start, len), cfg.seed, epoch);
      BatchGradient g;
      switch (active.method) {
        case Method::erm: g = erm_step(model, batch, active); break;
        case Method::avg_aug: g = avg_aug_minibatch_step(model, batch, active); break;
        case Method::maxup: g = maxup_minibatch_step(model, batch, active); break;
        case Method::ohem: g = ohem_step(model, batch, active); break;
      }
      counters += g.counters;
    }

    const Evaluation tr = evaluate(model, cfg.loss, data.train);
    const Evaluation te = evaluate(model, cfg.loss, data.test);
    trace.epochs.push_back({epoch, tr.loss, te.loss, tr.accuracy, te.accuracy,
                            tr.mean_input_grad_norm, counters.forward, counters.backward, warmup});
  }
  return {std::move(model), std::move(trace)};
}

std::string trace_csv(const TrainTrace& trace) {
  std::string out =
      "epoch,train_loss,test_loss,train_acc,test_acc,mean_input_grad_norm,forward_count,"
      "backward_count\n";
  char buf[512];
  for (const auto& e : trace.epochs) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%llu,%llu\n", e.epoch,
                  e.train_loss, e.test_loss, e.train_acc, e.test_acc, e.mean_input_grad_norm,
                  static_cast<unsigned long long>(e.forward_count),
                  static_cast<unsigned long long>(e.backward_count));
    out += buf;
  }
  return out;
}

void write_trace_csv(const TrainTrace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << trace_csv(trace);
}

}  // namespace maxup

#include <gtest/gtest.h>

#include <cmath>

#include "maxup/error.hpp"
#include "maxup/trainer.hpp"
#include "support.hpp"

using namespace maxup;

namespace {

TrainTestSplit small_halfspace(std::size_t n, std::uint64_t seed) {
  DatasetSpec s;
  s.n_train = n;
  s.n_test = 50;
  s.d = 4;
  s.seed = seed;
  s.theta_star = Tensor::vector({0.5, 0.5, 0.5, 0.5});
  return generate(s);
}

std::vector<double> flat_params(const Model& m) {
  std::vector<double> out;
  for (const Tensor* p : m.parameters()) out.insert(out.end(), p->data().begin(), p->data().end());
  return out;
}

void set_params(Model& m, std::span<const double> v) {
  std::size_t k = 0;
  for (Tensor* p : m.parameters())
    for (double& x : p->values()) x = v[k++];
}

std::vector<double> flat(const std::vector<Tensor>& ts) {
  std::vector<double> out;
  for (const auto& t : ts) out.insert(out.end(), t.data().begin(), t.data().end());
  return out;
}

TrainConfig base_config(Method method) {
  TrainConfig c;
  c.method = method;
  c.m = 4;
  c.batch_size = 8;
  c.lr = 0.05;
  c.epochs = 3;
  c.seed = 77;
  c.augment = AugmentationSpec::gaussian(0.3);
  return c;
}

}  // namespace

TEST(Trainer, ArgmaxLowest) {
  EXPECT_EQ(argmax_lowest(std::vector<double>{1, 3, 3, 2}), 1u);
  EXPECT_EQ(argmax_lowest(std::vector<double>{5}), 0u);
  EXPECT_EQ(argmax_lowest(std::vector<double>{-1, -1}), 0u);
}

TEST(Trainer, ErmHingeStepByHand) {
  Model m = Model::linear(Tensor::vector({0.1, -0.2}));
  const std::vector<LabeledExample> data = {{Tensor::vector({1.0, 2.0}), -1}};
  const std::vector<std::size_t> idx = {0};
  TrainConfig c;
  c.lr = 0.5;
  c.loss = {LossKind::hinge, {}};
  auto batch = make_batch(data, idx, 0, 0);
  erm_step(m, batch, c);
  // theta + lr * y * x
  EXPECT_EQ(m.layers()[0].weight.data(), (std::vector<double>{0.1 - 0.5, -0.2 - 1.0}));
  c.lr = 0.0;
  const Model before = m;
  erm_step(m, batch, c);
  EXPECT_EQ(m, before);
}

TEST(Trainer, WeightDecay) {
  Model m = Model::linear(Tensor::vector({2.0}));
  apply_sgd(m, {Tensor(Shape{1, 1})}, 0.1, 0.5);
  EXPECT_DOUBLE_EQ(m.layers()[0].weight[0], 2.0 - 0.1 * 0.5 * 2.0);
}

TEST(Trainer, EmptyBatch) {
  Model m = Model::linear(Tensor::vector({1.0}));
  Batch empty;
  const TrainConfig c;
  EXPECT_THROW(erm_step(m, empty, c), EmptyBatch);
  EXPECT_THROW(avg_aug_minibatch_step(m, empty, c), EmptyBatch);
  EXPECT_THROW(maxup_minibatch_step(m, empty, c), EmptyBatch);
  EXPECT_THROW(ohem_step(m, empty, c), EmptyBatch);
}

TEST(Trainer, MaxupUsesWorstCopyGradient) {
  auto rng = testing_support::test_rng(50);
  const auto split = small_halfspace(16, 1);
  const Model m = Model::mlp({4, 8, 1}, Activation::tanh, rng);
  TrainConfig c = base_config(Method::maxup);
  c.m = 2;
  std::vector<std::size_t> idx = {3};
  auto batch = make_batch(split.train.examples, idx, c.seed, 0);
  RngStream replay = batch[0].rng;
  const auto g = maxup_gradient(m, batch, c);
  std::vector<double> a, b;
  sample_one(c.augment, split.train.examples[3].x.values(), replay, a);
  sample_one(c.augment, split.train.examples[3].x.values(), replay, b);
  const int y = split.train.examples[3].y;
  const double la = loss(m, c.loss, a, y), lb = loss(m, c.loss, b, y);
  ASSERT_NE(la, lb);
  const auto& worst = la > lb ? a : b;
  EXPECT_EQ(g.selected[0], la > lb ? 0u : 1u);
  const auto oracle = loss_and_gradient(m, c.loss, worst, y, true, false);
  EXPECT_EQ(flat(g.grads), flat(oracle.params));
}

TEST(Trainer, MaxupObjectiveFiniteDifference) {
  auto rng = testing_support::test_rng(51);
  const auto split = small_halfspace(16, 2);
  Model m = Model::mlp({4, 6, 1}, Activation::tanh, rng);
  const TrainConfig c = base_config(Method::maxup);
  std::vector<std::size_t> idx = {0, 1, 2, 3, 4};
  const Batch proto = make_batch(split.train.examples, idx, c.seed, 0);
  Batch batch = proto;
  const auto g = maxup_gradient(m, batch, c);
  const auto theta = flat_params(m);
  auto objective = [&](std::span<const double> v) {
    Model probe = m;
    set_params(probe, v);
    Batch b = proto;
    return maxup_gradient(probe, b, c).objective;
  };
  const auto fd = testing_support::fd_gradient(objective, theta, 1e-5);
  EXPECT_LE(testing_support::rel_err(flat(g.grads), fd), 1e-5);
}

TEST(Trainer, AvgAugIsMeanOfCopyGradients) {
  auto rng = testing_support::test_rng(52);
  const auto split = small_halfspace(16, 3);
  const Model m = Model::mlp({4, 5, 1}, Activation::tanh, rng);
  TrainConfig c = base_config(Method::avg_aug);
  c.m = 3;
  std::vector<std::size_t> idx = {5};
  auto batch = make_batch(split.train.examples, idx, c.seed, 0);
  RngStream replay = batch[0].rng;
  const auto g = avg_aug_gradient(m, batch, c);
  std::vector<double> sum(flat(g.grads).size(), 0.0);
  std::vector<double> copy;
  for (int i = 0; i < 3; ++i) {
    sample_one(c.augment, split.train.examples[5].x.values(), replay, copy);
    const auto per = flat(loss_and_gradient(m, c.loss, copy, split.train.examples[5].y, true, false).params);
    for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += per[k] / 3.0;
  }
  EXPECT_LE(testing_support::rel_err(flat(g.grads), sum), 1e-14);
  EXPECT_EQ(g.counters.forward, 3u);
  EXPECT_EQ(g.counters.backward, 3u);
}

TEST(Trainer, VanishingNoiseMatchesErm) {
  const auto split = small_halfspace(16, 4);
  Model a = Model::linear(Tensor::vector({0.1, 0.2, -0.3, 0.4}));
  Model b = a;
  TrainConfig c = base_config(Method::avg_aug);
  c.m = 1;
  c.augment = AugmentationSpec::gaussian(1e-12);
  std::vector<std::size_t> idx = {0, 1, 2, 3};
  auto batch = make_batch(split.train.examples, idx, c.seed, 0);
  avg_aug_minibatch_step(a, batch, c);
  erm_step(b, batch, c);
  double dist = 0.0;
  const auto pa = flat_params(a), pb = flat_params(b);
  for (std::size_t k = 0; k < pa.size(); ++k) dist = std::max(dist, std::abs(pa[k] - pb[k]));
  EXPECT_LE(dist, 1e-9);
}

TEST(Trainer, OhemPicksHardestExample) {
  Model m = Model::linear(Tensor::vector({1.0, 0.0}));
  const std::vector<LabeledExample> data = {{Tensor::vector({1.0, 0.0}), 1},
                                            {Tensor::vector({5.0, 1.0}), -1},
                                            {Tensor::vector({2.0, 0.0}), 1}};
  std::vector<std::size_t> idx = {0, 1, 2};
  TrainConfig c;
  auto batch = make_batch(data, idx, 0, 0);
  const auto g = ohem_gradient(m, batch, c);
  EXPECT_EQ(g.selected[0], 1u);
  EXPECT_EQ(g.counters.forward, 3u);
  EXPECT_EQ(g.counters.backward, 1u);
  const auto oracle = loss_and_gradient(m, c.loss, data[1].x.values(), -1, true, false);
  EXPECT_EQ(flat(g.grads), flat(oracle.params));
}

TEST(Trainer, Counters) {
  auto rng = testing_support::test_rng(53);
  const auto split = small_halfspace(10, 5);
  const Model m = Model::mlp({4, 3, 1}, Activation::tanh, rng);
  std::vector<std::size_t> idx = {0, 1, 2, 3, 4};
  TrainConfig c = base_config(Method::maxup);
  auto b1 = make_batch(split.train.examples, idx, 1, 0);
  const auto gm = maxup_gradient(m, b1, c);
  EXPECT_EQ(gm.counters.forward, 20u);
  EXPECT_EQ(gm.counters.backward, 5u);
  auto b2 = make_batch(split.train.examples, idx, 1, 0);
  const auto ga = avg_aug_gradient(m, b2, c);
  EXPECT_EQ(ga.counters.backward, 20u);
  EXPECT_EQ(ga.counters.backward / c.m, gm.counters.backward);
}

TEST(Trainer, ScaleLeavesArgmaxUnchanged) {
  auto rng = testing_support::test_rng(54);
  const auto split = small_halfspace(10, 6);
  const Model m = Model::linear(Tensor::vector({0.3, -0.1, 0.2, 0.5}));
  const TrainConfig c = base_config(Method::maxup);
  std::vector<std::size_t> idx = {0, 1, 2, 3};
  auto batch = make_batch(split.train.examples, idx, 3, 1);
  const auto g = maxup_gradient(m, batch, c);
  auto replay = make_batch(split.train.examples, idx, 3, 1);
  std::vector<double> copy, scaled(c.m);
  for (std::size_t e = 0; e < idx.size(); ++e) {
    for (std::size_t i = 0; i < c.m; ++i) {
      sample_one(c.augment, replay[e].example->x.values(), replay[e].rng, copy);
      scaled[i] = 7.5 * loss(m, c.loss, copy, replay[e].example->y);
    }
    EXPECT_EQ(argmax_lowest(scaled), g.selected[e]);
  }
}

namespace {

std::vector<EpochRecord> strip_counts(std::vector<EpochRecord> r) {
  for (auto& e : r) e.forward_count = e.backward_count = 0;
  return r;
}

}  // namespace

TEST(Trainer, ReductionLattice) {
  auto rng = testing_support::test_rng(55);
  const auto split = small_halfspace(40, 7);
  const Model init = Model::mlp({4, 6, 1}, Activation::tanh, rng);

  TrainConfig maxup1 = base_config(Method::maxup);
  maxup1.m = 1;
  TrainConfig avg1 = maxup1;
  avg1.method = Method::avg_aug;
  const auto r1 = train(init, split, maxup1), r2 = train(init, split, avg1);
  EXPECT_EQ(r1.model, r2.model);
  EXPECT_EQ(r1.trace.epochs, r2.trace.epochs);

  TrainConfig avg_id = base_config(Method::avg_aug);
  avg_id.augment = AugmentationSpec::identity();
  TrainConfig erm = base_config(Method::erm);
  const auto r3 = train(init, split, avg_id), r4 = train(init, split, erm);
  EXPECT_EQ(r3.model, r4.model);
  EXPECT_EQ(strip_counts(r3.trace.epochs), strip_counts(r4.trace.epochs));

  TrainConfig ohem1 = base_config(Method::ohem);
  ohem1.batch_size = 1;
  TrainConfig erm1 = erm;
  erm1.batch_size = 1;
  const auto r5 = train(init, split, ohem1), r6 = train(init, split, erm1);
  EXPECT_EQ(r5.model, r6.model);
  EXPECT_EQ(r5.trace.epochs, r6.trace.epochs);
}

TEST(Trainer, WarmupEqualsEpochs) {
  const auto split = small_halfspace(20, 8);
  const Model init = Model::linear(Tensor::vector({0.0, 0.0, 0.0, 0.0}));
  TrainConfig all_warm = base_config(Method::maxup);
  all_warm.warmup_epochs = all_warm.epochs;
  TrainConfig plain = base_config(Method::avg_aug);
  plain.m = 1;
  const auto a = train(init, split, all_warm), b = train(init, split, plain);
  EXPECT_EQ(a.model, b.model);
  ASSERT_EQ(a.trace.epochs.size(), 3u);
  for (std::size_t e = 0; e < 3; ++e) {
    EXPECT_TRUE(a.trace.epochs[e].warmup);
    EXPECT_EQ(a.trace.epochs[e].train_loss, b.trace.epochs[e].train_loss);
  }
  EXPECT_EQ(a.trace.method_counters().backward, 0u);
}

TEST(Trainer, DeterministicTraceAndRecordCount) {
  const auto split = small_halfspace(30, 9);
  const Model init = Model::linear(Tensor::vector({0.1, 0.1, 0.1, 0.1}));
  TrainConfig c = base_config(Method::maxup);
  c.epochs = 4;
  c.warmup_epochs = 1;
  const auto a = train(init, split, c), b = train(init, split, c);
  EXPECT_EQ(a.trace.epochs, b.trace.epochs);
  EXPECT_EQ(trace_csv(a.trace), trace_csv(b.trace));
  EXPECT_EQ(a.trace.epochs.size(), 4u);
  EXPECT_EQ(a.trace.method_counters().backward, 3u * 30);
  EXPECT_EQ(a.trace.method_counters().forward, 3u * 30 * 4);
  c.seed = 78;
  EXPECT_NE(train(init, split, c).trace.epochs, a.trace.epochs);
}

TEST(Trainer, Permutation) {
  auto rng = testing_support::test_rng(56);
  auto p = permutation(100, rng);
  std::vector<std::size_t> sorted = p;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(sorted[i], i);
  auto r1 = testing_support::test_rng(57), r2 = testing_support::test_rng(57);
  EXPECT_EQ(permutation(50, r1), permutation(50, r2));
  EXPECT_TRUE(permutation(0, rng).empty());
}

TEST(TrainConfigJson, RoundTripAndErrors) {
  TrainConfig c = base_config(Method::ohem);
  c.loss = {LossKind::hinge, 3.0};
  const auto back = train_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_THROW(train_config_from_json({{"method", "sgd"}}), ConfigInvalid);
  EXPECT_THROW(train_config_from_json({{"m", 0}}), ConfigInvalid);
  EXPECT_THROW(train_config_from_json({{"epochs", 2}, {"warmup_epochs", 3}}), ConfigInvalid);
  EXPECT_THROW(train_config_from_json({{"lr", -1.0}}), ConfigInvalid);
  EXPECT_THROW(train_config_from_json({{"momentum", 0.9}}), ConfigInvalid);
  EXPECT_THROW(train_config_from_json({{"loss", {{"kind", "zero_one"}}}}), ConfigInvalid);
  try {
    method_from_string("adamw");
    FAIL();
  } catch (const ConfigInvalid& e) {
    EXPECT_NE(std::string(e.what()).find("adamw"), std::string::npos);
  }
}

TEST(Trainer, TrainRejectsBadData) {
  TrainTestSplit empty;
  EXPECT_THROW(train(Model::linear(Tensor::vector({1.0})), empty, TrainConfig{}), ConfigInvalid);
  const auto split = small_halfspace(10, 10);
  EXPECT_THROW(train(Model::linear(Tensor::vector({1.0})), split, TrainConfig{}), ConfigInvalid);
}

TEST(Trainer, EvaluateEmptyIsNan) {
  const Evaluation e = evaluate(Model::linear(Tensor::vector({1.0})), {}, Dataset{});
  EXPECT_TRUE(std::isnan(e.loss));
}

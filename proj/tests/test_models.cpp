#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "maxup/error.hpp"
#include "maxup/model.hpp"
#include "support.hpp"

using namespace maxup;
using testing_support::fd_gradient;
using testing_support::rel_err;

TEST(Losses, MarginValues) {
  EXPECT_EQ(margin_loss({LossKind::hinge, {}}, 0.25), 0.75);
  EXPECT_EQ(margin_loss({LossKind::hinge, {}}, 2.0), 0.0);
  EXPECT_EQ(margin_loss({LossKind::draft_hinge, {}}, -1.5), 1.5);
  EXPECT_EQ(margin_loss({LossKind::draft_hinge, {}}, 0.5), 0.0);
  EXPECT_NEAR(margin_loss({LossKind::logistic, {}}, 0.0), std::log(2.0), 1e-15);
  EXPECT_NEAR(margin_loss({LossKind::logistic, {}}, -800.0), 800.0, 1e-12);
  EXPECT_EQ(margin_loss({LossKind::zero_one, {}}, 0.0), 1.0);
  EXPECT_EQ(margin_loss({LossKind::zero_one, {}}, 1e-9), 0.0);
  EXPECT_EQ(margin_loss({LossKind::draft_hinge, 4.0}, -10.0), 4.0);
  EXPECT_EQ(margin_loss({LossKind::hinge, 4.0}, -1.0), 2.0);
}

namespace {

// Plain nested-loop forward pass.
std::vector<double> naive_forward(const Model& m, std::vector<double> h) {
  const auto& layers = m.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& w = layers[l].weight;
    std::vector<double> next(w.shape()[0]);
    for (std::size_t i = 0; i < next.size(); ++i) {
      double s = layers[l].bias ? (*layers[l].bias)[i] : 0.0;
      for (std::size_t j = 0; j < h.size(); ++j) s += w.at(i, j) * h[j];
      if (l + 1 < layers.size()) s = m.activation() == Activation::tanh ? std::tanh(s) : std::max(s, 0.0);
      next[i] = s;
    }
    h = next;
  }
  return h;
}

}  // namespace

TEST(Model, ForwardAgainstNaiveLoops) {
  auto rng = testing_support::test_rng(30);
  for (auto act : {Activation::tanh, Activation::relu}) {
    Model m = Model::mlp({6, 9, 4, 3}, act, rng);
    const Tensor x = sample_standard_normal(rng, 6);
    const auto oracle = naive_forward(m, x.data());
    const Tensor z = forward(m, x.values());
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(z[i], oracle[i], 1e-14);
  }
  EXPECT_THROW(forward(Model::mlp({6, 2, 1}, Activation::tanh, rng), std::vector<double>(5)), ShapeMismatch);
}

TEST(Model, Construction) {
  auto rng = testing_support::test_rng(31);
  Model m = Model::mlp({4, 5, 1}, Activation::relu, rng);
  EXPECT_EQ(m.parameter_count(), 4u * 5 + 5 + 5 + 1);
  EXPECT_EQ(m.parameters().size(), 4u);
  const double bound = 1.0 / std::sqrt(4.0);
  for (double v : m.layers()[0].weight.values()) EXPECT_LE(std::abs(v), bound);
  const Model lin = Model::linear(Tensor::vector({3, 4}));
  EXPECT_EQ(lin.parameter_norm(), 5.0);
  EXPECT_TRUE(lin.is_binary());
  const Model multi = Model::linear_multiclass(Tensor::matrix(2, 2, {3, 4, 1, 0}));
  EXPECT_EQ(multi.norm_2_inf(), 5.0);
  std::vector<Layer> bad = {{Tensor(Shape{3, 2}), std::nullopt}, {Tensor(Shape{1, 4}), std::nullopt}};
  EXPECT_THROW(Model(ModelKind::mlp, bad), ShapeMismatch);
}

TEST(Model, LinearHingeInputGradient) {
  const Tensor theta = Tensor::vector({0.5, -1.0, 2.0});
  const Model m = Model::linear(theta);
  const Tensor x = Tensor::vector({0.1, 0.2, 0.1});  // margin 0.05 < 1: hinge active
  for (int y : {1, -1}) {
    const Tensor g = grad_wrt_input(m, {LossKind::hinge, {}}, x, y);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(g[i], -y * theta[i]);
  }
  // Margin 1.5: flat region.
  const Tensor far = Tensor::vector({1.0, -1.0, 0.0});
  EXPECT_EQ(grad_wrt_input(m, {LossKind::hinge, {}}, far, 1), Tensor::vector({0, 0, 0}));
}

TEST(Model, InputGradientMatchesFiniteDifferences) {
  auto rng = testing_support::test_rng(32);
  for (int trial = 0; trial < 100; ++trial) {
    const Model m = Model::mlp({6, 10, 10, 1}, Activation::tanh, rng);
    const Tensor x = sample_standard_normal(rng, 6);
    const Loss loss{LossKind::logistic, {}};
    const Tensor g = grad_wrt_input(m, loss, x, 1);
    const auto fd = fd_gradient([&](std::span<const double> v) { return maxup::loss(m, loss, v, 1); },
                                x.values());
    EXPECT_LE(rel_err(g.values(), fd), 1e-6);
  }
}

TEST(Model, SoftmaxGradientMatchesFiniteDifferences) {
  auto rng = testing_support::test_rng(33);
  const Model m = Model::mlp({4, 8, 3}, Activation::tanh, rng);
  const Loss loss{LossKind::softmax_ce, {}};
  for (int y = 0; y < 3; ++y) {
    const Tensor x = sample_standard_normal(rng, 4);
    const Tensor g = grad_wrt_input(m, loss, x, y);
    const auto fd = fd_gradient([&](std::span<const double> v) { return maxup::loss(m, loss, v, y); },
                                x.values());
    EXPECT_LE(rel_err(g.values(), fd), 1e-6);
  }
}

TEST(Model, ClippedLossGradientVanishesAboveBound) {
  const Model m = Model::linear(Tensor::vector({1.0, 1.0}));
  const Loss clipped{LossKind::draft_hinge, 4.0};
  const Tensor deep = Tensor::vector({-3.0, -3.0});  // raw loss 6 > 4
  EXPECT_EQ(loss(m, clipped, deep.values(), 1), 4.0);
  EXPECT_EQ(grad_wrt_input(m, clipped, deep, 1), Tensor::vector({0, 0}));
}

TEST(Model, LabelAndLossErrors) {
  const Model bin = Model::linear(Tensor::vector({1.0}));
  const std::vector<double> x = {1.0};
  EXPECT_THROW(loss(bin, {}, x, 0), UnknownLabel);
  EXPECT_THROW(loss(bin, {LossKind::softmax_ce, {}}, x, 1), BadSpec);
  EXPECT_THROW(loss_and_gradient(bin, {LossKind::zero_one, {}}, x, 1, true, false), GradientOfZeroOne);
  const Model multi = Model::linear_multiclass(Tensor::matrix(3, 1, {1, 2, 3}));
  EXPECT_THROW(loss(multi, {LossKind::softmax_ce, {}}, x, 3), UnknownLabel);
  EXPECT_THROW(multiclass_margin_loss(multi, {LossKind::hinge, {}}, x, Tensor::vector({1, 1, 0})), NotOneHot);
  EXPECT_THROW(multiclass_margin_loss(multi, {LossKind::hinge, {}}, x, Tensor::vector({1, 0})), NotOneHot);
  EXPECT_EQ(multiclass_margin_loss(multi, {LossKind::hinge, {}}, x, Tensor::vector({0, 1, 0})),
            loss(multi, {LossKind::hinge, {}}, x, 1));
  EXPECT_THROW(loss_kind_from_string("squared"), ConfigInvalid);
}

TEST(Model, Predictions) {
  const Model bin = Model::linear(Tensor::vector({1.0, -1.0}));
  EXPECT_TRUE(predicts_correctly(bin, std::vector<double>{2.0, 1.0}, 1));
  EXPECT_FALSE(predicts_correctly(bin, std::vector<double>{1.0, 1.0}, 1));
  const Model multi = Model::linear_multiclass(Tensor::matrix(3, 1, {1, 2, 2}));
  EXPECT_TRUE(predicts_correctly(multi, std::vector<double>{1.0}, 1));
  EXPECT_FALSE(predicts_correctly(multi, std::vector<double>{1.0}, 2));
}

TEST(Model, KinkDistance) {
  const Model lin = Model::linear(Tensor::vector({1.0, 0.0}));
  EXPECT_NEAR(kink_distance(lin, {LossKind::hinge, {}}, std::vector<double>{0.7, 5.0}, 1), 0.3, 1e-15);
  EXPECT_TRUE(std::isinf(kink_distance(lin, {LossKind::logistic, {}}, std::vector<double>{0.7, 5.0}, 1)));
}

TEST(Model, CheckpointRoundTrip) {
  auto rng = testing_support::test_rng(34);
  const Model m = Model::mlp({3, 4, 2}, Activation::relu, rng);
  EXPECT_EQ(model_from_json(model_to_json(m)), m);
  const auto path = std::filesystem::temp_directory_path() / "maxup_model_roundtrip.json";
  save_model(m, path.string());
  EXPECT_EQ(load_model(path.string()), m);
  std::filesystem::remove(path);
  const Model lin = Model::linear(Tensor::vector({0.1, 1e-300, -3.0}));
  EXPECT_EQ(model_from_json(model_to_json(lin)), lin);
}

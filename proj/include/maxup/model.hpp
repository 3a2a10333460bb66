#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "maxup/autodiff.hpp"
#include "maxup/rng.hpp"
#include "maxup/tensor.hpp"

namespace maxup {

enum class ModelKind { linear, mlp };
enum class Activation { relu, tanh };

struct Layer {
  Tensor weight;               // [out, in]
  std::optional<Tensor> bias;  // [out]
};

/// Differentiable score function. output_dim() == 1 is a binary classifier
/// scoring y in {-1, +1}; output_dim() == K >= 2 scores K classes.
class Model {
 public:
  Model(ModelKind kind, std::vector<Layer> layers, Activation activation = Activation::tanh);

  /// f(x) = theta^T x, no bias.
  static Model linear(Tensor theta);
  /// f(x) = W x for a [K, d] weight, no bias.
  static Model linear_multiclass(Tensor weight);
  /// widths = {d, hidden..., out}; weights and biases drawn uniformly from
  /// [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  static Model mlp(const std::vector<std::size_t>& widths, Activation activation, RngStream& rng);

  ModelKind kind() const noexcept { return kind_; }
  Activation activation() const noexcept { return activation_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }
  std::size_t input_dim() const { return layers_.front().weight.shape()[1]; }
  std::size_t output_dim() const { return layers_.back().weight.shape()[0]; }
  bool is_binary() const { return output_dim() == 1; }

  /// Trainable tensors in order W0, b0, W1, b1, ... (absent biases skipped).
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::size_t parameter_count() const;
  double parameter_norm() const;
  /// Largest row norm of a linear model's weight (||theta||_{2,inf} with
  /// theta stored as [K, d]).
  double norm_2_inf() const;

  friend bool operator==(const Model& a, const Model& b);

 private:
  ModelKind kind_;
  std::vector<Layer> layers_;
  Activation activation_;
};

enum class LossKind { hinge, draft_hinge, logistic, softmax_ce, zero_one };

/// hinge: max(1 - s, 0); draft_hinge: max(-s, 0); logistic: log(1 + e^-s);
/// zero_one: 1{s <= 0}. `bound`, when set, clips the loss at B.
/// softmax_ce applies to multiclass models only. zero_one is evaluation-only.
struct Loss {
  LossKind kind = LossKind::logistic;
  std::optional<double> bound;
};

const char* to_string(LossKind k) noexcept;
LossKind loss_kind_from_string(const std::string& s);
const char* to_string(Activation a) noexcept;
Activation activation_from_string(const std::string& s);
const char* to_string(ModelKind k) noexcept;
ModelKind model_kind_from_string(const std::string& s);

/// phi(margin) for the margin-based kinds.
double margin_loss(const Loss& loss, double margin);

/// Scores; shape [output_dim]. Throws ShapeMismatch on a wrong input size.
Tensor forward(const Model& model, std::span<const double> x);
/// Binary score theta^T x (or the single output of an MLP).
double score(const Model& model, std::span<const double> x);

/// Loss at one example. Binary models take y in {-1, +1}; multiclass models a
/// class index. Multiclass margin kinds use the true-class score as margin.
double loss(const Model& model, const Loss& loss, std::span<const double> x, int y);

/// phi(y^T f(x)) for a one-hot y. Throws NotOneHot.
double multiclass_margin_loss(const Model& model, const Loss& loss, std::span<const double> x,
                              const Tensor& y_onehot);

/// Whether the prediction agrees with y (binary: margin > 0; multiclass:
/// lowest-index argmax equals y).
bool predicts_correctly(const Model& model, std::span<const double> x, int y);

void check_label(const Model& model, int y);

/// Records the forward pass on `tape`, using `params` (aligned with
/// Model::parameters()) and input `x`.
ad::Variable forward_on_tape(const Model& model, std::span<const ad::Variable> params,
                             ad::Variable x);
/// Records the loss on top of a score variable. Throws GradientOfZeroOne.
ad::Variable loss_on_tape(const Model& model, const Loss& loss, ad::Variable scores, int y);

struct LossGradient {
  double value = 0.0;
  std::vector<Tensor> params;  // empty unless requested
  Tensor input;                // empty unless requested
};

LossGradient loss_and_gradient(const Model& model, const Loss& loss, std::span<const double> x,
                               int y, bool want_params, bool want_input);

/// grad_x L(x, theta), same shape as x. relu and hinge kinks take derivative 0.
Tensor grad_wrt_input(const Model& model, const Loss& loss, const Tensor& x, int y);

/// Distance from the nearest non-differentiable surface at x: the smallest
/// |pre-activation| over relu units, and |kink - margin| for hinge kinds.
/// +inf for smooth models.
double kink_distance(const Model& model, const Loss& loss, std::span<const double> x, int y);

nlohmann::json model_to_json(const Model& model);
/// Throws ConfigInvalid on malformed checkpoints.
Model model_from_json(const nlohmann::json& j);
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

}  // namespace maxup

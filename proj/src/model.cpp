#include "maxup/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "maxup/error.hpp"

namespace maxup {

using nlohmann::json;

Model::Model(ModelKind kind, std::vector<Layer> layers, Activation activation)
    : kind_(kind), layers_(std::move(layers)), activation_(activation) {
  if (layers_.empty()) throw ShapeMismatch("model needs at least one layer");
  if (kind_ == ModelKind::linear && layers_.size() != 1) {
    throw ShapeMismatch("linear model must have exactly one layer");
  }
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& w = layers_[l].weight;
    if (w.rank() != 2 || w.shape()[0] == 0 || w.shape()[1] == 0) {
      throw ShapeMismatch("layer " + std::to_string(l) + " weight must be a nonempty matrix");
    }
    if (layers_[l].bias && layers_[l].bias->shape() != Shape{w.shape()[0]}) {
      throw ShapeMismatch("layer " + std::to_string(l) + " bias shape " +
                          shape_string(layers_[l].bias->shape()) + " does not match output " +
                          std::to_string(w.shape()[0]));
    }
    if (l > 0 && layers_[l - 1].weight.shape()[0] != w.shape()[1]) {
      throw ShapeMismatch("layer " + std::to_string(l) + " input " +
                          std::to_string(w.shape()[1]) + " does not chain with previous output " +
                          std::to_string(layers_[l - 1].weight.shape()[0]));
    }
  }
}

Model Model::linear(Tensor theta) {
  const std::size_t d = theta.size();
  return Model(ModelKind::linear, {Layer{Tensor(Shape{1, d}, theta.data()), std::nullopt}});
}

Model Model::linear_multiclass(Tensor weight) {
  if (weight.rank() != 2) throw ShapeMismatch("multiclass weight must be [K, d]");
  return Model(ModelKind::linear, {Layer{std::move(weight), std::nullopt}});
}

Model Model::mlp(const std::vector<std::size_t>& widths, Activation activation, RngStream& rng) {
  if (widths.size() < 2) throw ShapeMismatch("mlp needs at least input and output widths");
  std::vector<Layer> layers;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t in = widths[l], out = widths[l + 1];
    const double limit = 1.0 / std::sqrt(static_cast<double>(in));
    Tensor w(Shape{out, in});
    for (double& v : w.values()) v = limit * (2.0 * rng.uniform() - 1.0);
    Tensor b(Shape{out});
    for (double& v : b.values()) v = limit * (2.0 * rng.uniform() - 1.0);
    layers.push_back({std::move(w), std::move(b)});
  }
  return Model(ModelKind::mlp, std::move(layers), activation);
}

std::vector<Tensor*> Model::parameters() {
  std::vector<Tensor*> out;
  for (auto& layer : layers_) {
    out.push_back(&layer.weight);
    if (layer.bias) out.push_back(&*layer.bias);
  }
  return out;
}

std::vector<const Tensor*> Model::parameters() const {
  std::vector<const Tensor*> out;
  for (const auto& layer : layers_) {
    out.push_back(&layer.weight);
    if (layer.bias) out.push_back(&*layer.bias);
  }
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += p->size();
  return n;
}

double Model::parameter_norm() const {
  double s = 0.0;
  for (const auto* p : parameters()) {
    for (double v : p->values()) s += v * v;
  }
  return std::sqrt(s);
}

double Model::norm_2_inf() const {
  const Tensor& w = layers_.front().weight;
  double best = 0.0;
  for (std::size_t k = 0; k < w.shape()[0]; ++k) {
    best = std::max(best, norm2(w.values().subspan(k * w.shape()[1], w.shape()[1])));
  }
  return best;
}

bool operator==(const Model& a, const Model& b) {
  if (a.kind_ != b.kind_ || a.activation_ != b.activation_ ||
      a.layers_.size() != b.layers_.size()) {
    return false;
  }
  for (std::size_t l = 0; l < a.layers_.size(); ++l) {
    if (a.layers_[l].weight != b.layers_[l].weight || a.layers_[l].bias != b.layers_[l].bias) {
      return false;
    }
  }
  return true;
}

const char* to_string(LossKind k) noexcept {
  switch (k) {
    case LossKind::hinge: return "hinge";
    case LossKind::draft_hinge: return "draft_hinge";
    case LossKind::logistic: return "logistic";
    case LossKind::softmax_ce: return "softmax_ce";
    case LossKind::zero_one: return "zero_one";
  }
  return "?";
}

LossKind loss_kind_from_string(const std::string& s) {
  for (auto k : {LossKind::hinge, LossKind::draft_hinge, LossKind::logistic, LossKind::softmax_ce,
                 LossKind::zero_one}) {
    if (s == to_string(k)) return k;
  }
  throw ConfigInvalid("unknown loss kind '" + s + "'");
}

const char* to_string(Activation a) noexcept { return a == Activation::relu ? "relu" : "tanh"; }

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw ConfigInvalid("unknown activation '" + s + "'");
}

const char* to_string(ModelKind k) noexcept { return k == ModelKind::linear ? "linear" : "mlp"; }

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "linear") return ModelKind::linear;
  if (s == "mlp") return ModelKind::mlp;
  throw ConfigInvalid("unknown model kind '" + s + "'");
}

namespace {

double relu_value(double v) { return v > 0.0 ? v : 0.0; }

double softplus_value(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double clip(const Loss& loss, double value) {
  // Same arithmetic as the taped B - relu(B - l).
  return loss.bound ? *loss.bound - relu_value(*loss.bound - value) : value;
}

std::size_t argmax_lowest(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

double logsumexp_value(std::span<const double> v) {
  const double hi = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - hi);
  return hi + std::log(s);
}

}  // namespace

double margin_loss(const Loss& loss, double margin) {
  switch (loss.kind) {
    case LossKind::hinge: return clip(loss, relu_value(1.0 - margin));
    case LossKind::draft_hinge: return clip(loss, relu_value(-margin));
    case LossKind::logistic: return clip(loss, softplus_value(-margin));
    case LossKind::zero_one: return margin <= 0.0 ? 1.0 : 0.0;
    case LossKind::softmax_ce: break;
  }
  throw BadSpec("softmax_ce is not a margin loss");
}

void check_label(const Model& model, int y) {
  if (model.is_binary()) {
    if (y != 1 && y != -1) {
      throw UnknownLabel("binary label must be -1 or +1, got " + std::to_string(y));
    }
  } else if (y < 0 || static_cast<std::size_t>(y) >= model.output_dim()) {
    throw UnknownLabel("class label " + std::to_string(y) + " outside [0, " +
                       std::to_string(model.output_dim()) + ")");
  }
}

Tensor forward(const Model& model, std::span<const double> x) {
  if (x.size() != model.input_dim()) {
    throw ShapeMismatch("input of size " + std::to_string(x.size()) + " for model with input " +
                        std::to_string(model.input_dim()));
  }
  std::vector<double> h(x.begin(), x.end());
  std::vector<double> next;
  const auto& layers = model.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Tensor& w = layers[l].weight;
    const std::size_t out = w.shape()[0], in = w.shape()[1];
    next.assign(out, 0.0);
    for (std::size_t i = 0; i < out; ++i) {
      double s = 0.0;
      for (std::size_t t = 0; t < in; ++t) s += w[i * in + t] * h[t];
      if (layers[l].bias) s = s + (*layers[l].bias)[i];
      if (l + 1 < layers.size()) {
        s = model.activation() == Activation::relu ? relu_value(s) : std::tanh(s);
      }
      next[i] = s;
    }
    h.swap(next);
  }
  return Tensor::vector(std::move(h));
}

double score(const Model& model, std::span<const double> x) {
  if (!model.is_binary()) throw ShapeMismatch("score() needs a binary model");
  return forward(model, x)[0];
}

double loss(const Model& model, const Loss& loss, std::span<const double> x, int y) {
  check_label(model, y);
  const Tensor z = forward(model, x);
  if (model.is_binary()) {
    if (loss.kind == LossKind::softmax_ce) throw BadSpec("softmax_ce needs a multiclass model");
    return margin_loss(loss, y * z[0]);
  }
  const auto k = static_cast<std::size_t>(y);
  switch (loss.kind) {
    case LossKind::softmax_ce: {
      double picked = 0.0;
      for (std::size_t i = 0; i < z.size(); ++i) picked += z[i] * (i == k ? 1.0 : 0.0);
      return clip(loss, logsumexp_value(z.values()) - picked);
    }
    case LossKind::zero_one:
      return argmax_lowest(z.values()) == k ? 0.0 : 1.0;
    default: {
      double picked = 0.0;
      for (std::size_t i = 0; i < z.size(); ++i) picked += z[i] * (i == k ? 1.0 : 0.0);
      return margin_loss(loss, picked);
    }
  }
}

double multiclass_margin_loss(const Model& model, const Loss& loss, std::span<const double> x,
                              const Tensor& y_onehot) {
  if (y_onehot.size() != model.output_dim()) {
    throw NotOneHot("label vector of size " + std::to_string(y_onehot.size()) + " for " +
                    std::to_string(model.output_dim()) + " classes");
  }
  int ones = 0;
  for (double v : y_onehot.values()) {
    if (v == 1.0) {
      ++ones;
    } else if (v != 0.0) {
      ones = -1;
      break;
    }
  }
  if (ones != 1) throw NotOneHot("label vector is not one-hot");
  const Tensor z = forward(model, x);
  return margin_loss(loss, dot(y_onehot.values(), z.values()));
}

bool predicts_correctly(const Model& model, std::span<const double> x, int y) {
  check_label(model, y);
  const Tensor z = forward(model, x);
  if (model.is_binary()) return y * z[0] > 0.0;
  return argmax_lowest(z.values()) == static_cast<std::size_t>(y);
}

ad::Variable forward_on_tape(const Model& model, std::span<const ad::Variable> params,
                             ad::Variable x) {
  if (x.value().size() != model.input_dim()) {
    throw ShapeMismatch("input of size " + std::to_string(x.value().size()) +
                        " for model with input " + std::to_string(model.input_dim()));
  }
  std::size_t p = 0;
  ad::Variable h = x;
  const auto& layers = model.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    h = ad::matmul(params[p++], h);
    if (layers[l].bias) h = ad::add(h, params[p++]);
    if (l + 1 < layers.size()) {
      h = model.activation() == Activation::relu ? ad::relu(h) : ad::tanh(h);
    }
  }
  return h;
}

ad::Variable loss_on_tape(const Model& model, const Loss& loss, ad::Variable scores, int y) {
  check_label(model, y);
  ad::Tape& tape = *scores.tape();
  if (loss.kind == LossKind::zero_one) {
    throw GradientOfZeroOne("zero_one loss is evaluation-only");
  }
  ad::Variable value;
  if (!model.is_binary() && loss.kind == LossKind::softmax_ce) {
    Tensor onehot(Shape{model.output_dim()});
    onehot[static_cast<std::size_t>(y)] = 1.0;
    const ad::Variable picked = ad::sum(ad::mul(scores, tape.constant(std::move(onehot))));
    value = ad::sub(ad::logsumexp(scores), picked);
  } else {
    if (loss.kind == LossKind::softmax_ce) throw BadSpec("softmax_ce needs a multiclass model");
    ad::Variable margin;
    if (model.is_binary()) {
      margin = ad::scale(scores, static_cast<double>(y));
    } else {
      Tensor onehot(Shape{model.output_dim()});
      onehot[static_cast<std::size_t>(y)] = 1.0;
      margin = ad::sum(ad::mul(scores, tape.constant(std::move(onehot))));
    }
    switch (loss.kind) {
      case LossKind::hinge:
        value = ad::relu(ad::sub(tape.constant(Tensor::scalar(1.0)), margin));
        break;
      case LossKind::draft_hinge:
        value = ad::relu(ad::neg(margin));
        break;
      default:
        value = ad::softplus(ad::neg(margin));
        break;
    }
  }
  if (loss.bound) {
    const ad::Variable b = tape.constant(Tensor::scalar(*loss.bound));
    value = ad::sub(b, ad::relu(ad::sub(b, value)));
  }
  return value;
}

LossGradient loss_and_gradient(const Model& model, const Loss& loss, std::span<const double> x,
                               int y, bool want_params, bool want_input) {
  ad::Tape tape;
  std::vector<ad::Variable> params;
  for (const Tensor* p : model.parameters()) {
    params.push_back(want_params ? tape.leaf(*p) : tape.constant(*p));
  }
  Tensor xt = Tensor::vector(std::vector<double>(x.begin(), x.end()));
  const ad::Variable xv = want_input ? tape.leaf(std::move(xt)) : tape.constant(std::move(xt));
  const ad::Variable out = loss_on_tape(model, loss, forward_on_tape(model, params, xv), y);

  std::vector<ad::Variable> wrt;
  if (want_params) wrt = params;
  if (want_input) wrt.push_back(xv);
  LossGradient result;
  result.value = out.value()[0];
  if (wrt.empty()) return result;
  auto grads = tape.backward(out, wrt);
  if (want_input) {
    result.input = std::move(grads.back());
    grads.pop_back();
  }
  if (want_params) result.params = std::move(grads);
  return result;
}

Tensor grad_wrt_input(const Model& model, const Loss& loss, const Tensor& x, int y) {
  Tensor g = loss_and_gradient(model, loss, x.values(), y, false, true).input;
  return Tensor(x.shape(), g.data());
}

double kink_distance(const Model& model, const Loss& loss, std::span<const double> x, int y) {
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> h(x.begin(), x.end());
  const auto& layers = model.layers();
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
    const Tensor& w = layers[l].weight;
    const std::size_t out = w.shape()[0], in = w.shape()[1];
    std::vector<double> next(out);
    for (std::size_t i = 0; i < out; ++i) {
      double s = 0.0;
      for (std::size_t t = 0; t < in; ++t) s += w[i * in + t] * h[t];
      if (layers[l].bias) s += (*layers[l].bias)[i];
      if (model.activation() == Activation::relu) best = std::min(best, std::abs(s));
      next[i] = model.activation() == Activation::relu ? relu_value(s) : std::tanh(s);
    }
    h.swap(next);
  }
  if (loss.kind == LossKind::softmax_ce) return best;
  const Tensor z = forward(model, x);
  const double margin = model.is_binary() ? y * z[0] : z[static_cast<std::size_t>(y)];
  switch (loss.kind) {
    case LossKind::hinge: best = std::min(best, std::abs(1.0 - margin)); break;
    case LossKind::draft_hinge:
    case LossKind::zero_one: best = std::min(best, std::abs(margin)); break;
    default: break;
  }
  if (loss.bound && loss.kind != LossKind::zero_one) {
    best = std::min(best, std::abs(*loss.bound - margin_loss(Loss{loss.kind, std::nullopt}, margin)));
  }
  return best;
}

json model_to_json(const Model& model) {
  json layers = json::array();
  for (const auto& layer : model.layers()) {
    json l;
    l["shape"] = layer.weight.shape();
    l["weight"] = layer.weight.data();
    l["bias"] = layer.bias ? json(layer.bias->data()) : json(nullptr);
    layers.push_back(std::move(l));
  }
  return json{{"kind", to_string(model.kind())},
              {"activation", to_string(model.activation())},
              {"layers", std::move(layers)}};
}

Model model_from_json(const json& j) {
  try {
    const ModelKind kind = model_kind_from_string(j.at("kind").get<std::string>());
    const Activation act = activation_from_string(j.value("activation", std::string("tanh")));
    std::vector<Layer> layers;
    for (const auto& l : j.at("layers")) {
      const auto shape = l.at("shape").get<Shape>();
      Layer layer{Tensor(shape, l.at("weight").get<std::vector<double>>()), std::nullopt};
      if (!l.at("bias").is_null()) layer.bias = Tensor::vector(l.at("bias").get<std::vector<double>>());
      layers.push_back(std::move(layer));
    }
    return Model(kind, std::move(layers), act);
  } catch (const json::exception& e) {
    throw ConfigInvalid(std::string("malformed model checkpoint: ") + e.what());
  } catch (const ShapeMismatch& e) {
    throw ConfigInvalid(std::string("malformed model checkpoint: ") + e.what());
  }
}

void save_model(const Model& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << model_to_json(model).dump(2) << '\n';
}

Model load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigInvalid(std::string("malformed model checkpoint: ") + e.what());
  }
  return model_from_json(j);
}

}  // namespace maxup

#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "maxup/autodiff.hpp"
#include "maxup/model.hpp"
#include "support.hpp"

namespace testing_support {

using Graph = std::function<maxup::ad::Variable(maxup::ad::Tape&, maxup::ad::Variable)>;

// Each primitive wrapped in a small graph on a length-4 input.
inline std::vector<std::pair<std::string, Graph>> primitive_graphs() {
  namespace ad = maxup::ad;
  using maxup::Tensor;
  return {
      {"add", [](ad::Tape& t, ad::Variable x) { return ad::add(x, t.constant(Tensor::vector({0.5, -1, 2, 0.1}))); }},
      {"add_broadcast", [](ad::Tape&, ad::Variable x) { return ad::add(x, ad::sum(x)); }},
      {"sub", [](ad::Tape& t, ad::Variable x) { return ad::sub(t.constant(Tensor::vector({1, 2, 3, 4})), ad::mul(x, x)); }},
      {"mul", [](ad::Tape&, ad::Variable x) { return ad::mul(x, ad::tanh(x)); }},
      {"matmul", [](ad::Tape& t, ad::Variable x) {
         return ad::matmul(t.constant(Tensor::matrix(3, 4, {1, -2, 0.5, 1, 0, 1, 1, -1, 2, 0.3, -0.7, 1.1})), x);
       }},
      {"relu", [](ad::Tape&, ad::Variable x) { return ad::relu(x); }},
      {"tanh", [](ad::Tape&, ad::Variable x) { return ad::tanh(x); }},
      {"exp", [](ad::Tape&, ad::Variable x) { return ad::exp(x); }},
      {"log", [](ad::Tape&, ad::Variable x) { return ad::log(ad::add(ad::mul(x, x), ad::exp(x))); }},
      {"sum", [](ad::Tape&, ad::Variable x) { return ad::sum(ad::mul(x, x)); }},
      {"max_reduce", [](ad::Tape&, ad::Variable x) { return ad::max_reduce(ad::mul(x, x)); }},
      {"logsumexp", [](ad::Tape&, ad::Variable x) { return ad::logsumexp(x); }},
      {"neg", [](ad::Tape&, ad::Variable x) { return ad::neg(ad::tanh(x)); }},
      {"scale", [](ad::Tape&, ad::Variable x) { return ad::scale(ad::exp(x), -0.3); }},
      {"softplus", [](ad::Tape&, ad::Variable x) { return ad::softplus(ad::scale(x, 3.0)); }},
  };
}

// Gradient of sum(w * g(x)) for fixed weights w, against central differences.
inline double primitive_check(const Graph& g, const std::vector<double>& x, const std::vector<double>& w) {
  namespace ad = maxup::ad;
  using maxup::Tensor;
  auto eval = [&](std::span<const double> xv) {
    ad::Tape t;
    auto out = g(t, t.leaf(Tensor::vector(std::vector<double>(xv.begin(), xv.end()))));
    double s = 0.0;
    for (std::size_t i = 0; i < out.value().size(); ++i) {
      s += (out.value().size() == 1 ? 1.0 : w[i]) * out.value()[i];
    }
    return s;
  };
  ad::Tape t;
  auto leaf = t.leaf(Tensor::vector(x));
  auto out = g(t, leaf);
  auto obj = out.value().size() == 1
                 ? ad::sum(out)
                 : ad::sum(ad::mul(out, t.constant(Tensor::vector(std::vector<double>(
                                            w.begin(), w.begin() + out.value().size())))));
  std::vector<ad::Variable> wrt = {leaf};
  const auto grad = t.backward(obj, wrt);
  return rel_err(grad[0].values(), fd_gradient(eval, x));
}

// Worst relative error of g over `probes` random inputs kept 1e-3 away from
// relu kinks and max_reduce switching surfaces.
inline double primitive_probe_error(const Graph& g, maxup::RngStream& rng, int probes = 100) {
  const std::size_t n = 4;
  double worst = 0.0;
  int checked = 0;
  while (checked < probes) {
    std::vector<double> x(n), w(n);
    for (double& v : x) v = rng.normal();
    for (double& v : w) v = rng.normal();
    bool near_kink = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (std::abs(x[i]) < 1e-3) near_kink = true;
      for (std::size_t j = 0; j < i; ++j) {
        if (std::abs(x[i] * x[i] - x[j] * x[j]) < 1e-3) near_kink = true;
      }
    }
    if (near_kink) continue;
    worst = std::max(worst, primitive_check(g, x, w));
    ++checked;
  }
  return worst;
}

// Worst relative error of the tape parameter gradient of a random tanh MLP
// with logistic loss, over every parameter tensor.
inline double mlp_parameter_error(maxup::RngStream& rng, int y) {
  using namespace maxup;
  Model model = Model::mlp({5, 7, 6, 1}, Activation::tanh, rng);
  const Tensor x = sample_standard_normal(rng, 5);
  const Loss loss{LossKind::logistic, std::nullopt};
  const auto lg = loss_and_gradient(model, loss, x.values(), y, true, false);
  auto params = model.parameters();
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    auto f = [&](std::span<const double> v) {
      const Tensor saved = p;
      std::copy(v.begin(), v.end(), p.values().begin());
      const double out = maxup::loss(model, loss, x.values(), y);
      p = saved;
      return out;
    };
    const std::vector<double> current(p.values().begin(), p.values().end());
    worst = std::max(worst, rel_err(lg.params[k].values(), fd_gradient(f, current)));
  }
  return worst;
}

// Worst relative error of the input gradient of a random tanh MLP.
inline double mlp_input_error(maxup::RngStream& rng, int y) {
  using namespace maxup;
  const Model model = Model::mlp({6, 10, 10, 1}, Activation::tanh, rng);
  const Tensor x = sample_standard_normal(rng, 6);
  const Loss loss{LossKind::logistic, std::nullopt};
  const Tensor g = grad_wrt_input(model, loss, x, y);
  const auto fd = fd_gradient([&](std::span<const double> v) { return maxup::loss(model, loss, v, y); },
                              x.values());
  return rel_err(g.values(), fd);
}

}  // namespace testing_support

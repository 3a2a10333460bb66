#include "maxup/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "maxup/error.hpp"

namespace maxup::ad {

const char* primitive_name(Primitive p) noexcept {
  switch (p) {
    case Primitive::add: return "add";
    case Primitive::sub: return "sub";
    case Primitive::mul: return "mul";
    case Primitive::matmul: return "matmul";
    case Primitive::relu: return "relu";
    case Primitive::tanh: return "tanh";
    case Primitive::exp: return "exp";
    case Primitive::log: return "log";
    case Primitive::sum: return "sum";
    case Primitive::max_reduce: return "max_reduce";
    case Primitive::logsumexp: return "logsumexp";
    case Primitive::neg: return "neg";
    case Primitive::scale: return "scale";
    case Primitive::softplus: return "softplus";
  }
  return "?";
}

const Tensor& Variable::value() const {
  if (!tape_) throw std::logic_error("use of a default-constructed Variable");
  return tape_->value(index_);
}

namespace {

double softplus_value(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

int arity_of(Primitive op) {
  switch (op) {
    case Primitive::add:
    case Primitive::sub:
    case Primitive::mul:
    case Primitive::matmul:
      return 2;
    default:
      return 1;
  }
}

// Result shape of a broadcasting elementwise binary op.
Shape broadcast_shape(const Tensor& a, const Tensor& b, Primitive op) {
  if (a.shape() == b.shape()) return a.shape();
  if (b.is_scalar()) return a.shape();
  if (a.is_scalar()) return b.shape();
  throw ShapeMismatch(std::string(primitive_name(op)) + ": cannot combine " +
                      shape_string(a.shape()) + " and " + shape_string(b.shape()));
}

// Broadcast read: single-element tensors repeat.
inline double bget(const Tensor& t, std::size_t i) { return t.size() == 1 ? t[0] : t[i]; }

Tensor matmul_value(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || (b.rank() != 1 && b.rank() != 2) || a.shape()[1] != b.shape()[0]) {
    throw ShapeMismatch("matmul: cannot multiply " + shape_string(a.shape()) + " by " +
                        shape_string(b.shape()));
  }
  const std::size_t m = a.shape()[0], k = a.shape()[1];
  const std::size_t n = b.rank() == 1 ? 1 : b.shape()[1];
  Tensor out(b.rank() == 1 ? Shape{m} : Shape{m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < k; ++t) s += a[i * k + t] * b[t * n + j];
      out[i * n + j] = s;
    }
  }
  return out;
}

// Adds `g` into the adjoint slot, reducing over broadcast dimensions.
void accumulate(Tensor& slot, const Tensor& target_value, const Tensor& g) {
  if (slot.shape() != target_value.shape()) slot = Tensor(target_value.shape());
  if (g.size() == slot.size()) {
    for (std::size_t i = 0; i < g.size(); ++i) slot[i] += g[i];
  } else {
    double s = 0.0;
    for (double v : g.values()) s += v;
    slot[0] += s;
  }
}

}  // namespace

void Tape::check_owned(const Variable& v) const {
  if (v.tape_ != this || v.index_ >= nodes_.size()) {
    throw std::invalid_argument("variable does not belong to this tape");
  }
}

Variable Tape::leaf(Tensor value) {
  nodes_.push_back({Kind::leaf, Primitive::add, 0, 0, 0, 1.0, 0, std::move(value)});
  return Variable(this, nodes_.size() - 1);
}

Variable Tape::constant(Tensor value) {
  nodes_.push_back({Kind::constant, Primitive::add, 0, 0, 0, 1.0, 0, std::move(value)});
  return Variable(this, nodes_.size() - 1);
}

Variable Tape::record(Primitive op, std::span<const Variable> inputs, double alpha) {
  const int arity = arity_of(op);
  if (static_cast<int>(inputs.size()) != arity) {
    throw ShapeMismatch(std::string(primitive_name(op)) + " expects " + std::to_string(arity) +
                        " input(s)");
  }
  for (const auto& v : inputs) check_owned(v);
  const Tensor& a = nodes_[inputs[0].index_].value;
  const Tensor* b = arity == 2 ? &nodes_[inputs[1].index_].value : nullptr;

  Tensor out;
  std::size_t argmax = 0;
  switch (op) {
    case Primitive::add:
    case Primitive::sub:
    case Primitive::mul: {
      out = Tensor(broadcast_shape(a, *b, op));
      for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = bget(a, i), y = bget(*b, i);
        out[i] = op == Primitive::add ? x + y : op == Primitive::sub ? x - y : x * y;
      }
      break;
    }
    case Primitive::matmul:
      out = matmul_value(a, *b);
      break;
    case Primitive::relu:
    case Primitive::tanh:
    case Primitive::exp:
    case Primitive::log:
    case Primitive::neg:
    case Primitive::scale:
    case Primitive::softplus: {
      out = Tensor(a.shape());
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double x = a[i];
        switch (op) {
          case Primitive::relu: out[i] = x > 0.0 ? x : 0.0; break;
          case Primitive::tanh: out[i] = std::tanh(x); break;
          case Primitive::exp: out[i] = std::exp(x); break;
          case Primitive::log: out[i] = std::log(x); break;
          case Primitive::neg: out[i] = -x; break;
          case Primitive::scale: out[i] = alpha * x; break;
          default: out[i] = softplus_value(x); break;
        }
      }
      break;
    }
    case Primitive::sum: {
      double s = 0.0;
      for (double v : a.values()) s += v;
      out = Tensor::scalar(s);
      break;
    }
    case Primitive::max_reduce: {
      if (a.empty()) throw ShapeMismatch("max_reduce of an empty tensor");
      for (std::size_t i = 1; i < a.size(); ++i) {
        if (a[i] > a[argmax]) argmax = i;
      }
      out = Tensor::scalar(a[argmax]);
      break;
    }
    case Primitive::logsumexp: {
      if (a.empty()) throw ShapeMismatch("logsumexp of an empty tensor");
      const double hi = *std::max_element(a.values().begin(), a.values().end());
      double s = 0.0;
      for (double v : a.values()) s += std::exp(v - hi);
      out = Tensor::scalar(hi + std::log(s));
      break;
    }
  }
  nodes_.push_back({Kind::op, op, inputs[0].index_, arity == 2 ? inputs[1].index_ : 0, arity,
                    alpha, argmax, std::move(out)});
  return Variable(this, nodes_.size() - 1);
}

std::vector<Tensor> Tape::backward(Variable output, std::span<const Variable> wrt) const {
  check_owned(output);
  for (const auto& v : wrt) check_owned(v);
  if (!nodes_[output.index_].value.is_scalar()) {
    throw NotScalarOutput("backward from output of shape " +
                          shape_string(nodes_[output.index_].value.shape()));
  }

  std::vector<Tensor> adj(output.index_ + 1);
  adj[output.index_] = Tensor(nodes_[output.index_].value.shape(), 1.0);

  for (std::size_t idx = output.index_ + 1; idx-- > 0;) {
    const Node& node = nodes_[idx];
    const Tensor& g = adj[idx];
    if (node.kind != Kind::op || g.shape() != node.value.shape()) continue;

    const Tensor& a = nodes_[node.lhs].value;
    const Tensor& y = node.value;
    switch (node.op) {
      case Primitive::add:
      case Primitive::sub:
      case Primitive::mul: {
        const Tensor& b = nodes_[node.rhs].value;
        Tensor ga(y.shape()), gb(y.shape());
        for (std::size_t i = 0; i < y.size(); ++i) {
          if (node.op == Primitive::add) {
            ga[i] = g[i];
            gb[i] = g[i];
          } else if (node.op == Primitive::sub) {
            ga[i] = g[i];
            gb[i] = -g[i];
          } else {
            ga[i] = g[i] * bget(b, i);
            gb[i] = g[i] * bget(a, i);
          }
        }
        accumulate(adj[node.lhs], a, ga);
        accumulate(adj[node.rhs], b, gb);
        break;
      }
      case Primitive::matmul: {
        const Tensor& b = nodes_[node.rhs].value;
        const std::size_t m = a.shape()[0], k = a.shape()[1];
        const std::size_t n = b.rank() == 1 ? 1 : b.shape()[1];
        Tensor ga(a.shape()), gb(b.shape());
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t t = 0; t < k; ++t) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * b[t * n + j];
            ga[i * k + t] = s;
          }
        }
        for (std::size_t t = 0; t < k; ++t) {
          for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < m; ++i) s += a[i * k + t] * g[i * n + j];
            gb[t * n + j] = s;
          }
        }
        accumulate(adj[node.lhs], a, ga);
        accumulate(adj[node.rhs], b, gb);
        break;
      }
      case Primitive::sum:
      case Primitive::max_reduce:
      case Primitive::logsumexp: {
        Tensor ga(a.shape());
        const double gs = g[0];
        if (node.op == Primitive::sum) {
          for (std::size_t i = 0; i < a.size(); ++i) ga[i] = gs;
        } else if (node.op == Primitive::max_reduce) {
          ga[node.argmax] = gs;
        } else {
          for (std::size_t i = 0; i < a.size(); ++i) ga[i] = gs * std::exp(a[i] - y[0]);
        }
        accumulate(adj[node.lhs], a, ga);
        break;
      }
      default: {
        Tensor ga(a.shape());
        for (std::size_t i = 0; i < a.size(); ++i) {
          double d = 0.0;
          switch (node.op) {
            case Primitive::relu: d = a[i] > 0.0 ? 1.0 : 0.0; break;
            case Primitive::tanh: d = 1.0 - y[i] * y[i]; break;
            case Primitive::exp: d = y[i]; break;
            case Primitive::log: d = 1.0 / a[i]; break;
            case Primitive::neg: d = -1.0; break;
            case Primitive::scale: d = node.alpha; break;
            case Primitive::softplus: d = sigmoid(a[i]); break;
            default: break;
          }
          ga[i] = g[i] * d;
        }
        accumulate(adj[node.lhs], a, ga);
        break;
      }
    }
  }

  std::vector<Tensor> grads;
  grads.reserve(wrt.size());
  for (const auto& v : wrt) {
    const Tensor& value = nodes_[v.index_].value;
    if (v.index_ <= output.index_ && adj[v.index_].shape() == value.shape()) {
      grads.push_back(adj[v.index_]);
    } else {
      grads.emplace_back(value.shape());
    }
  }
  return grads;
}

namespace {
Variable unary(Primitive op, Variable a, double alpha = 1.0) {
  if (!a.tape()) throw std::logic_error("use of a default-constructed Variable");
  const Variable in[] = {a};
  return a.tape()->record(op, in, alpha);
}
Variable binary(Primitive op, Variable a, Variable b) {
  if (!a.tape()) throw std::logic_error("use of a default-constructed Variable");
  const Variable in[] = {a, b};
  return a.tape()->record(op, in);
}
}  // namespace

Variable add(Variable a, Variable b) { return binary(Primitive::add, a, b); }
Variable sub(Variable a, Variable b) { return binary(Primitive::sub, a, b); }
Variable mul(Variable a, Variable b) { return binary(Primitive::mul, a, b); }
Variable matmul(Variable a, Variable b) { return binary(Primitive::matmul, a, b); }
Variable relu(Variable a) { return unary(Primitive::relu, a); }
Variable tanh(Variable a) { return unary(Primitive::tanh, a); }
Variable exp(Variable a) { return unary(Primitive::exp, a); }
Variable log(Variable a) { return unary(Primitive::log, a); }
Variable sum(Variable a) { return unary(Primitive::sum, a); }
Variable max_reduce(Variable a) { return unary(Primitive::max_reduce, a); }
Variable logsumexp(Variable a) { return unary(Primitive::logsumexp, a); }
Variable neg(Variable a) { return unary(Primitive::neg, a); }
Variable scale(Variable a, double alpha) { return unary(Primitive::scale, a, alpha); }
Variable softplus(Variable a) { return unary(Primitive::softplus, a); }

}  // namespace maxup::ad

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "maxup/tensor.hpp"

namespace maxup::ad {

enum class Primitive {
  add,
  sub,
  mul,
  matmul,
  relu,
  tanh,
  exp,
  log,
  sum,
  max_reduce,
  logsumexp,
  neg,
  scale,
  softplus,
};

const char* primitive_name(Primitive p) noexcept;

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Variable {
 public:
  Variable() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t index() const noexcept { return index_; }
  Tape* tape() const noexcept { return tape_; }

 private:
  friend class Tape;
  Variable(Tape* tape, std::size_t index) : tape_(tape), index_(index) {}

  Tape* tape_ = nullptr;
  std::size_t index_ = 0;
};

/// Append-only record of eagerly evaluated primitives. Nodes are stored in
/// creation order, which is a topological order of the graph.
///
/// Elementwise binary primitives accept equal shapes or a single-element
/// operand, which broadcasts. matmul takes [m,k]x[k,n] or [m,k]x[k].
/// sum, max_reduce and logsumexp reduce to a rank-0 scalar; max_reduce picks
/// the lowest index among ties and routes the whole gradient there.
class Tape {
 public:
  Variable leaf(Tensor value);
  Variable constant(Tensor value);

  /// Evaluates `op` on `inputs` and registers its backward rule. `alpha` is the
  /// factor used by Primitive::scale. Throws ShapeMismatch.
  Variable record(Primitive op, std::span<const Variable> inputs, double alpha = 1.0);

  /// Reverse sweep from a single-element output. Returns one gradient per
  /// entry of `wrt`, shaped like that variable; unreachable variables get
  /// zeros. Throws NotScalarOutput, or std::invalid_argument for a foreign
  /// variable.
  std::vector<Tensor> backward(Variable output, std::span<const Variable> wrt) const;

  std::size_t size() const noexcept { return nodes_.size(); }
  const Tensor& value(std::size_t index) const { return nodes_.at(index).value; }

 private:
  enum class Kind { leaf, constant, op };
  struct Node {
    Kind kind;
    Primitive op;
    std::size_t lhs;
    std::size_t rhs;
    int arity;
    double alpha;
    std::size_t argmax;
    Tensor value;
  };

  void check_owned(const Variable& v) const;

  std::vector<Node> nodes_;
};

Variable add(Variable a, Variable b);
Variable sub(Variable a, Variable b);
Variable mul(Variable a, Variable b);
Variable matmul(Variable a, Variable b);
Variable relu(Variable a);
Variable tanh(Variable a);
Variable exp(Variable a);
Variable log(Variable a);
Variable sum(Variable a);
Variable max_reduce(Variable a);
Variable logsumexp(Variable a);
Variable neg(Variable a);
Variable scale(Variable a, double alpha);
/// log(1 + e^x), evaluated without overflow.
Variable softplus(Variable a);

}  // namespace maxup::ad

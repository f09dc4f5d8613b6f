#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "acmg/tensor.hpp"

namespace acmg::ad {

/// A learnable tensor with its gradient slot.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  void zero_grad();
};

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode autodiff record for one forward pass.
///
/// Nodes are appended in forward order; backward() walks them in exact
/// reverse order, so every node's gradient is complete before it is
/// propagated. Gradients accumulate additively into inputs, and leaf
/// parameters accumulate into Parameter::grad. A tape built with
/// record=false only computes values (used for finite differences and
/// inference). Single-threaded; one forward/backward pair per tape.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, Var out, const Matrix& out_grad)>;

  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  Var constant(Matrix value);
  /// A leaf whose gradient can be read back with grad() after backward().
  Var input(Matrix value);
  /// A leaf aliasing p.value; backward() adds into p.grad. p must outlive the tape.
  Var param(Parameter& p);
  /// Read-only use of a parameter: no gradient is collected.
  Var param(const Parameter& p);

  /// Appends an op node. `inputs` decides whether the node needs a gradient.
  Var push(const char* op, Matrix value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var push(const char* op, Matrix value, const std::vector<Var>& inputs, BackwardFn backward);

  void backward(Var root);
  void backward(Var root, const Matrix& seed);

  const Matrix& value(Var v) const;
  const Matrix& value(std::size_t id) const;
  /// Gradient of a node after backward(); empty matrix if none reached it.
  const Matrix& grad(Var v) const;
  bool needs_grad(Var v) const { return nodes_[v.id()].needs_grad; }

  /// Adds g into the gradient buffer of v (no-op for nodes without gradient).
  void accumulate(Var v, const Matrix& g);
  /// Mutable gradient buffer of v, zero-initialized on first use.
  Matrix& grad_buffer(Var v);

  std::size_t size() const { return nodes_.size(); }
  const char* op_name(std::size_t id) const { return nodes_[id].op; }
  const std::vector<std::size_t>& last_backward_order() const { return order_; }

  /// Description of the earliest node holding a NaN/Inf, if any.
  std::optional<std::string> first_non_finite() const;

 private:
  struct Node {
    const char* op = "";
    Matrix owned;
    const Matrix* external = nullptr;
    Matrix grad;
    bool needs_grad = false;
    Parameter* sink = nullptr;
    BackwardFn backward;

    const Matrix& value() const { return external ? *external : owned; }
  };

  Var push_impl(const char* op, Matrix value, const Var* inputs, std::size_t n_inputs,
                BackwardFn backward);

  bool record_;
  std::vector<Node> nodes_;
  std::vector<std::size_t> order_;
};

// Differentiable primitives. All inputs must live on the same tape.

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
/// a[T x n] + row[1 x n] broadcast over rows.
Var add_row(Var a, Var row);
Var mul(Var a, Var b);
/// a[T x n] (elementwise) row[1 x n] broadcast over rows.
Var mul_row(Var a, Var row);
/// Row i of a[T x n] scaled by g[i] for g[T x 1].
Var scale_rows(Var a, Var g);
Var scale(Var a, double s);
/// a + c where c is a constant of the same shape.
Var add_constant(Var a, const Matrix& c);
/// a (elementwise) c for a constant c of the same shape.
Var mul_constant(Var a, const Matrix& c);
Var sigmoid(Var x);
/// Tanh-approximated GELU.
Var gelu(Var x);
Var concat_cols(Var a, Var b);
Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(Var a, std::size_t start, std::size_t count);
Var softmax_rows(Var x);
/// Per-row standardization without affine parameters.
Var layernorm_rows(Var x, double eps = 1e-5);
/// Sum of all entries, as a 1x1 matrix.
Var sum(Var x);
/// -weight * log softmax(logits)[label] for a 1 x C logits row.
Var cross_entropy(Var logits, std::size_t label, double weight = 1.0);

double gelu(double x);

}  // namespace acmg::ad

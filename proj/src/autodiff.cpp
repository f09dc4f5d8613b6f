#include "acmg/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "acmg/error.hpp"

namespace acmg::ad {

void Parameter::zero_grad() {
  if (grad.rows() != value.rows() || grad.cols() != value.cols()) {
    grad = Matrix(value.rows(), value.cols());
  } else {
    grad.fill(0.0);
  }
}

const Matrix& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Matrix value) {
  Node n;
  n.op = "constant";
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::input(Matrix value) {
  Node n;
  n.op = "input";
  n.owned = std::move(value);
  n.needs_grad = record_;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::param(Parameter& p) {
  Node n;
  n.op = "param";
  n.external = &p.value;
  n.needs_grad = record_;
  n.sink = record_ ? &p : nullptr;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::param(const Parameter& p) {
  Node n;
  n.op = "param";
  n.external = &p.value;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::push(const char* op, Matrix value, std::initializer_list<Var> inputs,
               BackwardFn backward) {
  return push_impl(op, std::move(value), inputs.begin(), inputs.size(), std::move(backward));
}

Var Tape::push(const char* op, Matrix value, const std::vector<Var>& inputs, BackwardFn backward) {
  return push_impl(op, std::move(value), inputs.data(), inputs.size(), std::move(backward));
}

Var Tape::push_impl(const char* op, Matrix value, const Var* inputs, std::size_t n_inputs,
                    BackwardFn backward) {
  Node n;
  n.op = op;
  n.owned = std::move(value);
  if (record_) {
    for (std::size_t k = 0; k < n_inputs; ++k) {
      const Var& v = inputs[k];
      if (v.tape() != this) throw std::logic_error(std::string(op) + ": operand from another tape");
      n.needs_grad = n.needs_grad || nodes_[v.id()].needs_grad;
    }
    if (n.needs_grad) n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

void Tape::backward(Var root) {
  const Matrix& v = value(root);
  backward(root, Matrix(v.rows(), v.cols(), 1.0));
}

void Tape::backward(Var root, const Matrix& seed) {
  if (!record_) throw std::logic_error("backward on a non-recording tape");
  const Matrix& rv = value(root);
  if (seed.rows() != rv.rows() || seed.cols() != rv.cols()) {
    throw ShapeError("backward seed " + seed.shape_str() + " does not match root " + rv.shape_str());
  }
  order_.clear();
  accumulate(root, seed);
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.grad.empty()) continue;
    order_.push_back(i);
    if (n.backward) n.backward(*this, Var(this, i), n.grad);
    if (n.sink) {
      Parameter& p = *n.sink;
      if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) p.zero_grad();
      for (std::size_t k = 0; k < n.grad.size(); ++k) p.grad[k] += n.grad[k];
    }
  }
}

const Matrix& Tape::value(Var v) const { return nodes_[v.id()].value(); }
const Matrix& Tape::value(std::size_t id) const { return nodes_[id].value(); }

const Matrix& Tape::grad(Var v) const { return nodes_[v.id()].grad; }

Matrix& Tape::grad_buffer(Var v) {
  Node& n = nodes_[v.id()];
  if (n.grad.empty()) n.grad = Matrix(n.value().rows(), n.value().cols());
  return n.grad;
}

void Tape::accumulate(Var v, const Matrix& g) {
  if (!nodes_[v.id()].needs_grad) return;
  Matrix& buf = grad_buffer(v);
  if (buf.rows() != g.rows() || buf.cols() != g.cols()) {
    throw ShapeError(std::string("gradient for ") + nodes_[v.id()].op + " has shape " +
                     g.shape_str() + ", expected " + buf.shape_str());
  }
  for (std::size_t k = 0; k < g.size(); ++k) buf[k] += g[k];
}

std::optional<std::string> Tape::first_non_finite() const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Matrix& v = nodes_[i].value();
    if (!v.all_finite()) {
      return "node " + std::to_string(i) + " (" + nodes_[i].op + ") " + v.shape_str();
    }
  }
  return std::nullopt;
}

namespace {

Tape& same_tape(const char* op, Var a, Var b) {
  if (a.tape() != b.tape() || a.tape() == nullptr) {
    throw std::logic_error(std::string(op) + ": operands on different tapes");
  }
  return *a.tape();
}

void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch, " + a.shape_str() + " vs " +
                     b.shape_str());
  }
}

// c += a * b^T
void gemm_acc_nt(Matrix& c, const Matrix& a, const Matrix& b) {
  const std::size_t k = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* ar = a.data() + i * k;
    double* cr = c.data() + i * c.cols();
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* br = b.data() + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += ar[p] * br[p];
      cr[j] += s;
    }
  }
}

// c += a^T * b
void gemm_acc_tn(Matrix& c, const Matrix& a, const Matrix& b) {
  const std::size_t n = b.cols();
  for (std::size_t p = 0; p < a.rows(); ++p) {
    const double* br = b.data() + p * n;
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double api = a(p, i);
      if (api == 0.0) continue;
      double* cr = c.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) cr[j] += api * br[j];
    }
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = same_tape("matmul", a, b);
  return t.push("matmul", acmg::matmul(a.value(), b.value()), {a, b},
                [a, b](Tape& t, Var, const Matrix& g) {
                  if (t.needs_grad(a)) gemm_acc_nt(t.grad_buffer(a), g, b.value());
                  if (t.needs_grad(b)) gemm_acc_tn(t.grad_buffer(b), a.value(), g);
                });
}

Var transpose(Var a) {
  Tape& t = *a.tape();
  return t.push("transpose", acmg::transpose(a.value()), {a},
                [a](Tape& t, Var, const Matrix& g) { t.accumulate(a, acmg::transpose(g)); });
}

Var add(Var a, Var b) {
  Tape& t = same_tape("add", a, b);
  return t.push("add", acmg::add(a.value(), b.value()), {a, b},
                [a, b](Tape& t, Var, const Matrix& g) {
                  t.accumulate(a, g);
                  t.accumulate(b, g);
                });
}

Var add_row(Var a, Var row) {
  Tape& t = same_tape("add_row", a, row);
  const Matrix& av = a.value();
  const Matrix& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != av.cols()) {
    throw ShapeError("add_row: row " + rv.shape_str() + " does not broadcast over " +
                     av.shape_str());
  }
  Matrix out = av;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += rv[j];
  }
  return t.push("add_row", std::move(out), {a, row}, [a, row](Tape& t, Var, const Matrix& g) {
    t.accumulate(a, g);
    if (t.needs_grad(row)) {
      Matrix& gr = t.grad_buffer(row);
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) gr[j] += g(i, j);
    }
  });
}

Var mul(Var a, Var b) {
  Tape& t = same_tape("mul", a, b);
  return t.push("mul", acmg::elementwise_mul(a.value(), b.value()), {a, b},
                [a, b](Tape& t, Var, const Matrix& g) {
                  if (t.needs_grad(a)) t.accumulate(a, acmg::elementwise_mul(g, b.value()));
                  if (t.needs_grad(b)) t.accumulate(b, acmg::elementwise_mul(g, a.value()));
                });
}

Var mul_row(Var a, Var row) {
  Tape& t = same_tape("mul_row", a, row);
  const Matrix& av = a.value();
  const Matrix& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != av.cols()) {
    throw ShapeError("mul_row: row " + rv.shape_str() + " does not broadcast over " +
                     av.shape_str());
  }
  Matrix out = av;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] *= rv[j];
  }
  return t.push("mul_row", std::move(out), {a, row}, [a, row](Tape& t, Var, const Matrix& g) {
    const Matrix& av = a.value();
    const Matrix& rv = row.value();
    if (t.needs_grad(a)) {
      Matrix& ga = t.grad_buffer(a);
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) ga(i, j) += g(i, j) * rv[j];
    }
    if (t.needs_grad(row)) {
      Matrix& gr = t.grad_buffer(row);
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) gr[j] += g(i, j) * av(i, j);
    }
  });
}

Var scale_rows(Var a, Var g) {
  Tape& t = same_tape("scale_rows", a, g);
  const Matrix& av = a.value();
  const Matrix& gv = g.value();
  if (gv.cols() != 1 || gv.rows() != av.rows()) {
    throw ShapeError("scale_rows: gate column " + gv.shape_str() + " does not match rows of " +
                     av.shape_str());
  }
  Matrix out = av;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (double& v : out.row(i)) v *= gv[i];
  return t.push("scale_rows", std::move(out), {a, g}, [a, g](Tape& t, Var, const Matrix& go) {
    const Matrix& av = a.value();
    const Matrix& gv = g.value();
    if (t.needs_grad(a)) {
      Matrix& ga = t.grad_buffer(a);
      for (std::size_t i = 0; i < go.rows(); ++i)
        for (std::size_t j = 0; j < go.cols(); ++j) ga(i, j) += go(i, j) * gv[i];
    }
    if (t.needs_grad(g)) {
      Matrix& gg = t.grad_buffer(g);
      for (std::size_t i = 0; i < go.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < go.cols(); ++j) s += go(i, j) * av(i, j);
        gg[i] += s;
      }
    }
  });
}

Var scale(Var a, double s) {
  Tape& t = *a.tape();
  Matrix out = a.value();
  for (double& v : out.values()) v *= s;
  return t.push("scale", std::move(out), {a}, [a, s](Tape& t, Var, const Matrix& g) {
    Matrix& ga = t.grad_buffer(a);
    for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] * s;
  });
}

Var add_constant(Var a, const Matrix& c) {
  Tape& t = *a.tape();
  return t.push("add_constant", acmg::add(a.value(), c), {a},
                [a](Tape& t, Var, const Matrix& g) { t.accumulate(a, g); });
}

Var mul_constant(Var a, const Matrix& c) {
  Tape& t = *a.tape();
  require_same_shape("mul_constant", a.value(), c);
  return t.push("mul_constant", acmg::elementwise_mul(a.value(), c), {a},
                [a, c](Tape& t, Var, const Matrix& g) {
                  Matrix& ga = t.grad_buffer(a);
                  for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] * c[k];
                });
}

Var sigmoid(Var x) {
  Tape& t = *x.tape();
  return t.push("sigmoid", acmg::sigmoid(x.value()), {x}, [x](Tape& t, Var y, const Matrix& g) {
    const Matrix& yv = y.value();
    Matrix& gx = t.grad_buffer(x);
    for (std::size_t k = 0; k < g.size(); ++k) gx[k] += g[k] * yv[k] * (1.0 - yv[k]);
  });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

double gelu_grad(double x) {
  const double u = kGeluC * (x + kGeluA * x * x * x);
  const double th = std::tanh(u);
  return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
}
}  // namespace

double gelu(double x) {
  return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
}

Var gelu(Var x) {
  Tape& t = *x.tape();
  Matrix out = x.value();
  for (double& v : out.values()) v = gelu(v);
  return t.push("gelu", std::move(out), {x}, [x](Tape& t, Var, const Matrix& g) {
    const Matrix& xv = x.value();
    Matrix& gx = t.grad_buffer(x);
    for (std::size_t k = 0; k < g.size(); ++k) gx[k] += g[k] * gelu_grad(xv[k]);
  });
}

Var concat_cols(Var a, Var b) { return concat_cols(std::vector<Var>{a, b}); }

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  Tape& t = *parts.front().tape();
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    if (p.tape() != &t) throw std::logic_error("concat_cols: operands on different tapes");
    if (p.rows() != rows) {
      throw ShapeError("concat_cols: row counts differ, " + parts.front().value().shape_str() +
                       " vs " + p.value().shape_str());
    }
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Matrix& pv = p.value();
    for (std::size_t i = 0; i < rows; ++i)
      std::copy(pv.row(i).begin(), pv.row(i).end(), out.row(i).begin() + static_cast<std::ptrdiff_t>(off));
    off += pv.cols();
  }
  return t.push("concat_cols", std::move(out), parts,
                [parts](Tape& t, Var, const Matrix& g) {
                  std::size_t off = 0;
                  for (const Var& p : parts) {
                    const std::size_t c = p.cols();
                    if (t.needs_grad(p)) {
                      Matrix& gp = t.grad_buffer(p);
                      for (std::size_t i = 0; i < g.rows(); ++i)
                        for (std::size_t j = 0; j < c; ++j) gp(i, j) += g(i, off + j);
                    }
                    off += c;
                  }
                });
}

Var slice_cols(Var a, std::size_t start, std::size_t count) {
  Tape& t = *a.tape();
  const Matrix& av = a.value();
  if (start + count > av.cols()) {
    throw ShapeError("slice_cols: columns [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") out of range for " + av.shape_str());
  }
  Matrix out(av.rows(), count);
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = av(i, start + j);
  return t.push("slice_cols", std::move(out), {a}, [a, start](Tape& t, Var, const Matrix& g) {
    Matrix& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) ga(i, start + j) += g(i, j);
  });
}

Var softmax_rows(Var x) {
  Tape& t = *x.tape();
  return t.push("softmax_rows", acmg::softmax_rows(x.value()), {x},
                [x](Tape& t, Var y, const Matrix& g) {
                  const Matrix& yv = y.value();
                  Matrix& gx = t.grad_buffer(x);
                  for (std::size_t i = 0; i < g.rows(); ++i) {
                    double dot = 0.0;
                    for (std::size_t j = 0; j < g.cols(); ++j) dot += g(i, j) * yv(i, j);
                    for (std::size_t j = 0; j < g.cols(); ++j) gx(i, j) += yv(i, j) * (g(i, j) - dot);
                  }
                });
}

Var layernorm_rows(Var x, double eps) {
  Tape& t = *x.tape();
  const Matrix& xv = x.value();
  Matrix out = acmg::layernorm_rows(xv, eps);
  // Per-row inverse standard deviation, needed by backward.
  Matrix inv(xv.rows(), 1);
  const double n = static_cast<double>(xv.cols());
  for (std::size_t i = 0; i < xv.rows(); ++i) {
    double mean = 0.0;
    for (double v : xv.row(i)) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : xv.row(i)) var += (v - mean) * (v - mean);
    inv[i] = 1.0 / std::sqrt(var / n + eps);
  }
  return t.push("layernorm_rows", std::move(out), {x},
                [x, inv = std::move(inv)](Tape& t, Var y, const Matrix& g) {
                  const Matrix& yv = y.value();
                  Matrix& gx = t.grad_buffer(x);
                  const double n = static_cast<double>(g.cols());
                  for (std::size_t i = 0; i < g.rows(); ++i) {
                    double sg = 0.0;
                    double sgy = 0.0;
                    for (std::size_t j = 0; j < g.cols(); ++j) {
                      sg += g(i, j);
                      sgy += g(i, j) * yv(i, j);
                    }
                    for (std::size_t j = 0; j < g.cols(); ++j) {
                      gx(i, j) += inv[i] / n * (n * g(i, j) - sg - yv(i, j) * sgy);
                    }
                  }
                });
}

Var sum(Var x) {
  Tape& t = *x.tape();
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  return t.push("sum", Matrix(1, 1, s), {x}, [x](Tape& t, Var, const Matrix& g) {
    Matrix& gx = t.grad_buffer(x);
    for (double& v : gx.values()) v += g[0];
  });
}

Var cross_entropy(Var logits, std::size_t label, double weight) {
  Tape& t = *logits.tape();
  const Matrix& z = logits.value();
  if (z.rows() != 1) throw ShapeError("cross_entropy: logits must be a row, got " + z.shape_str());
  if (label >= z.cols()) {
    throw LabelError("label " + std::to_string(label) + " out of range for " +
                     std::to_string(z.cols()) + " classes");
  }
  Matrix p = acmg::softmax_rows(z);
  const double mx = *std::max_element(z.values().begin(), z.values().end());
  double lse = 0.0;
  for (double v : z.values()) lse += std::exp(v - mx);
  lse = mx + std::log(lse);
  const double loss = weight * (lse - z[label]);
  return t.push("cross_entropy", Matrix(1, 1, loss), {logits},
                [logits, label, weight, p = std::move(p)](Tape& t, Var, const Matrix& g) {
                  Matrix& gz = t.grad_buffer(logits);
                  for (std::size_t j = 0; j < p.cols(); ++j) {
                    const double target = j == label ? 1.0 : 0.0;
                    gz[j] += g[0] * weight * (p[j] - target);
                  }
                });
}

}  // namespace acmg::ad

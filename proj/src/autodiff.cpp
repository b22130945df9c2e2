// SPDX-License-Identifier: Apache-2.0
#include "treereg/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "treereg/sparsemax.hpp"

namespace treereg {

namespace {

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_log_sigmoid(double x) {
  // log(sigmoid(x)) = -softplus(-x)
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

void require_same(const char* op, Var a, Var b) {
  if (!a.value().same_shape(b.value())) throw ShapeError(shape_message(op, a.value(), b.value()));
}

template <typename F>
Matrix map(const Matrix& m, F f) {
  Matrix out(m.rows(), m.cols());
  auto src = m.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return out;
}

template <typename F>
Matrix zip(const Matrix& a, const Matrix& b, F f) {
  Matrix out(a.rows(), a.cols());
  auto x = a.data();
  auto y = b.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) dst[i] = f(x[i], y[i]);
  return out;
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kAddRow: return "add_row";
    case Op::kScale: return "scale";
    case Op::kAddScalar: return "add_scalar";
    case Op::kMatMul: return "matmul";
    case Op::kMatMulBT: return "matmul_bt";
    case Op::kSigmoid: return "sigmoid";
    case Op::kTanh: return "tanh";
    case Op::kLeakyRelu: return "leaky_relu";
    case Op::kLogSigmoid: return "log_sigmoid";
    case Op::kSoftmaxRows: return "softmax_rows";
    case Op::kLog: return "log";
    case Op::kExp: return "exp";
    case Op::kAbs: return "abs";
    case Op::kSquare: return "square";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kColSum: return "col_sum";
    case Op::kConcatCols: return "concat_cols";
    case Op::kSliceCols: return "slice_cols";
    case Op::kReshape: return "reshape";
    case Op::kBceLogits: return "bce_logits";
    case Op::kSparsemax: return "sparsemax";
  }
  return "unknown";
}

const Matrix& Var::value() const { return graph_->value(*this); }
const Matrix& Var::grad() const { return graph_->grad(*this); }

const Matrix& forward(Var root) { return root.value(); }

Var Graph::constant(Matrix v) { return record(Op::kLeaf, {}, std::move(v)); }

Var Graph::parameter(Matrix v) {
  Var out = record(Op::kLeaf, {}, std::move(v));
  nodes_[out.id()].needs_grad = true;
  return out;
}

Var Graph::record(Op op, std::vector<std::uint32_t> inputs, Matrix value, double scalar,
                  std::size_t aux) {
  Node n;
  n.op = op;
  n.needs_grad = std::any_of(inputs.begin(), inputs.end(),
                             [this](std::uint32_t i) { return nodes_[i].needs_grad; });
  n.inputs = std::move(inputs);
  n.value = std::move(value);
  n.scalar = scalar;
  n.aux = aux;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

const Matrix& Graph::grad(Var v) {
  Node& n = nodes_[v.id()];
  if (n.grad.empty() && !n.value.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
  return n.grad;
}

Matrix& Graph::grad_buffer(std::uint32_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() != n.value.size()) n.grad = Matrix(n.value.rows(), n.value.cols());
  return n.grad;
}

void Graph::backward(Var root) {
  const Matrix& rv = nodes_[root.id()].value;
  if (rv.rows() != 1 || rv.cols() != 1) {
    throw ShapeError(std::string("backward: root must be 1x1, got ") + rv.shape_string());
  }
  for (auto& n : nodes_) n.grad = Matrix();
  grad_buffer(root.id())[0] = 1.0;
  for (std::int64_t id = root.id(); id >= 0; --id) {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad || n.inputs.empty() || n.grad.empty()) continue;
    backprop_node(static_cast<std::uint32_t>(id));
  }
}

void Graph::backprop_node(std::uint32_t id) {
  // Copy what we need: grad_buffer() on inputs may not reallocate nodes_, but
  // keep references local to this node stable anyway.
  const Node& n = nodes_[id];
  const Matrix& g = n.grad;
  const Matrix& y = n.value;
  auto in = [&](std::size_t k) -> const Matrix& { return nodes_[n.inputs[k]].value; };
  auto wants = [&](std::size_t k) { return nodes_[n.inputs[k]].needs_grad; };
  auto acc = [&](std::size_t k) -> Matrix& { return grad_buffer(n.inputs[k]); };

  switch (n.op) {
    case Op::kLeaf:
      break;
    case Op::kAdd:
      for (std::size_t k = 0; k < 2; ++k) {
        if (!wants(k)) continue;
        auto d = acc(k).data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
      }
      break;
    case Op::kSub:
      if (wants(0)) {
        auto d = acc(0).data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
      }
      if (wants(1)) {
        auto d = acc(1).data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] -= g[i];
      }
      break;
    case Op::kMul:
      if (wants(0)) {
        const Matrix& b = in(1);
        auto d = acc(0).data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * b[i];
      }
      if (wants(1)) {
        const Matrix& a = in(0);
        auto d = acc(1).data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * a[i];
      }
      break;
    case Op::kAddRow:
      if (wants(0)) {
        auto d = acc(0).data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
      }
      if (wants(1)) {
        Matrix& d = acc(1);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < g.cols(); ++c) d[c] += g(r, c);
      }
      break;
    case Op::kScale: {
      auto d = acc(0).data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += n.scalar * g[i];
      break;
    }
    case Op::kAddScalar:
    case Op::kReshape: {
      auto d = acc(0).data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
      break;
    }
    case Op::kMatMul:
      if (wants(0)) matmul_bt_acc(g, in(1), acc(0));
      if (wants(1)) matmul_at_acc(in(0), g, acc(1));
      break;
    case Op::kMatMulBT:
      if (wants(0)) matmul_acc(g, in(1), acc(0));
      if (wants(1)) matmul_at_acc(g, in(0), acc(1));
      break;
    case Op::kSigmoid: {
      auto d = acc(0).data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * y[i] * (1.0 - y[i]);
      break;
    }
    case Op::kTanh: {
      auto d = acc(0).data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * (1.0 - y[i] * y[i]);
      break;
    }
    case Op::kLeakyRelu: {
      const Matrix& x = in(0);
      auto d = acc(0).data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * (x[i] > 0.0 ? 1.0 : kLeakySlope);
      break;
    }
    case Op::kLogSigmoid: {
      const Matrix& x = in(0);
      auto d = acc(0).data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * stable_sigmoid(-x[i]);
      break;
    }
    case Op::kSoftmaxRows: {
      Matrix& d = acc(0);
      for (std::size_t r = 0; r < y.rows(); ++r) {
        double dot = 0.0;
        for (std::size_t c = 0; c < y.cols(); ++c) dot += g(r, c) * y(r, c);
        for (std::size_t c = 0; c < y.cols(); ++c) d(r, c) += y(r, c) * (g(r, c) - dot);
      }
      break;
    }
    case Op::kLog: {
      const Matrix& x = in(0);
      auto d = acc(0).data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] / x[i];
      break;
    }
    case Op::kExp: {
      auto d = acc(0).data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * y[i];
      break;
    }
    case Op::kAbs: {
      const Matrix& x = in(0);
      auto d = acc(0).data();
      for (std::size_t i = 0; i < d.size(); ++i)
        d[i] += g[i] * (x[i] > 0.0 ? 1.0 : (x[i] < 0.0 ? -1.0 : 0.0));
      break;
    }
    case Op::kSquare: {
      const Matrix& x = in(0);
      auto d = acc(0).data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += 2.0 * x[i] * g[i];
      break;
    }
    case Op::kSum:
    case Op::kMean: {
      const double s = n.op == Op::kSum ? g[0] : g[0] / static_cast<double>(in(0).size());
      auto d = acc(0).data();
      for (double& v : d) v += s;
      break;
    }
    case Op::kColSum: {
      Matrix& d = acc(0);
      for (std::size_t r = 0; r < d.rows(); ++r)
        for (std::size_t c = 0; c < d.cols(); ++c) d(r, c) += g[c];
      break;
    }
    case Op::kConcatCols: {
      std::size_t offset = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        const std::size_t w = in(k).cols();
        if (wants(k)) {
          Matrix& d = acc(k);
          for (std::size_t r = 0; r < d.rows(); ++r)
            for (std::size_t c = 0; c < w; ++c) d(r, c) += g(r, offset + c);
        }
        offset += w;
      }
      break;
    }
    case Op::kSliceCols: {
      Matrix& d = acc(0);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) d(r, n.aux + c) += g(r, c);
      break;
    }
    case Op::kBceLogits: {
      if (!wants(0)) break;
      const Matrix& z = in(0);
      const Matrix& t = in(1);
      const Matrix& m = in(2);
      auto d = acc(0).data();
      const double s = g[0] / n.scalar;
      for (std::size_t i = 0; i < d.size(); ++i) {
        if (m[i] == 0.0) continue;
        const double p = stable_sigmoid(z[i]);
        if (p < kProbClip || p > 1.0 - kProbClip) continue;
        d[i] += s * m[i] * (p - t[i]);
      }
      break;
    }
    case Op::kSparsemax: {
      // Jacobian of the projection: on the support S, dp = g - mean_S(g).
      auto d = acc(0).data();
      double support_sum = 0.0;
      std::size_t support = 0;
      for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] > 0.0) {
          support_sum += g[i];
          ++support;
        }
      }
      const double avg = support == 0 ? 0.0 : support_sum / static_cast<double>(support);
      for (std::size_t i = 0; i < y.size(); ++i)
        if (y[i] > 0.0) d[i] += g[i] - avg;
      break;
    }
  }
}

// ---------------------------------------------------------------------------
// Op recording

Var add(Var a, Var b) {
  require_same("add", a, b);
  return a.graph().record(Op::kAdd, {a.id(), b.id()},
                          zip(a.value(), b.value(), [](double x, double y) { return x + y; }));
}

Var sub(Var a, Var b) {
  require_same("sub", a, b);
  return a.graph().record(Op::kSub, {a.id(), b.id()},
                          zip(a.value(), b.value(), [](double x, double y) { return x - y; }));
}

Var mul(Var a, Var b) {
  require_same("mul", a, b);
  return a.graph().record(Op::kMul, {a.id(), b.id()},
                          zip(a.value(), b.value(), [](double x, double y) { return x * y; }));
}

Var add_row(Var a, Var row) {
  const Matrix& x = a.value();
  const Matrix& b = row.value();
  if (b.rows() != 1 || b.cols() != x.cols()) throw ShapeError(shape_message("add_row", x, b));
  Matrix out = x;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += b[c];
  return a.graph().record(Op::kAddRow, {a.id(), row.id()}, std::move(out));
}

Var scale(Var a, double c) {
  return a.graph().record(Op::kScale, {a.id()}, map(a.value(), [c](double x) { return c * x; }),
                          c);
}

Var add_scalar(Var a, double c) {
  return a.graph().record(Op::kAddScalar, {a.id()},
                          map(a.value(), [c](double x) { return x + c; }), c);
}

Var matmul(Var a, Var b) {
  return a.graph().record(Op::kMatMul, {a.id(), b.id()}, matmul(a.value(), b.value()));
}

Var matmul_bt(Var a, Var b) {
  return a.graph().record(Op::kMatMulBT, {a.id(), b.id()}, matmul_bt(a.value(), b.value()));
}

Var sigmoid(Var a) {
  return a.graph().record(Op::kSigmoid, {a.id()}, map(a.value(), stable_sigmoid));
}

Var tanh(Var a) {
  return a.graph().record(Op::kTanh, {a.id()},
                          map(a.value(), [](double x) { return std::tanh(x); }));
}

Var leaky_relu(Var a) {
  return a.graph().record(Op::kLeakyRelu, {a.id()}, map(a.value(), [](double x) {
                            return x > 0.0 ? x : kLeakySlope * x;
                          }));
}

Var log_sigmoid(Var a) {
  return a.graph().record(Op::kLogSigmoid, {a.id()}, map(a.value(), stable_log_sigmoid));
}

Var softmax_rows(Var a) {
  const Matrix& x = a.value();
  Matrix out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < x.cols(); ++c) mx = std::max(mx, x(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) {
      out(r, c) = std::exp(x(r, c) - mx);
      z += out(r, c);
    }
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) /= z;
  }
  return a.graph().record(Op::kSoftmaxRows, {a.id()}, std::move(out));
}

Var log(Var a) {
  return a.graph().record(Op::kLog, {a.id()}, map(a.value(), [](double x) { return std::log(x); }));
}

Var exp(Var a) {
  return a.graph().record(Op::kExp, {a.id()}, map(a.value(), [](double x) { return std::exp(x); }));
}

Var abs(Var a) {
  return a.graph().record(Op::kAbs, {a.id()}, map(a.value(), [](double x) { return std::fabs(x); }));
}

Var square(Var a) {
  return a.graph().record(Op::kSquare, {a.id()}, map(a.value(), [](double x) { return x * x; }));
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.graph().record(Op::kSum, {a.id()}, Matrix(1, 1, s));
}

Var mean(Var a) {
  const Matrix& x = a.value();
  if (x.size() == 0) throw ShapeError("mean: empty operand");
  double s = 0.0;
  for (double v : x.data()) s += v;
  return a.graph().record(Op::kMean, {a.id()}, Matrix(1, 1, s / static_cast<double>(x.size())));
}

Var col_sum(Var a) {
  const Matrix& x = a.value();
  Matrix out(1, x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) out[c] += x(r, c);
  return a.graph().record(Op::kColSum, {a.id()}, std::move(out));
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  std::vector<std::uint32_t> ids;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw ShapeError(shape_message("concat_cols", parts[0].value(), p.value()));
    cols += p.cols();
    ids.push_back(p.id());
  }
  Matrix out(rows, cols);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Matrix& v = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < v.cols(); ++c) out(r, offset + c) = v(r, c);
    offset += v.cols();
  }
  return parts[0].graph().record(Op::kConcatCols, std::move(ids), std::move(out));
}

Var slice_cols(Var a, std::size_t start, std::size_t count) {
  const Matrix& x = a.value();
  if (start + count > x.cols()) {
    throw ShapeError("slice_cols: [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") out of " + x.shape_string());
  }
  Matrix out(x.rows(), count);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < count; ++c) out(r, c) = x(r, start + c);
  return a.graph().record(Op::kSliceCols, {a.id()}, std::move(out), 0.0, start);
}

Var reshape(Var a, std::size_t rows, std::size_t cols) {
  return a.graph().record(Op::kReshape, {a.id()}, a.value().reshaped(rows, cols));
}

Var bce_logits(Var logits, Var targets, Var mask, double normalizer) {
  require_same("bce_logits", logits, targets);
  require_same("bce_logits", logits, mask);
  if (!(normalizer > 0.0)) throw std::invalid_argument("bce_logits: normalizer must be positive");
  const Matrix& z = logits.value();
  const Matrix& t = targets.value();
  const Matrix& m = mask.value();
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (m[i] == 0.0) continue;
    const double p = std::clamp(stable_sigmoid(z[i]), kProbClip, 1.0 - kProbClip);
    total -= m[i] * (t[i] * std::log(p) + (1.0 - t[i]) * std::log(1.0 - p));
  }
  return logits.graph().record(Op::kBceLogits, {logits.id(), targets.id(), mask.id()},
                               Matrix(1, 1, total / normalizer), normalizer);
}

Var sparsemax(Var a) {
  const Matrix& x = a.value();
  if (x.rows() != 1) throw ShapeError("sparsemax: expected a row vector, got " + x.shape_string());
  std::vector<double> p = treereg::sparsemax(x.data());
  const std::size_t n = p.size();
  return a.graph().record(Op::kSparsemax, {a.id()}, Matrix(1, n, std::move(p)));
}

}  // namespace treereg

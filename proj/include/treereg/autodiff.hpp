// SPDX-License-Identifier: Apache-2.0
//
// Define-by-run reverse-mode automatic differentiation over dense matrices.
// Every op evaluates eagerly when it is recorded, so forward() only reads the
// cached value at the root. A Graph is built per minibatch and discarded.
#pragma once

#include <cstdint>
#include <deque>
#include <span>
#include <vector>

#include "treereg/matrix.hpp"

namespace treereg {

class Graph;

enum class Op : std::uint8_t {
  kLeaf,
  kAdd,
  kSub,
  kMul,
  kAddRow,
  kScale,
  kAddScalar,
  kMatMul,
  kMatMulBT,
  kSigmoid,
  kTanh,
  kLeakyRelu,
  kLogSigmoid,
  kSoftmaxRows,
  kLog,
  kExp,
  kAbs,
  kSquare,
  kSum,
  kMean,
  kColSum,
  kConcatCols,
  kSliceCols,
  kReshape,
  kBceLogits,
  kSparsemax,
};

const char* op_name(Op op);

inline constexpr double kLeakySlope = 0.01;
inline constexpr double kProbClip = 1e-7;

/// Handle to a node recorded on a Graph.
class Var {
 public:
  Var() = default;
  Var(Graph* g, std::uint32_t id) : graph_(g), id_(id) {}

  Graph& graph() const { return *graph_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }
  const Matrix& value() const;
  const Matrix& grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  Graph* graph_ = nullptr;
  std::uint32_t id_ = 0;
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Leaf that does not receive a gradient.
  Var constant(Matrix v);
  /// Leaf that receives a gradient in backward().
  Var parameter(Matrix v);

  const Matrix& value(Var v) const { return nodes_[v.id()].value; }
  /// Gradient of the last backward() root w.r.t. v; zeros if v did not
  /// influence the root.
  const Matrix& grad(Var v);
  bool requires_grad(Var v) const { return nodes_[v.id()].needs_grad; }
  Op op(Var v) const { return nodes_[v.id()].op; }
  std::size_t size() const { return nodes_.size(); }

  /// Accumulates d(root)/d(node) into every node upstream of root. The root
  /// must be 1x1.
  void backward(Var root);

  // Recording interface used by the op functions below.
  Var record(Op op, std::vector<std::uint32_t> inputs, Matrix value, double scalar = 0.0,
             std::size_t aux = 0);

 private:
  struct Node {
    Op op = Op::kLeaf;
    std::vector<std::uint32_t> inputs;
    Matrix value;
    Matrix grad;
    double scalar = 0.0;
    std::size_t aux = 0;
    bool needs_grad = false;
  };

  void backprop_node(std::uint32_t id);
  Matrix& grad_buffer(std::uint32_t id);

  // deque keeps references to earlier values stable while recording.
  std::deque<Node> nodes_;
};

/// Cached forward value at a root (all values are computed on recording).
const Matrix& forward(Var root);

Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Elementwise product.
Var mul(Var a, Var b);
/// a (NxM) + b (1xM) broadcast over rows.
Var add_row(Var a, Var row);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var matmul(Var a, Var b);
/// a * transpose(b); the natural layout for weights stored (out x in).
Var matmul_bt(Var a, Var b);
Var sigmoid(Var a);
Var tanh(Var a);
Var leaky_relu(Var a);
/// log(sigmoid(a)), computed without overflow.
Var log_sigmoid(Var a);
/// Row-wise softmax with max-subtraction.
Var softmax_rows(Var a);
Var log(Var a);
Var exp(Var a);
Var abs(Var a);
Var square(Var a);
/// Sum of all entries, 1x1.
Var sum(Var a);
/// Mean of all entries, 1x1.
Var mean(Var a);
/// Column sums, 1xM.
Var col_sum(Var a);
Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t start, std::size_t count);
Var reshape(Var a, std::size_t rows, std::size_t cols);
/// Masked binary cross-entropy on logits, summed and divided by normalizer.
/// Probabilities are clipped to [1e-7, 1 - 1e-7]; the clipped region has zero
/// gradient. targets and mask are constant leaves with the logits' shape.
Var bce_logits(Var logits, Var targets, Var mask, double normalizer);
/// Euclidean projection of a 1xR row onto the probability simplex.
Var sparsemax(Var a);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double c, Var a) { return scale(a, c); }

}  // namespace treereg

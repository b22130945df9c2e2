// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "treereg/autodiff.hpp"
#include "treereg/matrix.hpp"

namespace treereg {

struct Segment {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t offset = 0;
  std::size_t size() const { return rows * cols; }
};

/// Named, shaped segments laid end to end in one flat array of values.
class ParamVector {
 public:
  ParamVector() = default;

  /// Appends a zero-filled segment and returns its index.
  std::size_t add(std::string name, std::size_t rows, std::size_t cols);

  std::size_t size() const { return values_.size(); }
  const std::vector<Segment>& segments() const { return segments_; }
  std::size_t index_of(const std::string& name) const;
  const Segment& segment(const std::string& name) const { return segments_[index_of(name)]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::span<double> values(std::size_t seg);
  std::span<const double> values(std::size_t seg) const;

  Matrix matrix(std::size_t seg) const;
  Matrix matrix(const std::string& name) const { return matrix(index_of(name)); }
  void set(std::size_t seg, const Matrix& m);

  /// Copy of the flat value array.
  std::vector<double> flatten() const { return values_; }
  /// Replaces every value; length must equal size().
  void unflatten(std::span<const double> flat);

  /// Flat indices covered by the named segments, in the order given.
  std::vector<std::size_t> indices(std::span<const std::string> names) const;

  /// Uniform Glorot initialization in [-a, a], a = sqrt(6 / (fan_in + fan_out)),
  /// treating a segment's rows as fan-out and cols as fan-in.
  void glorot(std::size_t seg, std::mt19937_64& rng);

  bool operator==(const ParamVector& o) const;

 private:
  std::vector<Segment> segments_;
  std::vector<double> values_;
};

/// Every segment of a ParamVector recorded as a graph parameter leaf.
class BoundParams {
 public:
  BoundParams(Graph& g, const ParamVector& p, bool trainable = true);

  Var operator[](std::size_t seg) const { return leaves_[seg]; }
  Var at(const std::string& name) const { return leaves_[params_->index_of(name)]; }
  /// Concatenation of the named segments as one 1xn row (row-major flatten).
  Var gather_row(std::span<const std::string> names) const;
  /// Gradient of the last backward() in flat ParamVector order.
  std::vector<double> flat_grad() const;

 private:
  const ParamVector* params_;
  std::vector<Var> leaves_;
};

struct AdamState {
  std::uint64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  AdamState() = default;
  AdamState(std::size_t n, double lr) : m(n, 0.0), v(n, 0.0), learning_rate(lr) {}
};

/// One bias-corrected Adam update in place.
void adam_step(ParamVector& params, std::span<const double> grads, AdamState& state);
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state);

}  // namespace treereg

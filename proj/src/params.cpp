// SPDX-License-Identifier: Apache-2.0
#include "treereg/params.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace treereg {

std::size_t ParamVector::add(std::string name, std::size_t rows, std::size_t cols) {
  for (const auto& s : segments_) {
    if (s.name == name) throw std::invalid_argument("ParamVector: duplicate segment " + name);
  }
  Segment s{std::move(name), rows, cols, values_.size()};
  values_.resize(values_.size() + s.size(), 0.0);
  segments_.push_back(std::move(s));
  return segments_.size() - 1;
}

std::size_t ParamVector::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < segments_.size(); ++i)
    if (segments_[i].name == name) return i;
  throw std::out_of_range("ParamVector: no segment named " + name);
}

std::span<double> ParamVector::values(std::size_t seg) {
  const Segment& s = segments_.at(seg);
  return {values_.data() + s.offset, s.size()};
}

std::span<const double> ParamVector::values(std::size_t seg) const {
  const Segment& s = segments_.at(seg);
  return {values_.data() + s.offset, s.size()};
}

Matrix ParamVector::matrix(std::size_t seg) const {
  const Segment& s = segments_.at(seg);
  auto v = values(seg);
  return Matrix(s.rows, s.cols, std::vector<double>(v.begin(), v.end()));
}

void ParamVector::set(std::size_t seg, const Matrix& m) {
  const Segment& s = segments_.at(seg);
  if (m.rows() != s.rows || m.cols() != s.cols) {
    throw ShapeError("ParamVector::set(" + s.name + "): expected " + std::to_string(s.rows) + "x" +
                     std::to_string(s.cols) + ", got " + m.shape_string());
  }
  std::copy(m.data().begin(), m.data().end(), values(seg).begin());
}

void ParamVector::unflatten(std::span<const double> flat) {
  if (flat.size() != values_.size()) {
    throw std::invalid_argument("ParamVector::unflatten: length " + std::to_string(flat.size()) +
                                " != " + std::to_string(values_.size()));
  }
  std::copy(flat.begin(), flat.end(), values_.begin());
}

std::vector<std::size_t> ParamVector::indices(std::span<const std::string> names) const {
  std::vector<std::size_t> out;
  for (const auto& name : names) {
    const Segment& s = segment(name);
    for (std::size_t i = 0; i < s.size(); ++i) out.push_back(s.offset + i);
  }
  return out;
}

void ParamVector::glorot(std::size_t seg, std::mt19937_64& rng) {
  const Segment& s = segments_.at(seg);
  const double a = std::sqrt(6.0 / static_cast<double>(s.rows + s.cols));
  std::uniform_real_distribution<double> dist(-a, a);
  for (double& v : values(seg)) v = dist(rng);
}

bool ParamVector::operator==(const ParamVector& o) const {
  if (segments_.size() != o.segments_.size()) return false;
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    const auto& a = segments_[i];
    const auto& b = o.segments_[i];
    if (a.name != b.name || a.rows != b.rows || a.cols != b.cols) return false;
  }
  return values_ == o.values_;
}

BoundParams::BoundParams(Graph& g, const ParamVector& p, bool trainable) : params_(&p) {
  leaves_.reserve(p.segments().size());
  for (std::size_t i = 0; i < p.segments().size(); ++i) {
    leaves_.push_back(trainable ? g.parameter(p.matrix(i)) : g.constant(p.matrix(i)));
  }
}

Var BoundParams::gather_row(std::span<const std::string> names) const {
  std::vector<Var> parts;
  for (const auto& name : names) {
    const Segment& s = params_->segment(name);
    parts.push_back(reshape(at(name), 1, s.size()));
  }
  if (parts.size() == 1) return parts[0];
  return concat_cols(parts);
}

std::vector<double> BoundParams::flat_grad() const {
  std::vector<double> out(params_->size(), 0.0);
  for (std::size_t i = 0; i < leaves_.size(); ++i) {
    const Matrix& g = leaves_[i].grad();
    const Segment& s = params_->segments()[i];
    std::copy(g.data().begin(), g.data().end(), out.begin() + static_cast<std::ptrdiff_t>(s.offset));
  }
  return out;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state) {
  if (grads.size() != params.size()) {
    throw std::invalid_argument("adam_step: gradient length " + std::to_string(grads.size()) +
                                " != parameter length " + std::to_string(params.size()));
  }
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
  }
}

void adam_step(ParamVector& params, std::span<const double> grads, AdamState& state) {
  adam_step(params.values(), grads, state);
}

}  // namespace treereg

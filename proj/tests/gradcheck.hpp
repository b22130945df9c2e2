// Central-difference gradient checks for graph-built scalar functions.
#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "treereg/autodiff.hpp"
#include "treereg/params.hpp"

namespace testutil {

using treereg::Graph;
using treereg::Matrix;
using treereg::Var;

// f builds a 1x1 output from leaf parameters holding the given inputs.
using GraphFn = std::function<Var(Graph&, const std::vector<Var>&)>;

inline double eval(const GraphFn& f, const std::vector<Matrix>& inputs) {
  Graph g;
  std::vector<Var> leaves;
  for (const auto& m : inputs) leaves.push_back(g.parameter(m));
  return f(g, leaves).value()[0];
}

struct GradReport {
  double worst_rel = 0.0;
  double worst_abs = 0.0;
  bool ok = true;
};

// Compares analytic and central-difference gradients entry by entry. An entry
// passes when |a - n| <= abs_tol or |a - n| / max(|a|, |n|) <= rel_tol.
inline GradReport check_gradient(const GraphFn& f, std::vector<Matrix> inputs, double rel_tol = 1e-4,
                                 double abs_tol = 1e-6, double h = 1e-5) {
  Graph g;
  std::vector<Var> leaves;
  for (const auto& m : inputs) leaves.push_back(g.parameter(m));
  Var out = f(g, leaves);
  g.backward(out);
  GradReport rep;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Matrix analytic = leaves[k].grad();
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double keep = inputs[k][i];
      inputs[k][i] = keep + h;
      const double up = eval(f, inputs);
      inputs[k][i] = keep - h;
      const double down = eval(f, inputs);
      inputs[k][i] = keep;
      const double num = (up - down) / (2.0 * h);
      const double a = analytic.size() ? analytic[i] : 0.0;
      const double diff = std::abs(a - num);
      const double scale = std::max(std::abs(a), std::abs(num));
      const double rel = scale > 0.0 ? diff / scale : 0.0;
      if (diff > abs_tol && rel > rel_tol) rep.ok = false;
      if (diff > abs_tol) rep.worst_rel = std::max(rep.worst_rel, rel);
      rep.worst_abs = std::max(rep.worst_abs, diff);
    }
  }
  return rep;
}

inline Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(r, c);
  for (double& v : m.data()) v = u(rng);
  return m;
}

}  // namespace testutil

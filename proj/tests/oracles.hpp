// Independent reference implementations shared by the unit and acceptance
// tests. Nothing here calls into the code under test except to evaluate a loss.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

#include "treereg/matrix.hpp"
#include "treereg/models.hpp"

namespace oracle {

// Euclidean projection onto the simplex by enumerating supports. For a
// support S the KKT point is p_i = z_i - tau on S with tau = (sum_S z - 1)/|S|;
// it is the projection iff p > 0 on S and z_j <= tau off S. Among feasible
// candidates keep the closest one to z (the min guards boundary ties).
inline std::vector<double> simplex_projection(const std::vector<double>& z) {
  const std::size_t n = z.size();
  std::vector<double> best;
  double best_d = 1e300;
  for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
    double s = 0.0;
    int k = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (1u << i)) {
        s += z[i];
        ++k;
      }
    }
    const double tau = (s - 1.0) / k;
    std::vector<double> p(n, 0.0);
    bool ok = true;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (1u << i)) {
        p[i] = z[i] - tau;
        if (p[i] < -1e-12) ok = false;
      } else if (z[i] - tau > 1e-12) {
        ok = false;
      }
    }
    if (!ok) continue;
    double d = 0.0;
    for (std::size_t i = 0; i < n; ++i) d += (p[i] - z[i]) * (p[i] - z[i]);
    if (d < best_d) {
      best_d = d;
      best = p;
    }
  }
  return best;
}

// Greedy CART by exhaustive split enumeration. Split quality is compared
// exactly: maximizing Gini decrease is maximizing the sum over children of
// (a^2 + b^2) / n, compared by cross-multiplication in integers.
class GreedyTree {
 public:
  static double train_accuracy(const treereg::Matrix& x, const std::vector<int>& y, std::size_t h) {
    std::vector<int> pred(y.size(), -1);
    std::vector<std::size_t> idx(y.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    grow(x, y, idx, h, pred);
    std::size_t ok = 0;
    for (std::size_t i = 0; i < y.size(); ++i) ok += pred[i] == y[i];
    return static_cast<double>(ok) / static_cast<double>(y.size());
  }

 private:
  struct Frac {
    long long num, den;
    bool operator>(const Frac& o) const { return num * o.den > o.num * den; }
  };
  static Frac purity(long long a, long long b) { return {a * a + b * b, a + b}; }
  static Frac add(Frac x, Frac y) { return {x.num * y.den + y.num * x.den, x.den * y.den}; }

  static void grow(const treereg::Matrix& x, const std::vector<int>& y, const std::vector<std::size_t>& idx,
                   std::size_t h, std::vector<int>& pred) {
    long long c1 = 0;
    for (auto i : idx) c1 += y[i];
    const long long c0 = static_cast<long long>(idx.size()) - c1;
    auto leaf = [&] {
      for (auto i : idx) pred[i] = c1 > c0 ? 1 : 0;
    };
    if (c0 == 0 || c1 == 0) return leaf();

    const Frac parent = purity(c0, c1);
    bool found = false;
    Frac best{0, 1};
    std::size_t bf = 0;
    double bt = 0.0;
    for (std::size_t f = 0; f < x.cols(); ++f) {
      std::set<double> vals;
      for (auto i : idx) vals.insert(x(i, f));
      std::vector<double> v(vals.begin(), vals.end());
      for (std::size_t k = 0; k + 1 < v.size(); ++k) {
        const double t = 0.5 * (v[k] + v[k + 1]);
        long long l0 = 0, l1 = 0, r0 = 0, r1 = 0;
        for (auto i : idx) {
          if (x(i, f) <= t) (y[i] ? l1 : l0)++;
          else (y[i] ? r1 : r0)++;
        }
        if (static_cast<std::size_t>(l0 + l1) < h || static_cast<std::size_t>(r0 + r1) < h) continue;
        const Frac q = add(purity(l0, l1), purity(r0, r1));
        if (!found || q > best) {
          found = true;
          best = q;
          bf = f;
          bt = t;
        }
      }
    }
    if (!found || !(best > parent)) return leaf();
    std::vector<std::size_t> li, ri;
    for (auto i : idx) (x(i, bf) <= bt ? li : ri).push_back(i);
    grow(x, y, li, h, pred);
    grow(x, y, ri, h, pred);
  }
};

// Central differences of the full loss against every model parameter;
// returns how many coordinates miss relative 1e-4 with absolute floor 1e-6.
inline std::size_t model_gradient_misses(treereg::Model& model, const treereg::Batch& batch, double lambda,
                                         const treereg::PenaltyFn& pen) {
  using namespace treereg;
  Graph g;
  BoundParams p(g, model.params());
  auto terms = model_loss(model, p, batch, lambda, pen);
  g.backward(terms.total);
  auto analytic = p.flat_grad();
  auto values = model.params().values();
  const double h = 1e-6;
  std::size_t bad = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double keep = values[i];
    auto loss_at = [&](double v) {
      values[i] = v;
      Graph gg;
      BoundParams pp(gg, model.params(), false);
      return model_loss(model, pp, batch, lambda, pen).total.value()[0];
    };
    const double num = (loss_at(keep + h) - loss_at(keep - h)) / (2 * h);
    values[i] = keep;
    const double diff = std::abs(num - analytic[i]);
    if (diff > 1e-6 && diff / std::max(std::abs(num), std::abs(analytic[i])) > 1e-4) ++bad;
  }
  return bad;
}

}  // namespace oracle

#include <doctest.h>

#include <random>

#include "treereg/metrics.hpp"

using namespace treereg;

namespace {

double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j]) continue;
      num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      den += 1.0;
    }
  }
  return num / den;
}

TreeNode split(int f, double t, int l, int r) {
  TreeNode n;
  n.feature = f;
  n.threshold = t;
  n.left = l;
  n.right = r;
  return n;
}

TreeNode leaf(std::size_t c0, std::size_t c1) {
  TreeNode n;
  n.count0 = c0;
  n.count1 = c1;
  return n;
}

}  // namespace

TEST_CASE("auc examples") {
  CHECK(auc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, std::vector<int>{0, 0, 1, 1}) == 0.75);
  CHECK(auc(std::vector<double>{0.1, 0.2, 0.3, 0.9}, std::vector<int>{0, 0, 1, 1}) == 1.0);
  CHECK(auc(std::vector<double>{0.5, 0.5}, std::vector<int>{0, 1}) == 0.5);
  CHECK_THROWS(auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}));
  CHECK_THROWS(auc(std::vector<double>{0.1}, std::vector<int>{1, 0}));
}

TEST_CASE("auc against the pairwise oracle") {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> coarse(0, 6);  // forces ties
  std::bernoulli_distribution b(0.4);
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = 2 + t % 40;
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = coarse(rng) / 6.0;
      y[i] = b(rng);
    }
    y[0] = 0;
    y[1] = 1;
    const double a = auc(s, y);
    CHECK(a == doctest::Approx(pairwise_auc(s, y)).epsilon(1e-12));

    // strictly monotone transform
    std::vector<double> e(n);
    for (std::size_t i = 0; i < n; ++i) e[i] = std::exp(3.0 * s[i]) - 7.0;
    CHECK(auc(e, y) == doctest::Approx(a).epsilon(1e-12));
  }

  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> s(20000);
  std::vector<int> y(20000);
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = u(rng);
    y[i] = b(rng);
  }
  CHECK(std::abs(auc(s, y) - 0.5) < 0.02);
}

TEST_CASE("f1 and accuracy") {
  CHECK(f1(std::vector<int>{1, 0, 1, 0}, std::vector<int>{1, 0, 1, 0}) == 1.0);
  CHECK(f1(std::vector<int>{0, 0, 0}, std::vector<int>{1, 0, 1}) == 0.0);
  // TP 2, FP 1, FN 1
  CHECK(f1(std::vector<int>{1, 1, 1, 0, 0}, std::vector<int>{1, 1, 0, 1, 0}) == doctest::Approx(2.0 / 3.0));
  CHECK(accuracy(std::vector<int>{1, 1, 1, 0, 0}, std::vector<int>{1, 1, 0, 1, 0}) == doctest::Approx(0.6));
  CHECK_THROWS(accuracy(std::vector<int>{1}, std::vector<int>{1, 0}));

  std::mt19937_64 rng(2);
  std::bernoulli_distribution b(0.5);
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = 1 + t % 15;
    std::vector<int> p(n), y(n);
    double tp = 0, fp = 0, fn = 0, ok = 0;
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = b(rng);
      y[i] = b(rng);
      tp += p[i] && y[i];
      fp += p[i] && !y[i];
      fn += !p[i] && y[i];
      ok += p[i] == y[i];
    }
    const double want = tp == 0 ? 0.0 : 2 * tp / (2 * tp + fp + fn);
    CHECK(f1(p, y) == doctest::Approx(want));
    CHECK(accuracy(p, y) == doctest::Approx(ok / n));
  }
}

TEST_CASE("tree_stability") {
  DecisionTree a({split(0, 0.5, 1, 2), leaf(3, 0), leaf(0, 3)}, 1, 2);
  DecisionTree a_close({split(0, 0.5 + 1e-9, 1, 2), leaf(2, 1), leaf(0, 5)}, 1, 2);
  DecisionTree b({split(1, 0.5, 1, 2), leaf(3, 0), leaf(0, 3)}, 1, 2);
  DecisionTree single({leaf(3, 3)}, 1, 2);

  std::vector<DecisionTree> same = {a, a, a};
  auto r = tree_stability(same);
  CHECK(r.identical == 3);
  CHECK(r.distinct == 1);

  std::vector<DecisionTree> two = {single, a};
  CHECK(tree_stability(two).distinct == 2);

  std::vector<DecisionTree> mixed = {a, b, a_close, single, a};
  r = tree_stability(mixed);
  CHECK(r.identical == 3);
  CHECK(r.distinct == 3);
  CHECK(r.group_of[0] == r.group_of[2]);
  CHECK(r.group_of[0] != r.group_of[1]);
}

#include <doctest.h>

#include <boost/graph/adjacency_list.hpp>
#include <boost/graph/graphviz.hpp>

#include <algorithm>
#include <random>

#include "oracles.hpp"
#include "treereg/dtree.hpp"

using namespace treereg;

namespace {

double accuracy(const DecisionTree& t, const Matrix& x, std::span<const int> y) {
  auto p = t.predict(x);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < y.size(); ++i) ok += p[i] == y[i];
  return static_cast<double>(ok) / static_cast<double>(y.size());
}

// Small integer grid values so duplicate coordinates and gain ties are common.
void small_data(std::mt19937_64& rng, std::size_t n, std::size_t d, Matrix& x, std::vector<int>& y,
                 int levels = 4) {
  std::uniform_int_distribution<int> v(0, levels - 1);
  std::bernoulli_distribution b(0.5);
  x = Matrix(n, d);
  y.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) x(i, j) = v(rng);
    y[i] = b(rng);
  }
}

TreeNode internal(int f, double t, int l, int r) {
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

// root: x0 <= 0.5 ? leaf : (x1 <= 0.5 ? leaf : (x0 <= 0.8 ? leaf : leaf))
DecisionTree unbalanced() {
  return DecisionTree({internal(0, 0.5, 1, 2), leaf(3, 0), internal(1, 0.5, 3, 4), leaf(0, 2),
                       internal(0, 0.8, 5, 6), leaf(2, 1), leaf(0, 4)},
                      1, 2);
}

}  // namespace

TEST_CASE("gini_gain") {
  const std::vector<int> pure = {1, 1, 1};
  CHECK(gini_gain(pure, std::vector<int>{1}, std::vector<int>{1, 1}) == 0.0);
  const std::vector<int> half = {1, 1, 0, 0};
  CHECK(gini_gain(half, std::vector<int>{1, 1}, std::vector<int>{0, 0}) == doctest::Approx(0.5));
  // 0.5 - (3/4) * (1 - 4/9 - 1/9)
  const double direct = 0.5 - 0.75 * (1.0 - (2.0 / 3) * (2.0 / 3) - (1.0 / 3) * (1.0 / 3));
  CHECK(direct == doctest::Approx(1.0 / 6.0));
  CHECK(gini_gain(half, std::vector<int>{1, 1, 0}, std::vector<int>{0}) ==
        doctest::Approx(1.0 / 6.0).epsilon(1e-12));
  CHECK_THROWS(gini_gain(std::vector<int>{}, std::vector<int>{}, std::vector<int>{}));
}

TEST_CASE("train_tree small cases") {
  SUBCASE("constant labels give one leaf") {
    Matrix x = Matrix::from_rows({{0.1}, {0.4}, {0.9}});
    std::vector<int> y = {1, 1, 1};
    auto t = train_tree(x, y, 1);
    CHECK(t.nodes().size() == 1);
    CHECK(apl(x, y, {.h = 1, .prune_fraction = 0.0, .pruned = false}) == 0.0);
  }
  SUBCASE("x > 0.5 on 1-D data") {
    Matrix x = Matrix::from_rows({{0.05}, {0.2}, {0.45}, {0.61}, {0.7}, {0.95}});
    std::vector<int> y = {0, 0, 0, 1, 1, 1};
    auto t = train_tree(x, y, 1);
    REQUIRE(t.nodes().size() == 3);
    CHECK(t.root().feature == 0);
    CHECK(t.root().threshold > 0.45);
    CHECK(t.root().threshold < 0.61);
    CHECK(t.nodes()[t.root().left].probability() == 0.0);
    CHECK(t.nodes()[t.root().right].probability() == 1.0);
  }
  SUBCASE("fewer than 2h rows give one leaf") {
    Matrix x = Matrix::from_rows({{0.0}, {1.0}, {2.0}});
    std::vector<int> y = {0, 1, 1};
    CHECK(train_tree(x, y, 2).nodes().size() == 1);
  }
  SUBCASE("errors") {
    CHECK_THROWS(train_tree(Matrix(0, 2), std::vector<int>{}, 1));
    CHECK_THROWS(train_tree(Matrix::from_rows({{0.0}}), std::vector<int>{2}, 1));
  }
}

TEST_CASE("greedy training agrees with the exhaustive split oracle") {
  std::mt19937_64 rng(31);
  int compared = 0;
  for (int t = 0; t < 600; ++t) {
    const std::size_t n = 2 + t % 11;  // 2..12
    const std::size_t d = 1 + t % 3;   // 1..3
    const std::size_t h = 1 + (t / 3) % 3;
    Matrix x;
    std::vector<int> y;
    small_data(rng, n, d, x, y, 2 + t % 5);
    auto tree = train_tree(x, y, h);
    CHECK_MESSAGE(accuracy(tree, x, y) == doctest::Approx(oracle::GreedyTree::train_accuracy(x, y, h)),
                  "n=" << n << " d=" << d << " h=" << h);
    ++compared;
  }
  CHECK(compared == 600);
}

TEST_CASE("tree invariants on random data") {
  std::mt19937_64 rng(37);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 10 + t % 60;
    const std::size_t h = 1 + t % 5;
    Matrix x;
    std::vector<int> y;
    small_data(rng, n, 3, x, y, 10);
    auto tree = train_tree(x, y, h);

    for (const auto& node : tree.nodes()) {
      if (node.is_leaf()) CHECK(node.count() >= std::min(h, n));
      else CHECK((node.left > 0 && node.right > 0));
    }
    const double a = mean_path_length(tree, x);
    CHECK(a >= 0.0);
    CHECK(a <= static_cast<double>(tree.depth()));

    // determinism, bit for bit
    auto again = train_tree(x, y, h);
    REQUIRE(again.nodes().size() == tree.nodes().size());
    for (std::size_t i = 0; i < tree.nodes().size(); ++i) {
      CHECK(again.nodes()[i].feature == tree.nodes()[i].feature);
      CHECK(again.nodes()[i].threshold == tree.nodes()[i].threshold);
    }

    // pruning monotonicity
    Matrix xp;
    std::vector<int> yp;
    small_data(rng, 5 + t % 20, 3, xp, yp, 10);
    auto pruned = prune_tree(tree, xp, yp);
    CHECK(accuracy(pruned, xp, yp) >= accuracy(tree, xp, yp));
    CHECK(mean_path_length(pruned, x) <= a + 1e-12);
    CHECK(pruned.nodes().size() <= tree.nodes().size());
  }
}

TEST_CASE("prune_tree examples") {
  // two sibling leaves predicting class 1
  DecisionTree t({internal(0, 0.5, 1, 2), leaf(1, 3), leaf(0, 5)}, 1, 1);
  Matrix xp = Matrix::from_rows({{0.2}, {0.9}});
  std::vector<int> yp = {1, 0};
  auto p = prune_tree(t, xp, yp);
  CHECK(p.nodes().size() == 1);

  DecisionTree single({leaf(2, 3)}, 1, 1);
  auto q = prune_tree(single, xp, yp);
  CHECK(q.same_structure(single));
  CHECK_THROWS(prune_tree(t, Matrix(0, 1), std::vector<int>{}));
}

TEST_CASE("path_length") {
  DecisionTree single({leaf(1, 1)}, 1, 2);
  CHECK(path_length(single, std::vector<double>{0.3, 0.3}) == 0);
  DecisionTree stump({internal(1, 0.0, 1, 2), leaf(1, 0), leaf(0, 1)}, 1, 2);
  CHECK(path_length(stump, std::vector<double>{5.0, -1.0}) == 1);
  CHECK(path_length(stump, std::vector<double>{5.0, 1.0}) == 1);

  auto u = unbalanced();
  CHECK(path_length(u, std::vector<double>{0.9, 0.9}) == 3);
  CHECK(path_length(u, std::vector<double>{0.6, 0.9}) == 3);
  CHECK(path_length(u, std::vector<double>{0.9, 0.1}) == 2);
  CHECK(path_length(u, std::vector<double>{0.5, 0.9}) == 1);  // equal goes left
  CHECK(u.depth() == 3);
}

TEST_CASE("apl examples") {
  SUBCASE("constant predictor") {
    Matrix x(50, 2, 0.3);
    CHECK(apl(x, [](const Matrix& m) { return std::vector<int>(m.rows(), 1); }) == 0.0);
  }
  SUBCASE("threshold predictor on [0, 1]") {
    Matrix x(101, 1);
    std::mt19937_64 rng(3);
    std::vector<double> v(101);
    for (int i = 0; i <= 100; ++i) v[i] = i / 100.0;
    std::shuffle(v.begin(), v.end(), rng);
    for (int i = 0; i <= 100; ++i) x(i, 0) = v[i];
    auto pred = [](const Matrix& m) {
      std::vector<int> out(m.rows());
      for (std::size_t i = 0; i < m.rows(); ++i) out[i] = m(i, 0) > 0.5;
      return out;
    };
    CHECK(apl(x, pred) == doctest::Approx(1.0));
  }
  SUBCASE("one positive quadrant on a grid") {
    // Optimal tree: x0 <= 0.5 -> leaf (depth 1); else split x1 (depth 2).
    // Half the grid sits on each side of x0 = 0.5, so the mean depth is 1.5.
    const int g = 20;
    std::vector<std::pair<double, double>> pts;
    for (int i = 0; i < g; ++i)
      for (int j = 0; j < g; ++j) pts.emplace_back((i + 0.5) / g, (j + 0.5) / g);
    std::mt19937_64 rng(5);
    std::shuffle(pts.begin(), pts.end(), rng);
    Matrix x(pts.size(), 2);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      x(i, 0) = pts[i].first;
      x(i, 1) = pts[i].second;
    }
    auto pred = [](const Matrix& m) {
      std::vector<int> out(m.rows());
      for (std::size_t i = 0; i < m.rows(); ++i) out[i] = m(i, 0) > 0.5 && m(i, 1) > 0.5;
      return out;
    };
    std::size_t left = 0;
    for (std::size_t i = 0; i < x.rows(); ++i) left += x(i, 0) <= 0.5;
    const double hand = (1.0 * left + 2.0 * (x.rows() - left)) / x.rows();
    CHECK(hand == doctest::Approx(1.5));
    auto res = fit_apl(x, pred(x));
    CHECK(res.apl == doctest::Approx(hand));
    CHECK(fidelity(res.tree, pred, x) == 1.0);
  }
}

TEST_CASE("fidelity") {
  std::mt19937_64 rng(41);
  Matrix x;
  std::vector<int> y;
  small_data(rng, 40, 2, x, y, 1000);  // distinct values, consistent labels
  auto tree = train_tree(x, y, 1);
  CHECK(fidelity(tree, x, y) == 1.0);

  std::vector<int> noisy = y;
  for (std::size_t i = 0; i < noisy.size(); i += 3) noisy[i] = 1 - noisy[i];
  std::vector<int> inverted = noisy;
  for (auto& v : inverted) v = 1 - v;
  CHECK(fidelity(tree, x, inverted) == doctest::Approx(1.0 - fidelity(tree, x, noisy)));
}

TEST_CASE("export_dot parses and has the right shape") {
  using Graph = boost::adjacency_list<boost::vecS, boost::vecS, boost::directedS,
                                      boost::property<boost::vertex_name_t, std::string>,
                                      boost::property<boost::edge_name_t, std::string>>;
  auto parse = [](const std::string& dot, Graph& g) {
    boost::dynamic_properties dp(boost::ignore_other_properties);
    dp.property("node_id", get(boost::vertex_name, g));
    dp.property("label", get(boost::edge_name, g));
    std::istringstream in(dot);
    return boost::read_graphviz(in, g, dp, "node_id");
  };
  const std::vector<std::string> names = {"x\"0", "x1"};

  Graph g1;
  REQUIRE(parse(export_dot(DecisionTree({leaf(2, 3)}, 1, 2), names), g1));
  CHECK(boost::num_vertices(g1) == 1);
  CHECK(boost::num_edges(g1) == 0);

  Graph g2;
  DecisionTree stump({internal(0, 0.25, 1, 2), leaf(1, 0), leaf(0, 1)}, 1, 2);
  const std::string dot = export_dot(stump, names);
  REQUIRE(parse(dot, g2));
  CHECK(boost::num_vertices(g2) == 3);
  CHECK(boost::num_edges(g2) == 2);
  CHECK(dot.find("≤ 0.25") != std::string::npos);

  Graph g3;
  auto u = unbalanced();
  REQUIRE(parse(export_dot(u, names), g3));
  CHECK(boost::num_vertices(g3) == u.nodes().size());
  CHECK(boost::num_edges(g3) == 2 * u.internal_count());

  CHECK_THROWS(export_dot(stump, std::vector<std::string>{}));
}

TEST_CASE("tree JSON round trip") {
  std::mt19937_64 rng(43);
  Matrix x;
  std::vector<int> y;
  small_data(rng, 60, 3, x, y, 1000);
  for (std::size_t i = 0; i < x.rows(); ++i) x(i, 1) = x(i, 1) / 7.0 + 1e-9;  // awkward decimals
  auto t = train_tree(x, y, 2);
  auto back = DecisionTree::from_json(t.to_json());
  CHECK(back.same_structure(t, 0.0));
  CHECK(back.predict(x) == t.predict(x));
  CHECK(back.min_leaf() == 2);
}

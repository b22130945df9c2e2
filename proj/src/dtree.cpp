// SPDX-License-Identifier: Apache-2.0
#include "treereg/dtree.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace treereg {

namespace {

// Gains closer than this are treated as ties so the earlier candidate wins.
constexpr double kGainTie = 1e-12;

double gini_counts(double c0, double c1) {
  const double n = c0 + c1;
  if (n <= 0.0) return 0.0;
  const double p0 = c0 / n;
  const double p1 = c1 / n;
  return 1.0 - p0 * p0 - p1 * p1;
}

struct Split {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

class Builder {
 public:
  Builder(const Matrix& x, std::span<const int> y, std::size_t h) : x_(x), y_(y), h_(h) {}

  std::vector<TreeNode> build() {
    std::vector<std::size_t> all(x_.rows());
    std::iota(all.begin(), all.end(), std::size_t{0});
    grow(all);
    return std::move(nodes_);
  }

 private:
  int grow(std::vector<std::size_t>& idx) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    std::size_t c1 = 0;
    for (std::size_t i : idx) c1 += static_cast<std::size_t>(y_[i]);
    nodes_[id].count1 = c1;
    nodes_[id].count0 = idx.size() - c1;
    if (c1 == 0 || c1 == idx.size() || idx.size() < 2 * h_) return id;

    Split best = best_split(idx, c1);
    if (best.feature < 0) return id;

    std::vector<std::size_t> left, right;
    for (std::size_t i : idx) {
      (x_(i, static_cast<std::size_t>(best.feature)) <= best.threshold ? left : right).push_back(i);
    }
    idx.clear();
    idx.shrink_to_fit();
    nodes_[id].feature = best.feature;
    nodes_[id].threshold = best.threshold;
    const int l = grow(left);
    nodes_[id].left = l;
    const int r = grow(right);
    nodes_[id].right = r;
    return id;
  }

  Split best_split(const std::vector<std::size_t>& idx, std::size_t c1) const {
    const double n = static_cast<double>(idx.size());
    const double parent = gini_counts(n - static_cast<double>(c1), static_cast<double>(c1));
    Split best;
    std::vector<std::size_t> order(idx);
    for (std::size_t f = 0; f < x_.cols(); ++f) {
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return x_(a, f) < x_(b, f); });
      double l0 = 0.0, l1 = 0.0;
      for (std::size_t k = 0; k + 1 < order.size(); ++k) {
        (y_[order[k]] ? l1 : l0) += 1.0;
        const double a = x_(order[k], f);
        const double b = x_(order[k + 1], f);
        if (!(a < b)) continue;
        const std::size_t nl = k + 1;
        if (nl < h_ || order.size() - nl < h_) continue;
        const double r0 = (n - static_cast<double>(c1)) - l0;
        const double r1 = static_cast<double>(c1) - l1;
        const double dl = static_cast<double>(nl);
        const double child = (dl * gini_counts(l0, l1) + (n - dl) * gini_counts(r0, r1)) / n;
        const double gain = parent - child;
        if (gain > best.gain + kGainTie) {
          best.feature = static_cast<int>(f);
          best.threshold = a + (b - a) / 2.0;
          best.gain = gain;
        }
      }
    }
    return best;
  }

  const Matrix& x_;
  std::span<const int> y_;
  std::size_t h_;
  std::vector<TreeNode> nodes_;
};

void check_labels(std::span<const int> y) {
  for (int v : y) {
    if (v != 0 && v != 1) throw std::invalid_argument("decision tree labels must be 0 or 1");
  }
}

// Copies the subtree reachable from the root into a fresh node array.
std::vector<TreeNode> compact(const std::vector<TreeNode>& nodes) {
  std::vector<TreeNode> out;
  std::function<int(int)> copy = [&](int id) {
    const int nid = static_cast<int>(out.size());
    out.push_back(nodes[static_cast<std::size_t>(id)]);
    if (!nodes[static_cast<std::size_t>(id)].is_leaf()) {
      const int l = copy(nodes[static_cast<std::size_t>(id)].left);
      out[static_cast<std::size_t>(nid)].left = l;
      const int r = copy(nodes[static_cast<std::size_t>(id)].right);
      out[static_cast<std::size_t>(nid)].right = r;
    }
    return nid;
  };
  copy(0);
  return out;
}

std::string format_threshold(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

}  // namespace

// ---------------------------------------------------------------------------

DecisionTree::DecisionTree(std::vector<TreeNode> nodes, std::size_t min_leaf,
                           std::size_t n_features)
    : nodes_(std::move(nodes)), min_leaf_(min_leaf), n_features_(n_features) {
  if (nodes_.empty()) throw std::invalid_argument("DecisionTree: no nodes");
  for (const auto& n : nodes_) {
    if (n.is_leaf()) continue;
    const auto size = static_cast<int>(nodes_.size());
    if (n.left <= 0 || n.right <= 0 || n.left >= size || n.right >= size ||
        static_cast<std::size_t>(n.feature) >= n_features_) {
      throw std::invalid_argument("DecisionTree: malformed internal node");
    }
  }
}

std::size_t DecisionTree::leaf_of(std::span<const double> x) const {
  if (x.size() != n_features_) {
    throw ShapeError("DecisionTree: input has " + std::to_string(x.size()) +
                     " features, tree expects " + std::to_string(n_features_));
  }
  std::size_t id = 0;
  while (!nodes_[id].is_leaf()) {
    const auto& n = nodes_[id];
    id = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left
                                                                                       : n.right);
  }
  return id;
}

std::vector<int> DecisionTree::predict(const Matrix& x) const {
  std::vector<int> out(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) out[i] = predict(x.row(i));
  return out;
}

std::size_t DecisionTree::internal_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return !n.is_leaf(); }));
}

std::size_t DecisionTree::depth() const {
  std::function<std::size_t(int)> rec = [&](int id) -> std::size_t {
    const auto& n = nodes_[static_cast<std::size_t>(id)];
    if (n.is_leaf()) return 0;
    return 1 + std::max(rec(n.left), rec(n.right));
  };
  return rec(0);
}

bool DecisionTree::same_structure(const DecisionTree& other, double tol) const {
  std::function<bool(int, int)> rec = [&](int a, int b) {
    const auto& na = nodes_[static_cast<std::size_t>(a)];
    const auto& nb = other.nodes_[static_cast<std::size_t>(b)];
    if (na.is_leaf() || nb.is_leaf()) return na.is_leaf() && nb.is_leaf();
    return na.feature == nb.feature && std::abs(na.threshold - nb.threshold) <= tol &&
           rec(na.left, nb.left) && rec(na.right, nb.right);
  };
  return rec(0, 0);
}

std::string DecisionTree::to_json() const {
  nlohmann::json j;
  j["min_leaf"] = min_leaf_;
  j["n_features"] = n_features_;
  auto& arr = j["nodes"] = nlohmann::json::array();
  for (const auto& n : nodes_) {
    nlohmann::json e = {{"count0", n.count0}, {"count1", n.count1}};
    if (!n.is_leaf()) {
      e["feature"] = n.feature;
      e["threshold"] = n.threshold;
      e["left"] = n.left;
      e["right"] = n.right;
    } else {
      e["probability"] = n.probability();
    }
    arr.push_back(e);
  }
  return j.dump(1);
}

DecisionTree DecisionTree::from_json(const std::string& text) {
  auto j = nlohmann::json::parse(text);
  std::vector<TreeNode> nodes;
  for (const auto& e : j.at("nodes")) {
    TreeNode n;
    n.count0 = e.at("count0").get<std::size_t>();
    n.count1 = e.at("count1").get<std::size_t>();
    if (e.contains("feature")) {
      n.feature = e.at("feature").get<int>();
      n.threshold = e.at("threshold").get<double>();
      n.left = e.at("left").get<int>();
      n.right = e.at("right").get<int>();
    }
    nodes.push_back(n);
  }
  return DecisionTree(std::move(nodes), j.at("min_leaf").get<std::size_t>(),
                      j.at("n_features").get<std::size_t>());
}

// ---------------------------------------------------------------------------

double gini_gain(std::span<const int> parent, std::span<const int> left,
                 std::span<const int> right) {
  if (parent.empty()) throw std::invalid_argument("gini_gain: empty parent");
  if (left.size() + right.size() != parent.size()) {
    throw std::invalid_argument("gini_gain: children do not partition the parent");
  }
  auto gini = [](std::span<const int> s) {
    double c1 = 0.0;
    for (int v : s) c1 += v;
    return gini_counts(static_cast<double>(s.size()) - c1, c1);
  };
  const double n = static_cast<double>(parent.size());
  return gini(parent) - (static_cast<double>(left.size()) / n) * gini(left) -
         (static_cast<double>(right.size()) / n) * gini(right);
}

DecisionTree train_tree(const Matrix& x, std::span<const int> labels, std::size_t h) {
  if (x.rows() == 0) throw std::invalid_argument("train_tree: empty input");
  if (labels.size() != x.rows()) {
    throw ShapeError("train_tree: " + std::to_string(x.rows()) + " rows but " +
                     std::to_string(labels.size()) + " labels");
  }
  if (h == 0) throw std::invalid_argument("train_tree: h must be >= 1");
  check_labels(labels);
  return DecisionTree(Builder(x, labels, h).build(), h, x.cols());
}

DecisionTree prune_tree(const DecisionTree& tree, const Matrix& x_prune,
                        std::span<const int> y_prune) {
  if (x_prune.rows() == 0) throw std::invalid_argument("prune_tree: empty pruning set");
  if (y_prune.size() != x_prune.rows()) throw ShapeError("prune_tree: label count mismatch");
  check_labels(y_prune);
  std::vector<TreeNode> nodes = tree.nodes();

  // Errors of the current subtree at id on the pruning rows in idx; collapses
  // children first, then id itself when a leaf does no worse.
  std::function<std::size_t(int, const std::vector<std::size_t>&)> visit =
      [&](int id, const std::vector<std::size_t>& idx) -> std::size_t {
    TreeNode& n = nodes[static_cast<std::size_t>(id)];
    const int leaf_class = n.majority();
    std::size_t leaf_errors = 0;
    for (std::size_t i : idx) leaf_errors += y_prune[i] != leaf_class;
    if (n.is_leaf()) {
      // Leaves predict by probability > 0.5, which equals the majority class.
      return leaf_errors;
    }
    std::vector<std::size_t> left, right;
    for (std::size_t i : idx) {
      (x_prune(i, static_cast<std::size_t>(n.feature)) <= n.threshold ? left : right).push_back(i);
    }
    const int l = n.left;
    const int r = n.right;
    const std::size_t sub_errors = visit(l, left) + visit(r, right);
    TreeNode& self = nodes[static_cast<std::size_t>(id)];
    if (leaf_errors <= sub_errors) {
      self.feature = -1;
      self.left = self.right = -1;
      return leaf_errors;
    }
    return sub_errors;
  };

  std::vector<std::size_t> all(x_prune.rows());
  std::iota(all.begin(), all.end(), std::size_t{0});
  // A post-order pass already reaches a fixed point (a collapsed node's parent
  // is examined afterwards); the loop guards the claim.
  for (;;) {
    const std::size_t before = static_cast<std::size_t>(
        std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return !n.is_leaf(); }));
    visit(0, all);
    const std::size_t after = static_cast<std::size_t>(
        std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return !n.is_leaf(); }));
    if (after == before) break;
  }
  return DecisionTree(compact(nodes), tree.min_leaf(), tree.n_features());
}

std::size_t path_length(const DecisionTree& tree, std::span<const double> x) {
  if (x.size() != tree.n_features()) {
    throw ShapeError("path_length: input has " + std::to_string(x.size()) +
                     " features, tree expects " + std::to_string(tree.n_features()));
  }
  std::size_t steps = 0;
  std::size_t id = 0;
  const auto& nodes = tree.nodes();
  while (!nodes[id].is_leaf()) {
    const auto& n = nodes[id];
    id = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left
                                                                                       : n.right);
    ++steps;
  }
  return steps;
}

double mean_path_length(const DecisionTree& tree, const Matrix& x) {
  if (x.rows() == 0) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) total += static_cast<double>(path_length(tree, x.row(i)));
  return total / static_cast<double>(x.rows());
}

AplResult fit_apl(const Matrix& x, std::span<const int> labels, const AplOptions& opt) {
  if (x.rows() == 0) throw std::invalid_argument("apl: empty reference set");
  if (labels.size() != x.rows()) throw ShapeError("apl: label count mismatch");
  if (opt.prune_fraction < 0.0 || opt.prune_fraction >= 1.0) {
    throw std::invalid_argument("apl: prune fraction must lie in [0, 1)");
  }
  const std::size_t n = x.rows();
  std::size_t n_prune =
      opt.pruned ? static_cast<std::size_t>(std::floor(opt.prune_fraction * static_cast<double>(n)))
                 : 0;
  if (n_prune >= n) n_prune = n - 1;
  const std::size_t n_train = n - n_prune;

  AplResult res;
  if (n_prune == 0) {
    res.tree = train_tree(x, labels, opt.h);
  } else {
    Matrix xt(n_train, x.cols());
    std::copy(x.data().begin(), x.data().begin() + static_cast<std::ptrdiff_t>(n_train * x.cols()),
              xt.data().begin());
    Matrix xp(n_prune, x.cols());
    std::copy(x.data().begin() + static_cast<std::ptrdiff_t>(n_train * x.cols()), x.data().end(),
              xp.data().begin());
    DecisionTree full = train_tree(xt, labels.first(n_train), opt.h);
    res.tree = prune_tree(full, xp, labels.subspan(n_train));
  }
  res.apl = mean_path_length(res.tree, x);
  return res;
}

double apl(const Matrix& x, std::span<const int> labels, const AplOptions& opt) {
  return fit_apl(x, labels, opt).apl;
}

double apl(const Matrix& x, const PredictFn& predict, const AplOptions& opt) {
  auto labels = predict(x);
  return apl(x, labels, opt);
}

double fidelity(const DecisionTree& tree, const Matrix& x, std::span<const int> target) {
  if (x.rows() == 0) throw std::invalid_argument("fidelity: empty evaluation set");
  if (target.size() != x.rows()) throw ShapeError("fidelity: label count mismatch");
  std::size_t agree = 0;
  for (std::size_t i = 0; i < x.rows(); ++i) agree += tree.predict(x.row(i)) == target[i];
  return static_cast<double>(agree) / static_cast<double>(x.rows());
}

double fidelity(const DecisionTree& tree, const PredictFn& predict, const Matrix& x) {
  auto target = predict(x);
  return fidelity(tree, x, target);
}

std::string export_dot(const DecisionTree& tree, std::span<const std::string> feature_names) {
  std::ostringstream os;
  os << "digraph tree {\n  node [shape=box];\n";
  const auto& nodes = tree.nodes();
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& n = nodes[i];
    os << "  n" << i << " [label=\"";
    if (n.is_leaf()) {
      os << "class " << (n.probability() > 0.5 ? 1 : 0) << "\\np = " << format_threshold(n.probability())
         << "\\nn = " << n.count();
    } else {
      const auto f = static_cast<std::size_t>(n.feature);
      if (f >= feature_names.size()) {
        throw std::out_of_range("export_dot: no name for feature " + std::to_string(f));
      }
      std::string name = feature_names[f];
      std::string escaped;
      for (char c : name) {
        if (c == '"' || c == '\\') escaped.push_back('\\');
        escaped.push_back(c);
      }
      os << escaped << " ≤ " << format_threshold(n.threshold);
    }
    os << "\"];\n";
  }
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& n = nodes[i];
    if (n.is_leaf()) continue;
    os << "  n" << i << " -> n" << n.left << " [label=\"yes\"];\n";
    os << "  n" << i << " -> n" << n.right << " [label=\"no\"];\n";
  }
  os << "}\n";
  return os.str();
}

}  // namespace treereg

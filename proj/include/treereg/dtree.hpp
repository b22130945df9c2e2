// SPDX-License-Identifier: Apache-2.0
//
// Deterministic CART (Gini) for binary labels, reduced-error pruning and
// average-path-length accounting. Splits scan every feature and every midpoint
// between consecutive distinct values; ties go to the lowest feature index and
// then the lowest threshold.
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "treereg/matrix.hpp"

namespace treereg {

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  std::size_t count0 = 0;  // training samples of class 0 reaching the node
  std::size_t count1 = 0;

  bool is_leaf() const { return feature < 0; }
  std::size_t count() const { return count0 + count1; }
  double probability() const {
    return count() == 0 ? 0.0 : static_cast<double>(count1) / static_cast<double>(count());
  }
  int majority() const { return count1 > count0 ? 1 : 0; }
};

class DecisionTree {
 public:
  DecisionTree() = default;
  DecisionTree(std::vector<TreeNode> nodes, std::size_t min_leaf, std::size_t n_features);

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  const TreeNode& root() const { return nodes_.front(); }
  std::size_t min_leaf() const { return min_leaf_; }
  std::size_t n_features() const { return n_features_; }

  /// Index of the leaf reached by x (value <= threshold goes left).
  std::size_t leaf_of(std::span<const double> x) const;
  double predict_proba(std::span<const double> x) const { return nodes_[leaf_of(x)].probability(); }
  /// Leaf probability thresholded at 0.5 (ties predict 0).
  int predict(std::span<const double> x) const { return predict_proba(x) > 0.5 ? 1 : 0; }
  std::vector<int> predict(const Matrix& x) const;

  std::size_t internal_count() const;
  std::size_t leaf_count() const { return nodes_.size() - internal_count(); }
  std::size_t depth() const;

  /// Same topology, split features and thresholds within tol.
  bool same_structure(const DecisionTree& other, double tol = 1e-6) const;

  std::string to_json() const;
  static DecisionTree from_json(const std::string& text);

 private:
  std::vector<TreeNode> nodes_;  // nodes_[0] is the root
  std::size_t min_leaf_ = 1;
  std::size_t n_features_ = 0;
};

/// Gini(parent) minus the size-weighted Gini of the children.
double gini_gain(std::span<const int> parent, std::span<const int> left,
                 std::span<const int> right);

/// Greedy CART on binary labels with at least h samples per leaf.
DecisionTree train_tree(const Matrix& x, std::span<const int> labels, std::size_t h);

/// Reduced-error pruning: bottom-up, an internal node becomes a majority-class
/// leaf whenever that does not lower accuracy on the pruning set.
DecisionTree prune_tree(const DecisionTree& tree, const Matrix& x_prune,
                        std::span<const int> y_prune);

/// Number of internal nodes on the path from the root to x's leaf.
std::size_t path_length(const DecisionTree& tree, std::span<const double> x);

/// Mean path_length over the rows of x.
double mean_path_length(const DecisionTree& tree, const Matrix& x);

struct AplOptions {
  std::size_t h = 1;
  double prune_fraction = 0.2;
  bool pruned = true;  // false gives the unpruned variant (train on all rows)
};

struct AplResult {
  double apl = 0.0;
  DecisionTree tree;
};

/// Tree fit to given labels, then APL over all rows of x. With pruning the
/// tree is trained on the first (1 - prune_fraction) N rows and pruned on the
/// rest.
AplResult fit_apl(const Matrix& x, std::span<const int> labels, const AplOptions& opt = {});
double apl(const Matrix& x, std::span<const int> labels, const AplOptions& opt = {});

using PredictFn = std::function<std::vector<int>(const Matrix&)>;
double apl(const Matrix& x, const PredictFn& predict, const AplOptions& opt = {});

/// Fraction of rows where the tree's thresholded prediction equals target.
double fidelity(const DecisionTree& tree, const Matrix& x, std::span<const int> target);
double fidelity(const DecisionTree& tree, const PredictFn& predict, const Matrix& x);

/// DOT digraph; internal nodes read "name <= threshold" (with the unicode sign).
std::string export_dot(const DecisionTree& tree, std::span<const std::string> feature_names);

}  // namespace treereg

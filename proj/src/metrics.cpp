// SPDX-License-Identifier: Apache-2.0
#include "treereg/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace treereg {

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("auc: length mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Midranks (1-based) summed over positives.
  double rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double mid = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) {
        rank_sum += mid;
        ++pos;
      }
    }
    i = j;
  }
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) throw std::invalid_argument("auc: labels contain a single class");
  const double p = static_cast<double>(pos);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

double accuracy(std::span<const int> preds, std::span<const int> labels) {
  if (preds.size() != labels.size()) throw std::invalid_argument("accuracy: length mismatch");
  if (preds.empty()) throw std::invalid_argument("accuracy: empty input");
  std::size_t ok = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) ok += preds[i] == labels[i];
  return static_cast<double>(ok) / static_cast<double>(preds.size());
}

double f1(std::span<const int> preds, std::span<const int> labels) {
  if (preds.size() != labels.size()) throw std::invalid_argument("f1: length mismatch");
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] == 1 && labels[i] == 1) ++tp;
    if (preds[i] == 1 && labels[i] == 0) ++fp;
    if (preds[i] == 0 && labels[i] == 1) ++fn;
  }
  if (tp == 0) return 0.0;
  return 2.0 * tp / (2.0 * tp + fp + fn);
}

StabilityReport tree_stability(std::span<const DecisionTree> trees, double tol) {
  if (trees.size() < 2) throw std::invalid_argument("tree_stability: need at least two trees");
  StabilityReport rep;
  std::vector<std::size_t> reps;  // representative tree per group
  std::vector<std::size_t> sizes;
  for (std::size_t i = 0; i < trees.size(); ++i) {
    std::size_t g = 0;
    while (g < reps.size() && !trees[reps[g]].same_structure(trees[i], tol)) ++g;
    if (g == reps.size()) {
      reps.push_back(i);
      sizes.push_back(0);
    }
    ++sizes[g];
    rep.group_of.push_back(g);
  }
  rep.distinct = reps.size();
  rep.identical = *std::max_element(sizes.begin(), sizes.end());
  return rep;
}

}  // namespace treereg

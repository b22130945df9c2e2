// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "treereg/dtree.hpp"

namespace treereg {

/// Area under the ROC curve as the Mann-Whitney statistic with midranks:
/// P(score+ > score-) + P(tie) / 2. Throws unless both classes are present.
double auc(std::span<const double> scores, std::span<const int> labels);

double accuracy(std::span<const int> preds, std::span<const int> labels);

/// Harmonic mean of precision and recall; 0 when there are no true positives.
double f1(std::span<const int> preds, std::span<const int> labels);

struct StabilityReport {
  std::size_t identical = 0;  // size of the largest group of structurally equal trees
  std::size_t distinct = 0;   // number of distinct structures
  std::vector<std::size_t> group_of;  // structure group per tree
};

/// Groups trees by structure (topology, split features, thresholds within tol).
StabilityReport tree_stability(std::span<const DecisionTree> trees, double tol = 1e-6);

/// Metrics for one model on one split. Per-output values are kept separately;
/// the scalar fields refer to output 0.
struct MetricsRecord {
  double auc = 0.0;
  double accuracy = 0.0;
  double f1 = 0.0;
  double apl = 0.0;
  double fidelity = 0.0;
  std::vector<double> auc_per_output;
  std::vector<double> f1_per_output;
  std::vector<double> accuracy_per_output;
};

}  // namespace treereg

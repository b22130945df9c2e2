// SPDX-License-Identifier: Apache-2.0
//
// Penalties Psi(theta): L1, L2, and tree regularization (global, or regional
// with per-region surrogates combined by a plain sum or by sparsemax weights).
#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "treereg/data.hpp"
#include "treereg/dtree.hpp"
#include "treereg/models.hpp"
#include "treereg/sparsemax.hpp"
#include "treereg/surrogate.hpp"

namespace treereg {

/// Sum of absolute values.
Var l1(Var theta);
/// Sum of squares.
Var l2(Var theta);

/// Inputs on which APL is measured. Each labelled (timestep, example) cell of
/// the batch is one tree row.
struct ReferenceSet {
  Batch batch;
  Matrix features;                  // rows x P, the tree inputs
  std::vector<std::size_t> step;    // timestep of each row
  std::vector<std::size_t> example; // batch row of each row
  std::vector<std::size_t> region;  // region of each row
  std::size_t regions = 1;

  std::size_t size() const { return features.rows(); }
  /// Row indices falling in region r, in reference order.
  std::vector<std::size_t> rows_in(std::size_t r) const;
};

ReferenceSet make_reference(const TabularDataset& d, const RegionPartition& part);
ReferenceSet make_reference(const SequenceDataset& d, const RegionPartition& part);

/// Thresholded (p > 0.5) model predictions per output, one entry per reference row.
std::vector<std::vector<int>> reference_labels(const Model& model, const ReferenceSet& ref);

/// Per-region pruned APL, summed over outputs. Throws if a region has fewer
/// than 10 reference rows.
std::vector<double> regional_true_apls(const ReferenceSet& ref,
                                       std::span<const std::vector<int>> labels,
                                       const AplOptions& opt);
std::vector<double> regional_true_apls(const Model& model, const ReferenceSet& ref,
                                       const AplOptions& opt);

/// Mean of the per-region APLs; the x axis of every tradeoff curve.
double evaluation_apl(const Model& model, const ReferenceSet& ref, const AplOptions& opt);

/// Writes a regularized-subset vector back into a model's parameters.
void set_regularized(Model& model, std::span<const double> subset);

enum class TreeMode : std::uint8_t { kGlobal, kRegionalL1, kRegionalL0 };
std::string to_string(TreeMode m);

struct TreeRegConfig {
  TreeMode mode = TreeMode::kGlobal;
  AplOptions apl;
  SurrogateConfig surrogate;
  bool augment = true;
  /// Divide surrogate outputs by their largest magnitude before sparsemax.
  bool normalize_sparsemax = false;
  std::uint64_t seed = 0;
};

struct RetrainReport {
  std::uint64_t step = 0;
  std::vector<FitReport> fits;  // one per surrogate
  double seconds = 0.0;
};

class TreeRegularizer {
 public:
  /// ref.regions surrogates are built (1 for kGlobal, which ignores regions).
  TreeRegularizer(const Model& model, ReferenceSet ref, TreeRegConfig cfg);

  const TreeRegConfig& config() const { return cfg_; }
  const ReferenceSet& reference() const { return ref_; }
  std::size_t regions() const { return surrogates_.size(); }
  const std::vector<Surrogate>& surrogates() const { return surrogates_; }
  std::vector<Surrogate>& surrogates() { return surrogates_; }

  /// Differentiable penalty from the bound regularized subset.
  Var penalty(const BoundParams& p) const;
  /// Penalty combination applied to a given 1 x R row of region estimates.
  Var combine(Var omegas) const;

  /// Surrogate estimates (raw) per region for a subset vector.
  std::vector<double> predicted(std::span<const double> subset) const;
  /// Sparsemax weights of the latest estimates (all ones over R for L1).
  std::vector<double> weights(std::span<const double> subset) const;

  /// True APL per region for the model's current parameters.
  std::vector<double> true_apls(const Model& model) const;
  /// True APL per region for a subset vector spliced into the last observed model.
  std::vector<double> true_apls_for(std::span<const double> subset) const;

  /// Records (theta, APL) for the model's current parameters into every
  /// surrogate's buffer; returns the per-region true APLs.
  std::vector<double> observe(const Model& model, std::uint64_t step);
  /// Adds externally harvested samples (for example from restarts); apls has
  /// one entry per region.
  void seed_sample(std::span<const double> subset, std::span<const double> apls,
                   std::uint64_t step);

  /// Convex-hull augmentation (if enabled) and a refit of every surrogate.
  RetrainReport retrain(std::uint64_t step);
  bool trained() const;

 private:
  TreeRegConfig cfg_;
  ReferenceSet ref_;
  std::unique_ptr<Model> scratch_;  // last observed model, used to label synthetic subsets
  std::vector<std::string> segments_;
  std::vector<Surrogate> surrogates_;
  std::mt19937_64 rng_;
};

}  // namespace treereg

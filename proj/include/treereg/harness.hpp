// SPDX-License-Identifier: Apache-2.0
//
// Training loop with interleaved surrogate upkeep, lambda sweeps, tree
// distillation and the plain decision-tree baselines.
#pragma once

#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "treereg/config.hpp"
#include "treereg/data.hpp"
#include "treereg/metrics.hpp"
#include "treereg/regularize.hpp"

namespace treereg {

/// Training diverged (non-finite loss).
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A dataset with its splits, region partition and APL reference sets.
struct Problem {
  bool sequential = false;
  TabularDataset table;     // tabular data (all splits)
  SequenceDataset sequences;
  TabularDataset train_table, test_table;
  SequenceDataset train_seq, test_seq;
  RegionPartition partition;
  ReferenceSet train_ref;   // regions per partition
  ReferenceSet test_ref;

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t train_count() const;  // rows or sequences
  Batch train_batch(std::span<const std::size_t> idx) const;
};

Problem load_problem(const RunConfig& cfg);

struct EpochRow {
  std::size_t epoch = 0;
  std::uint64_t step = 0;
  double data_loss = 0.0;   // mean over the epoch's minibatches
  double penalty = 0.0;     // mean raw penalty value
  double true_apl = -1.0;   // mean over regions of the latest observation (-1: not observed)
  double pred_apl = -1.0;   // surrogate estimate at the same point
};

/// One observation of the surrogate against the ground truth.
struct TrackRow {
  std::uint64_t step = 0;
  std::vector<double> true_apls;
  std::vector<double> predicted;
  bool at_retrain = false;  // taken just before a scheduled retrain
  std::vector<double> refit;  // at_retrain rows: prediction at the same theta after the retrain
};

struct TrainLog {
  std::vector<EpochRow> epochs;
  std::vector<TrackRow> tracking;
  std::vector<RetrainReport> retrains;
};

struct SweepRecord {
  std::string config_hash;
  RegKind regularizer = RegKind::kNone;
  double lambda = 0.0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double seconds = 0.0;
  MetricsRecord train;
  MetricsRecord test;
  std::string run_dir;
  std::string checkpoint;
  std::vector<std::string> tree_files;
  TrainLog log;
  std::shared_ptr<const Model> model;
  std::optional<DecisionTree> tree;  // distilled on the training reference, output 0
};

/// Thresholded predictions, probabilities and labels for one split, flattened
/// to one row per labelled (example, timestep).
struct Predictions {
  std::vector<std::vector<double>> prob;   // per output
  std::vector<std::vector<int>> pred;
  std::vector<std::vector<int>> label;
};
Predictions predict_split(const Model& model, const Problem& pb, Split s);

/// Tree inputs for distillation: the reference features, plus HMM beliefs for
/// GRU-HMM models when cfg.distill_beliefs is set.
Matrix distill_features(const Model& model, const ReferenceSet& ref, const RunConfig& cfg);
std::vector<std::string> distill_feature_names(const Model& model, const Problem& pb,
                                               const RunConfig& cfg);

/// Metrics on a split; the distilled tree (trained on the training reference)
/// gives the fidelity.
MetricsRecord evaluate(const Model& model, const Problem& pb, Split s, const RunConfig& cfg,
                       const DecisionTree* distilled);

AplOptions eval_apl_options(const RunConfig& cfg);

/// Trains one model. Artifacts go under run_dir when it is non-empty.
SweepRecord run_train(const RunConfig& cfg, const Problem& pb, RegKind reg, double lambda,
                      std::uint64_t seed, const std::string& run_dir = "");
/// Convenience: first regularizer, lambda and seed of cfg; loads the data.
SweepRecord run_train(const RunConfig& cfg);

struct SweepResult {
  std::vector<SweepRecord> records;
  std::size_t skipped = 0;  // already present in the tradeoff CSV
  std::size_t failed = 0;
};

/// Every regularizer x lambda x seed. With cfg.output_dir set, appends rows to
/// <output_dir>/tradeoff.csv and skips combinations already recorded there.
SweepResult run_sweep(const RunConfig& cfg, const Problem& pb);
SweepResult run_sweep(const RunConfig& cfg);

std::string tradeoff_header();
std::vector<std::string> tradeoff_rows(const SweepRecord& r);

struct DistilledTree {
  std::size_t output = 0;
  std::size_t region = 0;  // 0 when no regions
  DecisionTree tree;
  double fidelity = 0.0;   // on the test reference
  double apl = 0.0;        // on the training reference rows used
  std::string dot;
};

/// Pruned trees fit to the model's predictions, per output (and per region
/// when per_region is set); regions with fewer than 10 rows are skipped.
std::vector<DistilledTree> run_distill(const Model& model, const Problem& pb, const RunConfig& cfg,
                                       bool per_region, std::vector<std::string>* warnings = nullptr);

/// Decision trees fit to the labels directly over an h grid; global, or one
/// tree per region when regional.
std::vector<SweepRecord> run_baseline_trees(const Problem& pb, const RunConfig& cfg,
                                            std::span<const std::size_t> h_grid, bool regional);

}  // namespace treereg

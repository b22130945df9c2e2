// SPDX-License-Identifier: Apache-2.0
//
// Run configuration as flat "key = value" text. Lists are comma separated.
// Unknown keys are errors.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "treereg/models.hpp"
#include "treereg/regularize.hpp"

namespace treereg {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class RegKind : std::uint8_t { kNone, kL1, kL2, kTreeGlobal, kTreeRegionalL1, kTreeRegionalL0 };
std::string to_string(RegKind k);
RegKind parse_reg_kind(const std::string& s);
bool is_tree(RegKind k);
TreeMode tree_mode(RegKind k);

struct RunConfig {
  std::string experiment = "run";

  // dataset: parabola | signal-noise | rectangles | csv
  std::string dataset = "parabola";
  std::string csv_path;
  std::string schema_path;
  std::uint64_t data_seed = 0;
  double parabola_band = 0.10;
  std::size_t rect_grid = 100;

  ModelSpec model;

  std::vector<RegKind> regularizers = {RegKind::kNone};
  std::vector<double> lambdas = {0.0};
  std::vector<std::uint64_t> seeds = {0};

  std::size_t h = 1;
  double prune_fraction = 0.2;
  bool pruned = true;
  std::size_t eval_h = 0;  // 0 = same as h

  // surrogate
  SurrogateConfig surrogate;
  std::size_t retrain_every = 25;
  bool retrain_in_epochs = true;  // false = count optimizer steps
  std::size_t record_every = 1;
  bool augment = true;
  bool normalize_sparsemax = false;
  std::size_t restarts = 0;
  std::size_t restart_epochs = 5;

  // optimizer
  double learning_rate = 1e-3;
  std::size_t batch_size = 100;
  std::size_t epochs = 250;

  // regions: none | kmeans | intervals | file
  std::string regions = "none";
  std::size_t kmeans_k = 5;
  std::uint64_t kmeans_seed = 0;
  std::size_t interval_feature = 0;
  std::vector<double> interval_edges;
  std::string region_file;

  bool distill_beliefs = true;  // GRU-HMM trees see inputs plus HMM beliefs
  std::size_t checkpoint_every = 0;  // epochs; 0 = only at the end
  std::string output_dir;             // empty = write nothing

  /// Applies one key; throws ConfigError on unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  /// Checks invariants (lambda >= 0, epochs >= 1, files exist, ...).
  void validate() const;
  /// Exact snapshot in the same "key = value" format.
  std::string to_text() const;
  /// Stable hash of to_text() without output_dir, regularizers, lambdas, seeds.
  std::string hash() const;
};

RunConfig parse_config(const std::string& text, RunConfig base = {});
RunConfig load_config(const std::string& path, RunConfig base = {});

/// Preset experiment settings: parabola, signal-noise,
/// signal-noise-gruhmm, rectangles, wine.
RunConfig preset(const std::string& name);

/// n values spaced evenly in log10 between lo and hi.
std::vector<double> log_grid(double lo, double hi, std::size_t n);

}  // namespace treereg

// SPDX-License-Identifier: Apache-2.0
//
// Synthetic benchmarks (2D parabola, signal-and-noise HMM, five rectangles),
// CSV ingestion with z-scoring, splits, batching and region partitions.
#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "treereg/batch.hpp"
#include "treereg/matrix.hpp"

namespace treereg {

enum class Split : std::uint8_t { kTrain, kValid, kTest };
std::string to_string(Split s);

struct TabularDataset {
  Matrix x;                                // N x P
  Matrix y;                                // N x Q, entries 0/1
  std::vector<std::string> feature_names;  // P
  std::vector<Split> split;                // N
  std::vector<std::size_t> flipped;        // rows whose label a generator flipped

  std::size_t size() const { return x.rows(); }
  std::vector<std::size_t> rows(Split s) const;
  /// Rows of one split, in dataset order.
  TabularDataset subset(Split s) const;
  TabularDataset take(std::span<const std::size_t> rows) const;
};

struct Sequence {
  Matrix x;                    // T x P
  Matrix y;                    // T x Q
  std::vector<int> latent;     // generator's hidden state per step (may be empty)
  std::vector<int> latent_noise;
};

struct SequenceDataset {
  std::vector<Sequence> sequences;
  std::vector<Split> split;
  std::vector<std::string> feature_names;

  std::size_t input_dim() const { return feature_names.size(); }
  std::size_t output_dim() const { return sequences.empty() ? 0 : sequences[0].y.cols(); }
  SequenceDataset subset(Split s) const;
  /// Every timestep as one tabular row (features and labels).
  TabularDataset flatten() const;
};

struct HmmSpec {
  std::vector<double> prior;
  Matrix transition;  // K x K, rows sum to 1
  Matrix emission;    // K x P independent Bernoulli probabilities
};

HmmSpec signal_hmm_spec();
HmmSpec noise_hmm_spec();
/// Stationary distribution of a row-stochastic matrix (power iteration).
std::vector<double> stationary_distribution(const Matrix& transition);

struct ParabolaOptions {
  std::size_t n = 500;
  double flip_fraction = 0.10;
  double band = 0.10;  // half-width of the near-boundary flip band (vertical distance)
  double test_fraction = 0.30;
};
/// Clean parabola label: 1 iff x2 > 5 (x1 - 0.5)^2 + 0.4.
int parabola_label(double x1, double x2);
TabularDataset gen_parabola(std::uint64_t seed, const ParabolaOptions& opt = {});

struct SignalNoiseOptions {
  std::size_t n = 100;
  std::size_t steps = 50;
  double test_fraction = 0.30;
};
SequenceDataset gen_signal_noise_hmm(std::uint64_t seed, const SignalNoiseOptions& opt = {});

struct RectanglesOptions {
  std::size_t n_train = 250;
  double flip_fraction = 0.05;
  std::size_t grid = 100;  // test grid is grid x grid over [0,5] x [0,1]
};
/// Clean five-rectangles label.
int rectangles_label(double x, double y);
TabularDataset gen_five_rectangles(std::uint64_t seed, const RectanglesOptions& opt = {});

/// round(fraction * n) with ties to even.
std::size_t round_count(double fraction, std::size_t n);

// ---------------------------------------------------------------------------
// CSV

struct CsvSchema {
  std::vector<std::string> targets;       // label columns
  double threshold = 0.5;                 // label = value >= threshold
  std::vector<std::string> categorical;   // one-hot encoded, not z-scored
  std::vector<std::string> drop;          // ignored columns
  char delimiter = 0;                     // 0 = detect from header (',' or ';')
  double test_fraction = 0.3;
  double valid_fraction = 0.0;
  std::uint64_t split_seed = 0;
};

/// Schema from "key = value" text: target, threshold, categorical, drop,
/// delimiter, test_fraction, valid_fraction, split_seed. Lists are comma separated.
CsvSchema parse_schema(const std::string& text);
CsvSchema load_schema(const std::string& path);

/// Parses CSV text, binarizes targets, one-hot encodes categoricals, assigns a
/// seeded random split and z-scores continuous columns with training-split
/// statistics (constant columns map to 0).
TabularDataset parse_csv(const std::string& text, const CsvSchema& schema);
TabularDataset load_csv(const std::string& path, const CsvSchema& schema);

/// Writes features and labels with a header row, plus "<path>.split" holding
/// one split tag per row.
void write_csv(const TabularDataset& d, const std::string& path);

// ---------------------------------------------------------------------------
// Regions

/// Exclusive partition of input space.
class RegionPartition {
 public:
  enum class Kind : std::uint8_t { kSingle, kCentroids, kIntervals };

  static RegionPartition single();
  /// Nearest centroid (Euclidean), ties to the lower index.
  static RegionPartition centroids(Matrix c);
  /// Bins on one feature: (-inf, e0], (e0, e1], ..., (e_last, inf).
  static RegionPartition intervals(std::size_t feature, std::vector<double> edges);

  Kind kind() const { return kind_; }
  std::size_t count() const { return count_; }
  const Matrix& centers() const { return centers_; }
  std::size_t feature() const { return feature_; }
  const std::vector<double>& edges() const { return edges_; }
  std::string name(std::size_t r) const { return "region" + std::to_string(r); }

  std::size_t assign(std::span<const double> x) const;
  std::vector<std::size_t> assign(const Matrix& x) const;

  std::string to_text() const;
  static RegionPartition from_text(const std::string& text);

 private:
  Kind kind_ = Kind::kSingle;
  std::size_t count_ = 1;
  Matrix centers_;
  std::size_t feature_ = 0;
  std::vector<double> edges_;
};

struct KMeansResult {
  RegionPartition partition;
  std::vector<std::size_t> assignment;
  std::vector<double> objective;  // within-cluster sum of squares after each iteration
  std::size_t iterations = 0;
};

/// Lloyd's algorithm with k-means++ seeding; stops when every centroid moves
/// less than 1e-8 or after max_iter. Empty clusters are re-seeded at the point
/// farthest from its centroid.
KMeansResult kmeans_regions(const Matrix& x, std::size_t k, std::uint64_t seed,
                            std::size_t max_iter = 300);

// ---------------------------------------------------------------------------
// Batching

/// Random split tags with the given fractions (test first, then validation).
std::vector<Split> random_split(std::size_t n, double test_fraction, double valid_fraction,
                                std::mt19937_64& rng);

/// One-timestep batch of the given rows.
Batch tabular_batch(const TabularDataset& d, std::span<const std::size_t> rows);
/// Time-major batch over the given sequences, padded to the longest with mask 0.
Batch sequence_batch(const SequenceDataset& d, std::span<const std::size_t> seqs);

/// Shuffled minibatches of row (or sequence) indices; the last may be short.
std::vector<std::vector<std::size_t>> minibatches(std::size_t n, std::size_t batch_size,
                                                  std::mt19937_64& rng);

}  // namespace treereg

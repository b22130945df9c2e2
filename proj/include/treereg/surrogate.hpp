// SPDX-License-Identifier: Apache-2.0
//
// Differentiable stand-in for the APL: a one-hidden-layer tanh MLP fit by
// ridge-penalized squared error to (theta, APL) pairs gathered along the
// target model's optimization trajectory.
#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "treereg/autodiff.hpp"
#include "treereg/params.hpp"

namespace treereg {

struct AplSample {
  std::vector<double> theta;
  double apl = 0.0;
  std::uint64_t step = 0;
};

struct SurrogateConfig {
  std::size_t hidden = 25;
  std::size_t capacity = 100;    // J
  std::size_t window = 1000;     // E, in optimizer steps
  std::size_t augment = 250;     // convex-hull samples per retrain
  double dirichlet_alpha = 1.0;
  double epsilon = 1e-4;         // ridge strength on all surrogate weights
  std::size_t epochs = 300;      // Adam passes over the fit set per retrain
  double learning_rate = 5e-3;
  std::size_t min_samples = 10;
  /// Multiplier on centred inputs; 0 picks 1 / rms of the centred fit set.
  double input_scale = 1.0;
};

struct FitReport {
  bool trained = false;  // false when too few samples were available
  std::size_t buffer_size = 0;
  std::size_t augmented = 0;
  double mean_mse = 0.0;
  double max_mse = 0.0;
};

class Surrogate {
 public:
  Surrogate(std::size_t input_dim, SurrogateConfig cfg, std::uint64_t seed);

  std::size_t input_dim() const { return input_dim_; }
  const SurrogateConfig& config() const { return cfg_; }
  const std::deque<AplSample>& buffer() const { return buffer_; }
  const ParamVector& weights() const { return net_; }
  ParamVector& weights() { return net_; }
  std::size_t retrain_count() const { return retrains_; }

  /// Omega-hat for a 1 x D row; differentiable w.r.t. theta. The surrogate
  /// weights enter as constants.
  Var predict(Var theta) const;
  /// Raw network output (may be negative).
  double predict_raw(std::span<const double> theta) const;
  /// Output clamped at zero, for reporting.
  double predict_value(std::span<const double> theta) const;

  /// Appends a sample, drops entries older than the window relative to step,
  /// then the oldest beyond capacity.
  void record(std::vector<double> theta, double apl, std::uint64_t step);

  /// Fits the net to buffer plus extra samples. Warm-starts from the current
  /// weights. Skips (trained = false) below min_samples.
  FitReport retrain(std::span<const AplSample> extra = {});

  /// In-sample squared errors of the current net on the given samples.
  std::pair<double, double> mse(std::span<const AplSample> samples) const;

 private:
  std::size_t input_dim_;
  SurrogateConfig cfg_;
  ParamVector net_;               // W1 (H x D), b1 (1 x H), w2 (1 x H), b2 (1 x 1)
  std::vector<double> shift_;     // input centring and scale, fixed between retrains
  std::vector<double> inv_scale_;
  std::deque<AplSample> buffer_;
  std::mt19937_64 rng_;
  std::size_t retrains_ = 0;
};

/// Convex combinations of the given vectors with Dirichlet(alpha) weights.
std::vector<std::vector<double>> convex_hull_thetas(std::span<const std::vector<double>> points,
                                                    std::size_t count, double alpha,
                                                    std::mt19937_64& rng);

/// Synthetic samples from the hull of a surrogate's buffer, labelled by apl_of.
std::vector<AplSample> augment_convex_hull(const Surrogate& s, std::size_t count,
                                           const std::function<double(std::span<const double>)>& apl_of,
                                           std::mt19937_64& rng);

/// Runs harvest(seed) for restart seeds base_seed, base_seed+1, ...; each call
/// trains one unregularized copy briefly and returns its (theta, APL) trail.
std::vector<AplSample> restart_samples(
    const std::function<std::vector<AplSample>(std::uint64_t)>& harvest, std::size_t restarts,
    std::uint64_t base_seed);

}  // namespace treereg

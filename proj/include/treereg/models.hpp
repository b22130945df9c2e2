// SPDX-License-Identifier: Apache-2.0
//
// Target model families: MLP, GRU, HMM trained by gradient descent, and the
// GRU-HMM residual hybrid. All parameters live in one ParamVector per model;
// the hybrid prefixes its component segments with "hmm." and "gru.".
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "treereg/autodiff.hpp"
#include "treereg/batch.hpp"
#include "treereg/params.hpp"

namespace treereg {

enum class ModelFamily { kMlp, kGru, kHmm, kGruHmm };
enum class Activation { kLeakyRelu, kTanh };
enum class Emission { kBernoulli, kGaussian };

std::string to_string(ModelFamily f);
ModelFamily parse_family(const std::string& s);
std::string to_string(Activation a);
Activation parse_activation(const std::string& s);
std::string to_string(Emission e);
Emission parse_emission(const std::string& s);

/// Everything needed to rebuild a model's shape.
struct ModelSpec {
  ModelFamily family = ModelFamily::kMlp;
  std::size_t input_dim = 1;
  std::size_t output_dim = 1;
  std::vector<std::size_t> hidden = {100, 100, 10};  // MLP hidden widths
  Activation activation = Activation::kLeakyRelu;   // MLP hidden activation
  std::size_t gru_states = 25;
  std::size_t hmm_states = 5;
  Emission emission = Emission::kBernoulli;
};

class Model {
 public:
  virtual ~Model() = default;

  const ModelSpec& spec() const { return spec_; }
  ModelFamily family() const { return spec_.family; }
  std::size_t input_dim() const { return spec_.input_dim; }
  std::size_t output_dim() const { return spec_.output_dim; }
  bool sequential() const { return spec_.family != ModelFamily::kMlp; }

  ParamVector& params() { return params_; }
  const ParamVector& params() const { return params_; }

  /// Per-timestep logits (B x Q) for time-major inputs xs (each B x P).
  virtual std::vector<Var> logits(const BoundParams& p, std::span<const Var> xs) const = 0;
  /// Segments whose values form the regularized subset.
  virtual std::vector<std::string> regularized_segments() const = 0;
  virtual std::unique_ptr<Model> clone() const = 0;

  /// Filtered HMM beliefs per timestep (B x K); empty for models without an HMM.
  virtual std::vector<Matrix> beliefs(std::span<const Matrix> xs) const;

 protected:
  explicit Model(ModelSpec spec) : spec_(std::move(spec)) {}
  ModelSpec spec_;
  ParamVector params_;
};

class MlpModel final : public Model {
 public:
  MlpModel(std::size_t input_dim, std::vector<std::size_t> hidden, std::size_t output_dim,
           Activation act, std::uint64_t seed);

  std::size_t layers() const { return spec_.hidden.size() + 1; }
  std::vector<Var> logits(const BoundParams& p, std::span<const Var> xs) const override;
  std::vector<std::string> regularized_segments() const override;
  std::unique_ptr<Model> clone() const override { return std::make_unique<MlpModel>(*this); }
};

/// GRU with gates z (update), r (reset) and candidate h~:
///   z = sig(V_z x + U_z h + b_z), r = sig(V_r x + U_r h + b_r),
///   h~ = tanh(V_h x + U_h (r . h) + b_h), h' = (1 - z) h + z h~,
///   logit = w h' + c.
/// V_* are K x P, U_* are K x K, w is Q x K.
class GruModel final : public Model {
 public:
  GruModel(std::size_t input_dim, std::size_t states, std::size_t output_dim, std::uint64_t seed);

  std::size_t states() const { return spec_.gru_states; }
  Var step(const BoundParams& p, Var x, Var h) const;
  std::vector<Var> logits(const BoundParams& p, std::span<const Var> xs) const override;
  std::vector<std::string> regularized_segments() const override { return {"w", "c"}; }
  std::unique_ptr<Model> clone() const override { return std::make_unique<GruModel>(*this); }
};

/// HMM whose prior, transition rows and emissions are softmax/sigmoid-mapped
/// logits, read out by logistic regression on the filtered belief p(s_t | x_1..t).
/// State s_0 is drawn from the prior and emits nothing; x_t is emitted by s_t.
class HmmModel final : public Model {
 public:
  HmmModel(std::size_t input_dim, std::size_t states, std::size_t output_dim, Emission emission,
           std::uint64_t seed);

  std::size_t states() const { return spec_.hmm_states; }
  /// Beliefs per timestep, each B x K. Throws if every state has zero
  /// likelihood at some step.
  std::vector<Var> filter(const BoundParams& p, std::span<const Var> xs) const;
  std::vector<Var> logits(const BoundParams& p, std::span<const Var> xs) const override;
  std::vector<std::string> regularized_segments() const override { return {"w"}; }
  std::unique_ptr<Model> clone() const override { return std::make_unique<HmmModel>(*this); }
  std::vector<Matrix> beliefs(std::span<const Matrix> xs) const override;

  /// Sets parameters from probabilities (prior K, transition KxK row-stochastic,
  /// Bernoulli emission KxP), all strictly inside (0, 1).
  void set_probabilities(std::span<const double> prior, const Matrix& transition,
                         const Matrix& emission);
};

/// HMM plus a GRU modelling its residual: p = sig(hmm_logit + gru_logit).
/// Only the GRU output head is regularized.
class GruHmmModel final : public Model {
 public:
  GruHmmModel(std::size_t input_dim, std::size_t hmm_states, std::size_t gru_states,
              std::size_t output_dim, Emission emission, std::uint64_t seed);

  std::vector<Var> logits(const BoundParams& p, std::span<const Var> xs) const override;
  std::vector<std::string> regularized_segments() const override { return {"gru.w", "gru.c"}; }
  std::unique_ptr<Model> clone() const override { return std::make_unique<GruHmmModel>(*this); }
  std::vector<Matrix> beliefs(std::span<const Matrix> xs) const override;
};

std::unique_ptr<Model> make_model(const ModelSpec& spec, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Shared operations

/// Per-output probabilities of an MLP for one feature vector.
std::vector<double> mlp_predict(const MlpModel& model, std::span<const double> x);

/// One GRU transition on plain vectors.
std::vector<double> gru_step(const GruModel& model, std::span<const double> x,
                             std::span<const double> h_prev);

/// Filtered beliefs for one sequence (T x P) as a T x K matrix.
Matrix hmm_filter(const HmmModel& model, const Matrix& sequence);

/// Per-timestep probabilities (B x Q) for a batch, without gradients.
std::vector<Matrix> predict_proba(const Model& model, const Batch& batch);

/// Regularizer hook: receives the bound parameters and returns a 1x1 node.
using PenaltyFn = std::function<Var(const BoundParams&)>;

struct LossTerms {
  Var total;
  Var data;
  Var penalty;  // invalid when no regularizer was supplied
};

/// Mean masked binary cross-entropy over examples, timesteps and outputs,
/// plus lambda times the penalty.
LossTerms model_loss(const Model& model, const BoundParams& p, const Batch& batch, double lambda,
                     const PenaltyFn& penalty);

/// Copy of the regularized segments as their own ParamVector.
ParamVector regularized_params(const Model& model);
/// Flat indices of the regularized subset within model.params().
std::vector<std::size_t> regularized_indices(const Model& model);

// Checkpoints are JSON: family, shape metadata, segment table and flat values.
std::string checkpoint_json(const Model& model);
std::unique_ptr<Model> model_from_checkpoint_json(const std::string& text);
void save_checkpoint(const Model& model, const std::string& path);
std::unique_ptr<Model> load_checkpoint(const std::string& path);

}  // namespace treereg

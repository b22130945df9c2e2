// SPDX-License-Identifier: Apache-2.0
#include "treereg/models.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace treereg {

namespace {

using json = nlohmann::json;

std::vector<Var> as_constants(Graph& g, std::span<const Matrix> xs) {
  std::vector<Var> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(g.constant(x));
  return out;
}

void check_input(const char* who, Var x, std::size_t p) {
  if (x.cols() != p) {
    throw ShapeError(std::string(who) + ": input has " + std::to_string(x.cols()) +
                     " features, model expects " + std::to_string(p));
  }
}

// --- GRU pieces, parameterized by segment prefix so the hybrid can reuse them.

void add_gru_segments(ParamVector& pv, const std::string& pre, std::size_t p, std::size_t k,
                      std::size_t q, std::mt19937_64& rng) {
  for (const char* gate : {"z", "r", "h"}) {
    pv.glorot(pv.add(pre + "V_" + gate, k, p), rng);
    pv.glorot(pv.add(pre + "U_" + gate, k, k), rng);
    pv.add(pre + "b_" + gate, 1, k);
  }
  pv.glorot(pv.add(pre + "w", q, k), rng);
  pv.add(pre + "c", 1, q);
}

Var gru_transition(const BoundParams& p, const std::string& pre, Var x, Var h) {
  auto gate = [&](const std::string& g, Var hin) {
    return add_row(add(matmul_bt(x, p.at(pre + "V_" + g)), matmul_bt(hin, p.at(pre + "U_" + g))),
                   p.at(pre + "b_" + g));
  };
  Var z = sigmoid(gate("z", h));
  Var r = sigmoid(gate("r", h));
  Var cand = tanh(gate("h", mul(r, h)));
  // (1 - z) h + z h~ written as h + z (h~ - h)
  return add(h, mul(z, sub(cand, h)));
}

std::vector<Var> gru_outputs(const BoundParams& p, const std::string& pre, std::span<const Var> xs,
                             std::size_t states) {
  std::vector<Var> out;
  if (xs.empty()) return out;
  Graph& g = xs[0].graph();
  Var h = g.constant(Matrix(xs[0].rows(), states));
  for (Var x : xs) {
    h = gru_transition(p, pre, x, h);
    out.push_back(add_row(matmul_bt(h, p.at(pre + "w")), p.at(pre + "c")));
  }
  return out;
}

// --- HMM pieces.

void add_hmm_segments(ParamVector& pv, const std::string& pre, std::size_t p, std::size_t k,
                      std::size_t q, Emission emission, std::mt19937_64& rng) {
  std::normal_distribution<double> small(0.0, 0.1);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::normal_distribution<double> standard(0.0, 1.0);
  pv.add(pre + "prior", 1, k);
  const std::size_t trans = pv.add(pre + "trans", k, k);
  for (double& v : pv.values(trans)) v = small(rng);
  if (emission == Emission::kBernoulli) {
    const std::size_t e = pv.add(pre + "emit", k, p);
    for (double& v : pv.values(e)) v = unit(rng);
  } else {
    const std::size_t mu = pv.add(pre + "mu", k, p);
    for (double& v : pv.values(mu)) v = standard(rng);
    pv.add(pre + "logvar", k, p);
  }
  pv.glorot(pv.add(pre + "w", q, k), rng);
}

Var emission_loglik(const BoundParams& p, const std::string& pre, Emission emission, Var x) {
  Graph& g = x.graph();
  const Matrix& xv = x.value();
  if (emission == Emission::kBernoulli) {
    Var e = p.at(pre + "emit");
    Matrix flipped(xv.rows(), xv.cols());
    for (std::size_t i = 0; i < xv.size(); ++i) flipped[i] = 1.0 - xv[i];
    return add(matmul_bt(x, log_sigmoid(e)), matmul_bt(g.constant(std::move(flipped)),
                                                         log_sigmoid(scale(e, -1.0))));
  }
  // Diagonal Gaussian:
  // -0.5 * [ x^2 . iv - 2 x . (mu iv) + sum_p (mu^2 iv + logvar) + P log(2 pi) ]
  Var mu = p.at(pre + "mu");
  Var logvar = p.at(pre + "logvar");
  Var iv = exp(scale(logvar, -1.0));
  Matrix xsq(xv.rows(), xv.cols());
  for (std::size_t i = 0; i < xv.size(); ++i) xsq[i] = xv[i] * xv[i];
  const std::size_t k = mu.rows();
  const std::size_t pdim = mu.cols();
  Var quad = sub(matmul_bt(g.constant(std::move(xsq)), iv), scale(matmul_bt(x, mul(mu, iv)), 2.0));
  Var per_state = matmul(add(mul(square(mu), iv), logvar), g.constant(Matrix(pdim, 1, 1.0)));
  Var total = add_row(quad, reshape(per_state, 1, k));
  return scale(add_scalar(total, static_cast<double>(pdim) * std::log(2.0 * std::numbers::pi)),
               -0.5);
}

std::vector<Var> hmm_beliefs(const BoundParams& p, const std::string& pre, Emission emission,
                             std::span<const Var> xs) {
  std::vector<Var> out;
  if (xs.empty()) return out;
  Graph& g = xs[0].graph();
  const std::size_t batch = xs[0].rows();
  Var trans = softmax_rows(p.at(pre + "trans"));
  Var prior = softmax_rows(p.at(pre + "prior"));
  const std::size_t k = prior.cols();
  // s_0 ~ prior, so the predictive distribution of s_1 is prior * A.
  Var pred = add_row(g.constant(Matrix(batch, k)), matmul(prior, trans));
  for (std::size_t t = 0; t < xs.size(); ++t) {
    Var joint = add(log(add_scalar(pred, 1e-300)), emission_loglik(p, pre, emission, xs[t]));
    const Matrix& jv = joint.value();
    for (std::size_t b = 0; b < jv.rows(); ++b) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < jv.cols(); ++c) mx = std::max(mx, jv(b, c));
      if (!std::isfinite(mx)) {
        throw std::runtime_error("hmm_filter: zero total likelihood at timestep " +
                                 std::to_string(t + 1) + " (batch row " + std::to_string(b) + ")");
      }
    }
    Var belief = softmax_rows(joint);
    out.push_back(belief);
    pred = matmul(belief, trans);
  }
  return out;
}

std::vector<Matrix> values_of(std::span<const Var> vs) {
  std::vector<Matrix> out;
  out.reserve(vs.size());
  for (Var v : vs) out.push_back(v.value());
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string to_string(ModelFamily f) {
  switch (f) {
    case ModelFamily::kMlp: return "mlp";
    case ModelFamily::kGru: return "gru";
    case ModelFamily::kHmm: return "hmm";
    case ModelFamily::kGruHmm: return "gru-hmm";
  }
  return "?";
}

ModelFamily parse_family(const std::string& s) {
  if (s == "mlp") return ModelFamily::kMlp;
  if (s == "gru") return ModelFamily::kGru;
  if (s == "hmm") return ModelFamily::kHmm;
  if (s == "gru-hmm" || s == "gruhmm") return ModelFamily::kGruHmm;
  throw std::invalid_argument("unknown model family: " + s);
}

std::string to_string(Activation a) { return a == Activation::kTanh ? "tanh" : "leaky-relu"; }

Activation parse_activation(const std::string& s) {
  if (s == "tanh") return Activation::kTanh;
  if (s == "leaky-relu" || s == "leaky_relu") return Activation::kLeakyRelu;
  throw std::invalid_argument("unknown activation: " + s);
}

std::string to_string(Emission e) { return e == Emission::kGaussian ? "gaussian" : "bernoulli"; }

Emission parse_emission(const std::string& s) {
  if (s == "gaussian") return Emission::kGaussian;
  if (s == "bernoulli") return Emission::kBernoulli;
  throw std::invalid_argument("unknown emission family: " + s);
}

std::vector<Matrix> Model::beliefs(std::span<const Matrix>) const { return {}; }

// --- MLP

MlpModel::MlpModel(std::size_t input_dim, std::vector<std::size_t> hidden, std::size_t output_dim,
                   Activation act, std::uint64_t seed)
    : Model(ModelSpec{ModelFamily::kMlp, input_dim, output_dim, std::move(hidden), act}) {
  std::mt19937_64 rng(seed);
  std::size_t fan_in = input_dim;
  for (std::size_t l = 0; l <= spec_.hidden.size(); ++l) {
    const std::size_t fan_out = l < spec_.hidden.size() ? spec_.hidden[l] : output_dim;
    params_.glorot(params_.add("W" + std::to_string(l), fan_out, fan_in), rng);
    params_.add("b" + std::to_string(l), 1, fan_out);
    fan_in = fan_out;
  }
}

std::vector<Var> MlpModel::logits(const BoundParams& p, std::span<const Var> xs) const {
  std::vector<Var> out;
  for (Var x : xs) {
    check_input("mlp", x, input_dim());
    Var a = x;
    for (std::size_t l = 0; l < layers(); ++l) {
      a = add_row(matmul_bt(a, p[2 * l]), p[2 * l + 1]);
      if (l + 1 < layers()) a = spec_.activation == Activation::kTanh ? tanh(a) : leaky_relu(a);
    }
    out.push_back(a);
  }
  return out;
}

std::vector<std::string> MlpModel::regularized_segments() const {
  std::vector<std::string> names;
  for (const auto& s : params_.segments()) names.push_back(s.name);
  return names;
}

// --- GRU

GruModel::GruModel(std::size_t input_dim, std::size_t states, std::size_t output_dim,
                   std::uint64_t seed)
    : Model(ModelSpec{ModelFamily::kGru, input_dim, output_dim, {}, Activation::kTanh, states}) {
  std::mt19937_64 rng(seed);
  add_gru_segments(params_, "", input_dim, states, output_dim, rng);
}

Var GruModel::step(const BoundParams& p, Var x, Var h) const {
  check_input("gru_step", x, input_dim());
  if (h.cols() != states() || h.rows() != x.rows()) {
    throw ShapeError("gru_step: state " + h.value().shape_string() + " vs input " +
                     x.value().shape_string() + " with K=" + std::to_string(states()));
  }
  return gru_transition(p, "", x, h);
}

std::vector<Var> GruModel::logits(const BoundParams& p, std::span<const Var> xs) const {
  for (Var x : xs) check_input("gru", x, input_dim());
  return gru_outputs(p, "", xs, states());
}

// --- HMM

HmmModel::HmmModel(std::size_t input_dim, std::size_t states, std::size_t output_dim,
                   Emission emission, std::uint64_t seed)
    : Model(ModelSpec{ModelFamily::kHmm, input_dim, output_dim, {}, Activation::kTanh, 0, states,
                      emission}) {
  std::mt19937_64 rng(seed);
  add_hmm_segments(params_, "", input_dim, states, output_dim, emission, rng);
}

std::vector<Var> HmmModel::filter(const BoundParams& p, std::span<const Var> xs) const {
  for (Var x : xs) check_input("hmm", x, input_dim());
  return hmm_beliefs(p, "", spec_.emission, xs);
}

std::vector<Var> HmmModel::logits(const BoundParams& p, std::span<const Var> xs) const {
  std::vector<Var> out;
  for (Var b : filter(p, xs)) out.push_back(matmul_bt(b, p.at("w")));
  return out;
}

std::vector<Matrix> HmmModel::beliefs(std::span<const Matrix> xs) const {
  Graph g;
  BoundParams p(g, params_, false);
  auto vars = as_constants(g, xs);
  return values_of(filter(p, vars));
}

void HmmModel::set_probabilities(std::span<const double> prior, const Matrix& transition,
                                 const Matrix& emission) {
  const std::size_t k = states();
  if (prior.size() != k || transition.rows() != k || transition.cols() != k ||
      emission.rows() != k || emission.cols() != input_dim() ||
      spec_.emission != Emission::kBernoulli) {
    throw ShapeError("HmmModel::set_probabilities: shapes do not match K=" + std::to_string(k));
  }
  Matrix pr(1, k), tr(k, k), em(k, input_dim());
  for (std::size_t i = 0; i < k; ++i) pr[i] = std::log(prior[i]);
  for (std::size_t i = 0; i < tr.size(); ++i) tr[i] = std::log(transition[i]);
  for (std::size_t i = 0; i < em.size(); ++i) em[i] = std::log(emission[i] / (1.0 - emission[i]));
  params_.set(params_.index_of("prior"), pr);
  params_.set(params_.index_of("trans"), tr);
  params_.set(params_.index_of("emit"), em);
}

// --- GRU-HMM

GruHmmModel::GruHmmModel(std::size_t input_dim, std::size_t hmm_states, std::size_t gru_states,
                         std::size_t output_dim, Emission emission, std::uint64_t seed)
    : Model(ModelSpec{ModelFamily::kGruHmm, input_dim, output_dim, {}, Activation::kTanh,
                      gru_states, hmm_states, emission}) {
  std::mt19937_64 rng(seed);
  add_hmm_segments(params_, "hmm.", input_dim, hmm_states, output_dim, emission, rng);
  add_gru_segments(params_, "gru.", input_dim, gru_states, output_dim, rng);
}

std::vector<Var> GruHmmModel::logits(const BoundParams& p, std::span<const Var> xs) const {
  for (Var x : xs) check_input("gru-hmm", x, input_dim());
  auto beliefs = hmm_beliefs(p, "hmm.", spec_.emission, xs);
  auto residual = gru_outputs(p, "gru.", xs, spec_.gru_states);
  std::vector<Var> out;
  for (std::size_t t = 0; t < xs.size(); ++t) {
    out.push_back(add(matmul_bt(beliefs[t], p.at("hmm.w")), residual[t]));
  }
  return out;
}

std::vector<Matrix> GruHmmModel::beliefs(std::span<const Matrix> xs) const {
  Graph g;
  BoundParams p(g, params_, false);
  auto vars = as_constants(g, xs);
  return values_of(hmm_beliefs(p, "hmm.", spec_.emission, vars));
}

std::unique_ptr<Model> make_model(const ModelSpec& s, std::uint64_t seed) {
  switch (s.family) {
    case ModelFamily::kMlp:
      return std::make_unique<MlpModel>(s.input_dim, s.hidden, s.output_dim, s.activation, seed);
    case ModelFamily::kGru:
      return std::make_unique<GruModel>(s.input_dim, s.gru_states, s.output_dim, seed);
    case ModelFamily::kHmm:
      return std::make_unique<HmmModel>(s.input_dim, s.hmm_states, s.output_dim, s.emission, seed);
    case ModelFamily::kGruHmm:
      return std::make_unique<GruHmmModel>(s.input_dim, s.hmm_states, s.gru_states, s.output_dim,
                                           s.emission, seed);
  }
  throw std::invalid_argument("make_model: bad family");
}

// ---------------------------------------------------------------------------

std::vector<double> mlp_predict(const MlpModel& model, std::span<const double> x) {
  if (x.size() != model.input_dim()) {
    throw ShapeError("mlp_predict: input has " + std::to_string(x.size()) +
                     " features, model expects " + std::to_string(model.input_dim()));
  }
  Batch b;
  b.x.push_back(Matrix::row_vector(x));
  auto probs = predict_proba(model, b);
  auto row = probs[0].row(0);
  return {row.begin(), row.end()};
}

std::vector<double> gru_step(const GruModel& model, std::span<const double> x,
                             std::span<const double> h_prev) {
  Graph g;
  BoundParams p(g, model.params(), false);
  Var h = model.step(p, g.constant(Matrix::row_vector(x)), g.constant(Matrix::row_vector(h_prev)));
  auto v = h.value().data();
  return {v.begin(), v.end()};
}

Matrix hmm_filter(const HmmModel& model, const Matrix& sequence) {
  if (sequence.rows() == 0) throw std::invalid_argument("hmm_filter: empty sequence");
  std::vector<Matrix> xs;
  for (std::size_t t = 0; t < sequence.rows(); ++t) xs.push_back(Matrix::row_vector(sequence.row(t)));
  auto beliefs = model.beliefs(xs);
  Matrix out(sequence.rows(), model.states());
  for (std::size_t t = 0; t < beliefs.size(); ++t)
    for (std::size_t k = 0; k < model.states(); ++k) out(t, k) = beliefs[t](0, k);
  return out;
}

std::vector<Matrix> predict_proba(const Model& model, const Batch& batch) {
  Graph g;
  BoundParams p(g, model.params(), false);
  auto xs = as_constants(g, batch.x);
  std::vector<Matrix> out;
  for (Var z : model.logits(p, xs)) out.push_back(sigmoid(z).value());
  return out;
}

LossTerms model_loss(const Model& model, const BoundParams& p, const Batch& batch, double lambda,
                     const PenaltyFn& penalty) {
  if (lambda < 0.0) throw std::invalid_argument("model_loss: lambda must be >= 0");
  if (batch.steps() == 0) throw std::invalid_argument("model_loss: empty batch");
  Graph& g = p[0].graph();
  auto xs = as_constants(g, batch.x);
  auto zs = model.logits(p, xs);
  double normalizer = 0.0;
  for (const auto& m : batch.mask)
    for (double v : m.data()) normalizer += v;
  if (normalizer <= 0.0) throw std::invalid_argument("model_loss: batch has no labelled entries");

  LossTerms terms;
  for (std::size_t t = 0; t < zs.size(); ++t) {
    Var step = bce_logits(zs[t], g.constant(batch.y[t]), g.constant(batch.mask[t]), normalizer);
    terms.data = t == 0 ? step : add(terms.data, step);
  }
  terms.total = terms.data;
  if (penalty) {
    terms.penalty = penalty(p);
    terms.total = add(terms.data, scale(terms.penalty, lambda));
  }
  return terms;
}

ParamVector regularized_params(const Model& model) {
  ParamVector out;
  for (const auto& name : model.regularized_segments()) {
    const Segment& s = model.params().segment(name);
    const std::size_t idx = out.add(name, s.rows, s.cols);
    out.set(idx, model.params().matrix(name));
  }
  return out;
}

std::vector<std::size_t> regularized_indices(const Model& model) {
  auto names = model.regularized_segments();
  return model.params().indices(names);
}

// ---------------------------------------------------------------------------

std::string checkpoint_json(const Model& model) {
  const ModelSpec& s = model.spec();
  json j;
  j["format"] = "treereg-checkpoint";
  j["version"] = 1;
  j["family"] = to_string(s.family);
  j["input_dim"] = s.input_dim;
  j["output_dim"] = s.output_dim;
  j["hidden"] = s.hidden;
  j["activation"] = to_string(s.activation);
  j["gru_states"] = s.gru_states;
  j["hmm_states"] = s.hmm_states;
  j["emission"] = to_string(s.emission);
  json segs = json::array();
  for (const auto& seg : model.params().segments()) {
    segs.push_back({{"name", seg.name}, {"rows", seg.rows}, {"cols", seg.cols}});
  }
  j["segments"] = segs;
  auto v = model.params().values();
  j["values"] = std::vector<double>(v.begin(), v.end());
  return j.dump();
}

std::unique_ptr<Model> model_from_checkpoint_json(const std::string& text) {
  json j = json::parse(text);
  if (j.value("format", "") != "treereg-checkpoint") {
    throw std::runtime_error("checkpoint: not a treereg checkpoint");
  }
  ModelSpec s;
  s.family = parse_family(j.at("family").get<std::string>());
  s.input_dim = j.at("input_dim").get<std::size_t>();
  s.output_dim = j.at("output_dim").get<std::size_t>();
  s.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  s.activation = parse_activation(j.at("activation").get<std::string>());
  s.gru_states = j.at("gru_states").get<std::size_t>();
  s.hmm_states = j.at("hmm_states").get<std::size_t>();
  s.emission = parse_emission(j.at("emission").get<std::string>());
  auto model = make_model(s, 0);
  const auto& segs = j.at("segments");
  const auto& expect = model->params().segments();
  if (segs.size() != expect.size()) throw std::runtime_error("checkpoint: segment table mismatch");
  for (std::size_t i = 0; i < segs.size(); ++i) {
    if (segs[i].at("name").get<std::string>() != expect[i].name ||
        segs[i].at("rows").get<std::size_t>() != expect[i].rows ||
        segs[i].at("cols").get<std::size_t>() != expect[i].cols) {
      throw std::runtime_error("checkpoint: segment " + expect[i].name + " does not match");
    }
  }
  model->params().unflatten(j.at("values").get<std::vector<double>>());
  return model;
}

void save_checkpoint(const Model& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  out << checkpoint_json(model) << '\n';
}

std::unique_ptr<Model> load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return model_from_checkpoint_json(ss.str());
}

}  // namespace treereg

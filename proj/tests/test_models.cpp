#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "treereg/data.hpp"
#include "treereg/models.hpp"

using namespace treereg;

namespace {

double sig(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// Plain-loop forward pass for the MLP, reading the segments directly.
std::vector<double> mlp_oracle(const MlpModel& m, std::vector<double> a) {
  const std::size_t layers = m.layers();
  for (std::size_t l = 0; l < layers; ++l) {
    Matrix w = m.params().matrix("W" + std::to_string(l));
    Matrix b = m.params().matrix("b" + std::to_string(l));
    std::vector<double> next(w.rows());
    for (std::size_t o = 0; o < w.rows(); ++o) {
      double s = b[o];
      for (std::size_t i = 0; i < w.cols(); ++i) s += w(o, i) * a[i];
      if (l + 1 < layers) s = s > 0 ? s : 0.01 * s;
      next[o] = s;
    }
    a = next;
  }
  for (double& v : a) v = sig(v);
  return a;
}

std::vector<double> gru_oracle(const GruModel& m, std::span<const double> x, std::span<const double> h) {
  const auto& pv = m.params();
  const std::size_t k = m.states();
  auto gate = [&](const std::string& name, std::span<const double> hin) {
    Matrix v = pv.matrix("V_" + name), u = pv.matrix("U_" + name), b = pv.matrix("b_" + name);
    std::vector<double> out(k);
    for (std::size_t i = 0; i < k; ++i) {
      double s = b[i];
      for (std::size_t j = 0; j < x.size(); ++j) s += v(i, j) * x[j];
      for (std::size_t j = 0; j < k; ++j) s += u(i, j) * hin[j];
      out[i] = s;
    }
    return out;
  };
  auto z = gate("z", h);
  auto r = gate("r", h);
  std::vector<double> rh(k);
  for (std::size_t i = 0; i < k; ++i) rh[i] = sig(r[i]) * h[i];
  auto cand = gate("h", rh);
  std::vector<double> out(k);
  for (std::size_t i = 0; i < k; ++i) {
    const double zi = sig(z[i]);
    out[i] = (1.0 - zi) * h[i] + zi * std::tanh(cand[i]);
  }
  return out;
}

// p(s_t | x_1..t) by summing over every state path.
Matrix hmm_oracle(std::span<const double> prior, const Matrix& trans, const Matrix& emit, const Matrix& xs) {
  const std::size_t k = prior.size();
  const std::size_t t_len = xs.rows();
  Matrix out(t_len, k);
  for (std::size_t t = 1; t <= t_len; ++t) {
    std::vector<double> mass(k, 0.0);
    std::vector<std::size_t> path(t + 1, 0);
    std::size_t total_paths = 1;
    for (std::size_t i = 0; i <= t; ++i) total_paths *= k;
    for (std::size_t code = 0; code < total_paths; ++code) {
      std::size_t c = code;
      for (std::size_t i = 0; i <= t; ++i) {
        path[i] = c % k;
        c /= k;
      }
      double p = prior[path[0]];
      for (std::size_t i = 1; i <= t; ++i) {
        p *= trans(path[i - 1], path[i]);
        for (std::size_t f = 0; f < xs.cols(); ++f) {
          const double e = emit(path[i], f);
          p *= xs(i - 1, f) > 0.5 ? e : 1.0 - e;
        }
      }
      mass[path[t]] += p;
    }
    double z = 0.0;
    for (double v : mass) z += v;
    for (std::size_t s = 0; s < k; ++s) out(t - 1, s) = mass[s] / z;
  }
  return out;
}

Batch toy_sequences(std::size_t b, std::size_t t, std::size_t p, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(0.5);
  Batch batch;
  for (std::size_t s = 0; s < t; ++s) {
    Matrix x(b, p), y(b, 1), m(b, 1, 1.0);
    for (double& v : x.data()) v = coin(rng);
    for (double& v : y.data()) v = coin(rng);
    if (s == t - 1) m(0, 0) = 0.0;  // one padded cell
    batch.x.push_back(x);
    batch.y.push_back(y);
    batch.mask.push_back(m);
  }
  return batch;
}

void check_model_gradient(Model& model, const Batch& batch, double lambda, const PenaltyFn& pen) {
  CHECK(oracle::model_gradient_misses(model, batch, lambda, pen) == 0);
}

}  // namespace

TEST_CASE("mlp forward matches a plain-loop oracle") {
  MlpModel m(3, {5, 4}, 2, Activation::kLeakyRelu, 11);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> x = {u(rng), u(rng), u(rng)};
    auto got = mlp_predict(m, x);
    auto want = mlp_oracle(m, x);
    REQUIRE(got.size() == 2);
    for (std::size_t k = 0; k < 2; ++k) CHECK(got[k] == doctest::Approx(want[k]).epsilon(1e-12));
  }
  CHECK_THROWS_AS(mlp_predict(m, std::vector<double>{1.0}), ShapeError);
}

TEST_CASE("gru step matches a plain-loop oracle") {
  GruModel m(4, 3, 1, 5);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> x = {u(rng), u(rng), u(rng), u(rng)};
    std::vector<double> h = {u(rng), u(rng), u(rng)};
    auto got = gru_step(m, x, h);
    auto want = gru_oracle(m, x, h);
    for (std::size_t i = 0; i < 3; ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("gru with a closed update gate keeps its state") {
  GruModel m(2, 3, 1, 7);
  auto b = m.params().values(m.params().index_of("b_z"));
  for (double& v : b) v = -200.0;
  std::vector<double> h = {0.3, -0.7, 0.1};
  auto out = gru_step(m, std::vector<double>{1.0, -1.0}, h);
  for (std::size_t i = 0; i < 3; ++i) CHECK(out[i] == doctest::Approx(h[i]).epsilon(1e-12));
}

TEST_CASE("hmm beliefs match path enumeration") {
  const std::vector<double> prior = {0.6, 0.3, 0.1};
  const Matrix trans = Matrix::from_rows({{0.7, 0.2, 0.1}, {0.1, 0.8, 0.1}, {0.3, 0.3, 0.4}});
  const Matrix emit = Matrix::from_rows({{0.9, 0.2}, {0.3, 0.6}, {0.5, 0.05}});
  HmmModel m(2, 3, 1, Emission::kBernoulli, 3);
  m.set_probabilities(prior, trans, emit);
  const Matrix xs = Matrix::from_rows({{1, 0}, {1, 1}, {0, 1}, {0, 0}});
  Matrix got = hmm_filter(m, xs);
  Matrix want = hmm_oracle(prior, trans, emit, xs);
  for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-10));
  for (std::size_t t = 0; t < got.rows(); ++t) {
    double s = 0.0;
    for (double v : got.row(t)) s += v;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("hmm filter reports an impossible observation") {
  HmmModel m(1, 2, 1, Emission::kBernoulli, 3);
  m.set_probabilities(std::vector<double>{0.5, 0.5}, Matrix::from_rows({{0.5, 0.5}, {0.5, 0.5}}),
                      Matrix::from_rows({{0.5}, {0.5}}));
  // Emission logits at -inf: x = 1 has zero likelihood under both states.
  auto e = m.params().values(m.params().index_of("emit"));
  for (double& v : e) v = -std::numeric_limits<double>::infinity();
  CHECK_THROWS_WITH_AS(hmm_filter(m, Matrix::from_rows({{1}})), doctest::Contains("timestep 1"),
                       std::runtime_error);
}

TEST_CASE("model loss gradients: every family, with and without a penalty") {
  std::mt19937_64 rng(4);
  SUBCASE("mlp") {
    MlpModel m(3, {4, 3}, 2, Activation::kTanh, 1);
    Batch b;
    b.x.push_back(testutil::random_matrix(5, 3, rng));
    b.y.push_back(Matrix::from_rows({{1, 0}, {0, 0}, {1, 1}, {0, 1}, {1, 0}}));
    b.mask.push_back(Matrix(5, 2, 1.0));
    check_model_gradient(m, b, 0.0, {});
    auto segs = m.regularized_segments();
    check_model_gradient(m, b, 0.3, [segs](const BoundParams& p) { return sum(square(p.gather_row(segs))); });
  }
  SUBCASE("gru") {
    GruModel m(3, 4, 1, 2);
    check_model_gradient(m, toy_sequences(2, 4, 3, rng), 0.0, {});
  }
  SUBCASE("hmm") {
    HmmModel m(3, 3, 1, Emission::kBernoulli, 3);
    check_model_gradient(m, toy_sequences(2, 4, 3, rng), 0.0, {});
  }
  SUBCASE("hmm gaussian") {
    HmmModel m(2, 2, 1, Emission::kGaussian, 3);
    Batch b = toy_sequences(2, 3, 2, rng);
    for (auto& x : b.x)
      for (double& v : x.data()) v += 0.3;
    check_model_gradient(m, b, 0.0, {});
  }
  SUBCASE("gru-hmm") {
    GruHmmModel m(3, 2, 3, 1, Emission::kBernoulli, 4);
    check_model_gradient(m, toy_sequences(2, 3, 3, rng), 0.0, {});
  }
}

TEST_CASE("model loss: penalty is reported and scaled by lambda") {
  MlpModel m(2, {3}, 1, Activation::kLeakyRelu, 1);
  Batch b;
  b.x.push_back(Matrix::from_rows({{0.1, 0.2}}));
  b.y.push_back(Matrix::from_rows({{1}}));
  b.mask.push_back(Matrix(1, 1, 1.0));
  Graph g;
  BoundParams p(g, m.params());
  auto pen = [](const BoundParams& q) { return sum(square(q[0])); };
  auto t0 = model_loss(m, p, b, 0.0, pen);
  auto t1 = model_loss(m, p, b, 2.0, pen);
  CHECK(t0.penalty.valid());
  CHECK(t1.total.value()[0] == doctest::Approx(t1.data.value()[0] + 2.0 * t1.penalty.value()[0]));
  CHECK(t0.total.value()[0] == doctest::Approx(t0.data.value()[0]));
  CHECK_THROWS_AS(model_loss(m, p, b, -1.0, pen), std::invalid_argument);
  CHECK_THROWS(model_loss(m, p, Batch{}, 0.0, pen));
}

TEST_CASE("regularized subsets per family") {
  CHECK(GruModel(2, 3, 1, 0).regularized_segments() == std::vector<std::string>{"w", "c"});
  CHECK(HmmModel(2, 3, 1, Emission::kBernoulli, 0).regularized_segments() == std::vector<std::string>{"w"});
  GruHmmModel hy(2, 3, 4, 1, Emission::kBernoulli, 0);
  CHECK(hy.regularized_segments() == std::vector<std::string>{"gru.w", "gru.c"});
  CHECK(regularized_indices(hy).size() == 4 + 1);
  MlpModel mlp(2, {3}, 1, Activation::kLeakyRelu, 0);
  CHECK(regularized_params(mlp).size() == mlp.params().size());
}

TEST_CASE("checkpoint round trip preserves predictions") {
  std::mt19937_64 rng(9);
  for (ModelFamily f : {ModelFamily::kMlp, ModelFamily::kGru, ModelFamily::kHmm, ModelFamily::kGruHmm}) {
    ModelSpec spec;
    spec.family = f;
    spec.input_dim = 3;
    spec.output_dim = 1;
    spec.hidden = {4};
    spec.gru_states = 3;
    spec.hmm_states = 2;
    auto m = make_model(spec, 5);
    auto back = model_from_checkpoint_json(checkpoint_json(*m));
    CHECK(back->params() == m->params());
    Batch b = toy_sequences(2, f == ModelFamily::kMlp ? 1 : 3, 3, rng);
    auto p0 = predict_proba(*m, b);
    auto p1 = predict_proba(*back, b);
    for (std::size_t t = 0; t < p0.size(); ++t) CHECK(p0[t] == p1[t]);
  }
  CHECK_THROWS(model_from_checkpoint_json("{\"format\": \"other\"}"));
}

TEST_CASE("gru learns the signal-and-noise label rule better than chance") {
  auto data = gen_signal_noise_hmm(3, SignalNoiseOptions{40, 30, 0.25});
  auto train = data.subset(Split::kTrain);
  GruModel m(14, 10, 1, 1);
  AdamState adam(m.params().size(), 1e-2);
  std::vector<std::size_t> all(train.sequences.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  Batch b = sequence_batch(train, all);
  double first = 0, last = 0;
  for (int it = 0; it < 60; ++it) {
    Graph g;
    BoundParams p(g, m.params());
    auto t = model_loss(m, p, b, 0.0, {});
    if (it == 0) first = t.data.value()[0];
    last = t.data.value()[0];
    g.backward(t.total);
    auto grad = p.flat_grad();
    adam_step(m.params(), grad, adam);
  }
  CHECK(last < 0.8 * first);
}

TEST_CASE("adam first step moves each coordinate by the learning rate") {
  ParamVector pv;
  pv.add("a", 1, 3);
  AdamState st(3, 1e-3);
  std::vector<double> g = {0.5, -2.0, 1e-3};
  adam_step(pv, g, st);
  auto v = pv.values();
  CHECK(v[0] == doctest::Approx(-1e-3).epsilon(1e-6));
  CHECK(v[1] == doctest::Approx(1e-3).epsilon(1e-6));
  CHECK(v[2] == doctest::Approx(-1e-3).epsilon(1e-4));
}

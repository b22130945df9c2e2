#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "treereg/harness.hpp"

using namespace treereg;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("treereg_harness_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

RunConfig tiny() {
  RunConfig c = preset("parabola");
  c.model.hidden = {16, 8};
  c.epochs = 30;
  c.learning_rate = 1e-2;
  c.batch_size = 50;
  c.retrain_every = 5;
  c.surrogate.epochs = 50;
  c.surrogate.augment = 20;
  c.surrogate.min_samples = 5;
  return c;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(TREEREG_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("tree run logs tracking rows with refit predictions at retrains") {
  RunConfig c = tiny();
  c.regularizers = {RegKind::kTreeGlobal};
  c.lambdas = {0.1};
  auto rec = run_train(c);
  REQUIRE(rec.ok);
  std::size_t marked = 0;
  for (const auto& t : rec.log.tracking) {
    CHECK(t.predicted.size() == t.true_apls.size());
    if (!t.at_retrain) {
      CHECK(t.refit.empty());
      continue;
    }
    ++marked;
    REQUIRE(t.refit.size() == t.true_apls.size());
    CHECK(std::isfinite(t.refit[0]));
  }
  // one per scheduled retrain after the first fit
  CHECK(marked == c.epochs / c.retrain_every);
}

TEST_CASE("unregularized parabola run fits the training set") {
  RunConfig c = tiny();
  c.epochs = 150;
  auto rec = run_train(c);
  REQUIRE(rec.ok);
  CHECK(rec.train.accuracy > 0.9);
  CHECK(rec.test.apl >= 0.0);
  CHECK(rec.train.fidelity >= 0.75);
  CHECK(rec.train.fidelity <= 1.0);
}

TEST_CASE("identical config and seed reproduce the metrics file") {
  auto d1 = scratch("det1"), d2 = scratch("det2");
  RunConfig c = tiny();
  c.regularizers = {RegKind::kTreeGlobal};
  c.lambdas = {0.01};
  c.output_dir = d1.string();
  run_train(c);
  c.output_dir = d2.string();
  run_train(c);
  const std::string m1 = slurp(d1 / "metrics.csv");
  CHECK(!m1.empty());
  CHECK(m1 == slurp(d2 / "metrics.csv"));
  CHECK(fs::exists(d1 / "config.resolved"));
  CHECK(fs::exists(d1 / "checkpoints" / "final.json"));
  CHECK(fs::exists(d1 / "trees" / "distilled_out0.dot"));
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("sweep is append-safe") {
  auto dir = scratch("sweep");
  RunConfig c = tiny();
  c.epochs = 10;
  c.regularizers = {RegKind::kNone, RegKind::kL2};
  c.lambdas = {0.001, 0.1};
  c.output_dir = dir.string();

  auto first = run_sweep(c);
  // none runs once at lambda 0; l2 runs at both lambdas
  CHECK(first.records.size() == 3);
  CHECK(first.failed == 0);
  const std::string csv = slurp(dir / "tradeoff.csv");
  CHECK(csv.rfind(tradeoff_header(), 0) == 0);

  auto second = run_sweep(c);
  CHECK(second.records.empty());
  CHECK(second.skipped == 3);
  CHECK(slurp(dir / "tradeoff.csv") == csv);

  c.seeds = {0, 1};
  auto third = run_sweep(c);
  CHECK(third.records.size() == 3);
  CHECK(slurp(dir / "tradeoff.csv").size() > csv.size());
  fs::remove_all(dir);
}

TEST_CASE("baseline trees") {
  RunConfig c = preset("parabola");
  Problem pb = load_problem(c);
  const std::size_t n = pb.train_ref.size();
  const std::vector<std::size_t> grid = {1, n};
  auto recs = run_baseline_trees(pb, c, grid, false);
  REQUIRE(recs.size() == 2);
  // h = 1 on labels: every consistent training row is fit
  CHECK(recs[0].train.accuracy > 0.99);
  // h = N: one leaf
  CHECK(recs[1].train.apl == 0.0);
  double pos = 0.0;
  for (std::size_t i = 0; i < pb.train_table.size(); ++i) pos += pb.train_table.y(i, 0);
  const double rate = pos / pb.train_table.size();
  CHECK(recs[1].train.accuracy == doctest::Approx(std::max(rate, 1.0 - rate)));
}

TEST_CASE("distilling a constant model gives one leaf") {
  RunConfig c = tiny();
  Problem pb = load_problem(c);
  ModelSpec spec = c.model;
  spec.input_dim = 2;
  auto m = make_model(spec, 0);
  for (double& v : m->params().values()) v = 0.0;
  m->params().values().back() = -5.0;  // output bias: always class 0
  auto trees = run_distill(*m, pb, c, false, nullptr);
  REQUIRE(trees.size() == 1);
  CHECK(trees[0].tree.nodes().size() == 1);
  CHECK(trees[0].fidelity == 1.0);
}

TEST_CASE("command-line exit codes") {
  auto dir = scratch("cli");
  CHECK(run_cli("train -p parabola -s epochs=0") == 1);
  CHECK(run_cli("train -p parabola -s nonsense=1") == 1);
  CHECK(run_cli("train -p nope") == 1);
  CHECK(run_cli("gen-data parabola -o " + (dir / "p.csv").string()) == 0);
  CHECK(fs::exists(dir / "p.csv"));
  CHECK(run_cli("eval -p parabola --checkpoint " + (dir / "missing.json").string()) == 2);
  CHECK(run_cli("train -p parabola -s epochs=2 -s hidden=4 -o " + (dir / "run").string()) == 0);
  CHECK(fs::exists(dir / "run" / "metrics.csv"));
  fs::remove_all(dir);
}

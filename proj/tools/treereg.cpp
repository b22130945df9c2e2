// SPDX-License-Identifier: Apache-2.0
//
// treereg: data generation, training, sweeps, distillation, baseline trees.
// Exit codes: 0 ok, 1 configuration error, 2 runtime failure, 3 sweep finished
// with some failed runs.
#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "treereg/harness.hpp"

namespace fs = std::filesystem;
using namespace treereg;

namespace {

struct Common {
  std::string config_file;
  std::string preset_name;
  std::vector<std::string> overrides;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config_file, "config file (key = value lines)");
  cmd->add_option("-p,--preset", c.preset_name,
                  "start from a preset: parabola, signal-noise, signal-noise-gruhmm, rectangles, wine");
  cmd->add_option("-s,--set", c.overrides, "override one key, key=value (repeatable)");
  cmd->add_option("-o,--out", c.out, "output directory");
}

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.preset_name.empty() ? RunConfig{} : preset(c.preset_name);
  if (!c.config_file.empty()) cfg = load_config(c.config_file, cfg);
  for (const auto& kv : c.overrides) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + kv + "' is not key=value");
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t"));
      s.erase(s.find_last_not_of(" \t") + 1);
      return s;
    };
    cfg.set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  if (!c.out.empty()) cfg.output_dir = c.out;
  cfg.validate();
  return cfg;
}

void print_metrics(const std::string& tag, const MetricsRecord& m) {
  std::cout << std::setprecision(4) << tag << ": auc " << m.auc << "  f1 " << m.f1 << "  accuracy "
            << m.accuracy << "  apl " << m.apl << "  fidelity " << m.fidelity << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tree-regularized model training"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset as CSV");
  std::string gen_name = "parabola";
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  gen->add_option("dataset", gen_name, "parabola | signal-noise | rectangles")->required();
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("-o,--out", gen_out, "output CSV path")->required();

  Common train_opt, sweep_opt, distill_opt, base_opt, eval_opt;
  auto* train = app.add_subcommand("train", "train one model");
  add_common(train, train_opt);

  auto* sweep = app.add_subcommand("sweep", "regularizer x lambda x seed sweep");
  add_common(sweep, sweep_opt);

  auto* distill = app.add_subcommand("distill", "fit pruned trees to a trained model");
  add_common(distill, distill_opt);
  std::string distill_ckpt;
  bool per_region = false;
  distill->add_option("--checkpoint", distill_ckpt, "model checkpoint (JSON)")->required();
  distill->add_flag("--per-region", per_region, "one tree per region");

  auto* base = app.add_subcommand("baseline-trees", "decision trees trained on the labels");
  add_common(base, base_opt);
  std::vector<std::size_t> h_grid = {1, 2, 5, 10, 25, 50, 100};
  bool base_regional = false;
  base->add_option("--h-grid", h_grid, "minimum-leaf grid");
  base->add_flag("--regional", base_regional, "one tree per region");

  auto* eval = app.add_subcommand("eval", "metrics of a saved checkpoint");
  add_common(eval, eval_opt);
  std::string eval_ckpt;
  eval->add_option("--checkpoint", eval_ckpt, "model checkpoint (JSON)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      if (!fs::path(gen_out).parent_path().empty()) fs::create_directories(fs::path(gen_out).parent_path());
      if (gen_name == "parabola") write_csv(gen_parabola(gen_seed), gen_out);
      else if (gen_name == "rectangles") write_csv(gen_five_rectangles(gen_seed), gen_out);
      else if (gen_name == "signal-noise") write_csv(gen_signal_noise_hmm(gen_seed).flatten(), gen_out);
      else throw ConfigError("unknown dataset '" + gen_name + "'");
      std::cout << "wrote " << gen_out << '\n';
      return 0;
    }

    if (train->parsed()) {
      RunConfig cfg = resolve(train_opt);
      auto rec = run_train(cfg);
      print_metrics("train", rec.train);
      print_metrics("test", rec.test);
      std::cout << "seconds " << rec.seconds << '\n';
      return 0;
    }

    if (sweep->parsed()) {
      RunConfig cfg = resolve(sweep_opt);
      auto res = run_sweep(cfg);
      for (const auto& r : res.records) {
        std::cout << to_string(r.regularizer) << " lambda " << r.lambda << " seed " << r.seed << ": ";
        if (r.ok) {
          std::cout << std::setprecision(4) << "test auc " << r.test.auc << " apl " << r.test.apl
                    << " (" << r.seconds << " s)\n";
        } else {
          std::cout << "FAILED: " << r.error << '\n';
        }
      }
      std::cout << res.records.size() << " runs, " << res.skipped << " skipped, " << res.failed
                << " failed\n";
      return res.failed > 0 ? 3 : 0;
    }

    if (distill->parsed()) {
      RunConfig cfg = resolve(distill_opt);
      auto model = load_checkpoint(distill_ckpt);
      Problem pb = load_problem(cfg);
      std::vector<std::string> warnings;
      auto trees = run_distill(*model, pb, cfg, per_region, &warnings);
      for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
      fs::path dir = cfg.output_dir.empty() ? fs::path(".") : fs::path(cfg.output_dir);
      fs::create_directories(dir);
      for (const auto& t : trees) {
        const std::string stem = "tree_out" + std::to_string(t.output) +
                                 (per_region ? "_region" + std::to_string(t.region) : "");
        std::ofstream(dir / (stem + ".dot")) << t.dot;
        std::ofstream(dir / (stem + ".json")) << t.tree.to_json();
        std::cout << stem << ": apl " << t.apl << "  fidelity " << t.fidelity << '\n';
      }
      return 0;
    }

    if (base->parsed()) {
      RunConfig cfg = resolve(base_opt);
      Problem pb = load_problem(cfg);
      auto recs = run_baseline_trees(pb, cfg, h_grid, base_regional);
      std::ostream* out = &std::cout;
      std::ofstream file;
      if (!cfg.output_dir.empty()) {
        fs::create_directories(cfg.output_dir);
        file.open(fs::path(cfg.output_dir) / "baseline_trees.csv");
        out = &file;
      }
      *out << "h,split,auc,f1,accuracy,apl_eval\n";
      for (const auto& r : recs) {
        if (!r.ok) {
          std::cerr << "h " << r.lambda << " failed: " << r.error << '\n';
          continue;
        }
        for (auto [name, m] : {std::pair{"train", &r.train}, std::pair{"test", &r.test}}) {
          *out << r.lambda << ',' << name << ',' << m->auc << ',' << m->f1 << ',' << m->accuracy << ','
               << m->apl << '\n';
        }
      }
      return 0;
    }

    if (eval->parsed()) {
      RunConfig cfg = resolve(eval_opt);
      auto model = load_checkpoint(eval_ckpt);
      Problem pb = load_problem(cfg);
      auto labels = reference_labels(*model, pb.train_ref);
      auto tree = fit_apl(distill_features(*model, pb.train_ref, cfg), labels.front(),
                          eval_apl_options(cfg)).tree;
      print_metrics("train", evaluate(*model, pb, Split::kTrain, cfg, &tree));
      print_metrics("test", evaluate(*model, pb, Split::kTest, cfg, &tree));
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

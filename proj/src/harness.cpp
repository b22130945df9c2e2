// SPDX-License-Identifier: Apache-2.0
#include "treereg/harness.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

namespace treereg {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

std::string lambda_tag(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

std::vector<std::size_t> iota_vec(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

void write_text(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

// ---------------------------------------------------------------------------
// Problem

std::size_t Problem::input_dim() const {
  return sequential ? sequences.input_dim() : table.x.cols();
}

std::size_t Problem::output_dim() const {
  return sequential ? sequences.output_dim() : table.y.cols();
}

std::size_t Problem::train_count() const {
  return sequential ? train_seq.sequences.size() : train_table.size();
}

Batch Problem::train_batch(std::span<const std::size_t> idx) const {
  return sequential ? sequence_batch(train_seq, idx) : tabular_batch(train_table, idx);
}

Problem load_problem(const RunConfig& cfg) {
  Problem pb;
  if (cfg.dataset == "parabola") {
    ParabolaOptions o;
    o.band = cfg.parabola_band;
    pb.table = gen_parabola(cfg.data_seed, o);
  } else if (cfg.dataset == "rectangles") {
    RectanglesOptions o;
    o.grid = cfg.rect_grid;
    pb.table = gen_five_rectangles(cfg.data_seed, o);
  } else if (cfg.dataset == "csv") {
    pb.table = load_csv(cfg.csv_path, load_schema(cfg.schema_path));
  } else if (cfg.dataset == "signal-noise") {
    pb.sequential = true;
    pb.sequences = gen_signal_noise_hmm(cfg.data_seed);
  } else {
    throw ConfigError("unknown dataset '" + cfg.dataset + "'");
  }

  if (pb.sequential) {
    pb.train_seq = pb.sequences.subset(Split::kTrain);
    pb.test_seq = pb.sequences.subset(Split::kTest);
  } else {
    pb.train_table = pb.table.subset(Split::kTrain);
    pb.test_table = pb.table.subset(Split::kTest);
  }

  if (cfg.regions == "none") {
    pb.partition = RegionPartition::single();
  } else if (cfg.regions == "intervals") {
    pb.partition = RegionPartition::intervals(cfg.interval_feature, cfg.interval_edges);
  } else if (cfg.regions == "kmeans") {
    const Matrix& x = pb.sequential ? pb.train_seq.flatten().x : pb.train_table.x;
    pb.partition = kmeans_regions(x, cfg.kmeans_k, cfg.kmeans_seed).partition;
  } else if (cfg.regions == "file") {
    std::ifstream in(cfg.region_file);
    if (!in) throw ConfigError("cannot open region file " + cfg.region_file);
    std::stringstream ss;
    ss << in.rdbuf();
    pb.partition = RegionPartition::from_text(ss.str());
  } else {
    throw ConfigError("unknown region spec '" + cfg.regions + "'");
  }

  if (pb.sequential) {
    pb.train_ref = make_reference(pb.train_seq, pb.partition);
    pb.test_ref = make_reference(pb.test_seq, pb.partition);
  } else {
    pb.train_ref = make_reference(pb.train_table, pb.partition);
    pb.test_ref = make_reference(pb.test_table, pb.partition);
  }
  return pb;
}

// ---------------------------------------------------------------------------
// Evaluation

Predictions predict_split(const Model& model, const Problem& pb, Split s) {
  const ReferenceSet& ref = s == Split::kTest ? pb.test_ref : pb.train_ref;
  if (s == Split::kValid) throw std::invalid_argument("predict_split: no validation reference");
  auto probs = predict_proba(model, ref.batch);
  const std::size_t q = model.output_dim();
  Predictions out;
  out.prob.assign(q, std::vector<double>(ref.size()));
  out.pred.assign(q, std::vector<int>(ref.size()));
  out.label.assign(q, std::vector<int>(ref.size()));
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const std::size_t t = ref.step[i];
    const std::size_t b = ref.example[i];
    for (std::size_t k = 0; k < q; ++k) {
      const double p = probs[t](b, k);
      out.prob[k][i] = p;
      out.pred[k][i] = p > 0.5 ? 1 : 0;
      out.label[k][i] = ref.batch.y[t](b, k) > 0.5 ? 1 : 0;
    }
  }
  return out;
}

Matrix distill_features(const Model& model, const ReferenceSet& ref, const RunConfig& cfg) {
  if (!(cfg.distill_beliefs && model.family() == ModelFamily::kGruHmm)) return ref.features;
  auto beliefs = model.beliefs(ref.batch.x);
  const std::size_t p = ref.features.cols();
  const std::size_t k = beliefs.front().cols();
  Matrix out(ref.size(), p + k);
  for (std::size_t i = 0; i < ref.size(); ++i) {
    std::copy(ref.features.row(i).begin(), ref.features.row(i).end(), out.row(i).begin());
    for (std::size_t j = 0; j < k; ++j) out(i, p + j) = beliefs[ref.step[i]](ref.example[i], j);
  }
  return out;
}

std::vector<std::string> distill_feature_names(const Model& model, const Problem& pb,
                                               const RunConfig& cfg) {
  std::vector<std::string> names =
      pb.sequential ? pb.sequences.feature_names : pb.table.feature_names;
  if (cfg.distill_beliefs && model.family() == ModelFamily::kGruHmm) {
    for (std::size_t k = 0; k < model.spec().hmm_states; ++k) names.push_back("belief" + std::to_string(k));
  }
  return names;
}

AplOptions eval_apl_options(const RunConfig& cfg) {
  AplOptions o;
  o.h = cfg.eval_h == 0 ? cfg.h : cfg.eval_h;
  o.prune_fraction = cfg.prune_fraction;
  o.pruned = cfg.pruned;
  return o;
}

MetricsRecord evaluate(const Model& model, const Problem& pb, Split s, const RunConfig& cfg,
                       const DecisionTree* distilled) {
  const ReferenceSet& ref = s == Split::kTest ? pb.test_ref : pb.train_ref;
  auto pr = predict_split(model, pb, s);
  MetricsRecord m;
  for (std::size_t k = 0; k < pr.prob.size(); ++k) {
    double a = std::numeric_limits<double>::quiet_NaN();
    try {
      a = auc(pr.prob[k], pr.label[k]);
    } catch (const std::invalid_argument&) {
    }
    m.auc_per_output.push_back(a);
    m.f1_per_output.push_back(f1(pr.pred[k], pr.label[k]));
    m.accuracy_per_output.push_back(accuracy(pr.pred[k], pr.label[k]));
  }
  m.auc = m.auc_per_output.front();
  m.f1 = m.f1_per_output.front();
  m.accuracy = m.accuracy_per_output.front();
  m.apl = mean_of(regional_true_apls(ref, pr.pred, eval_apl_options(cfg)));
  if (distilled) {
    m.fidelity = fidelity(*distilled, distill_features(model, ref, cfg), pr.pred.front());
  }
  return m;
}

// ---------------------------------------------------------------------------
// Training

namespace {

struct Artifacts {
  fs::path dir;
  std::ofstream metrics;

  explicit Artifacts(const std::string& d) : dir(d) {
    if (dir.empty()) return;
    fs::create_directories(dir / "trees");
    fs::create_directories(dir / "checkpoints");
    metrics.open(dir / "metrics.csv");
    metrics << "kind,epoch,step,data_loss,penalty,true_apl,pred_apl,buffer,augmented,mean_mse,max_mse\n";
  }
  bool on() const { return !dir.empty(); }
};

PenaltyFn make_penalty(RegKind reg, const Model& model, const TreeRegularizer* tree) {
  const auto segs = model.regularized_segments();
  switch (reg) {
    case RegKind::kNone:
      return {};
    case RegKind::kL1:
      return [segs](const BoundParams& p) { return l1(p.gather_row(segs)); };
    case RegKind::kL2:
      return [segs](const BoundParams& p) { return l2(p.gather_row(segs)); };
    default:
      return [tree](const BoundParams& p) { return tree->penalty(p); };
  }
}

// Brief unregularized training from a fresh seed, harvesting (theta, APL) each epoch.
void harvest_restarts(const RunConfig& cfg, const Problem& pb, std::uint64_t seed,
                      TreeRegularizer& reg) {
  for (std::size_t r = 0; r < cfg.restarts; ++r) {
    ModelSpec spec = cfg.model;
    spec.input_dim = pb.input_dim();
    spec.output_dim = pb.output_dim();
    auto m = make_model(spec, seed * 7919 + 1000 + r);
    AdamState adam(m->params().size(), cfg.learning_rate);
    std::mt19937_64 rng(seed * 31 + r);
    for (std::size_t e = 0; e < cfg.restart_epochs; ++e) {
      for (const auto& mb : minibatches(pb.train_count(), cfg.batch_size, rng)) {
        Batch b = pb.train_batch(mb);
        Graph g;
        BoundParams p(g, m->params());
        auto terms = model_loss(*m, p, b, 0.0, {});
        g.backward(terms.total);
        auto grad = p.flat_grad();
        adam_step(m->params(), grad, adam);
      }
      auto apls = reg.true_apls(*m);
      auto theta = regularized_params(*m).flatten();
      reg.seed_sample(theta, apls, 0);
    }
  }
}

}  // namespace

SweepRecord run_train(const RunConfig& cfg, const Problem& pb, RegKind reg, double lambda,
                      std::uint64_t seed, const std::string& run_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  SweepRecord rec;
  rec.config_hash = cfg.hash();
  rec.regularizer = reg;
  rec.lambda = lambda;
  rec.seed = seed;
  rec.run_dir = run_dir;

  ModelSpec spec = cfg.model;
  spec.input_dim = pb.input_dim();
  spec.output_dim = pb.output_dim();
  std::shared_ptr<Model> model = make_model(spec, seed);

  std::unique_ptr<TreeRegularizer> tree;
  if (is_tree(reg)) {
    TreeRegConfig tc;
    tc.mode = tree_mode(reg);
    tc.apl.h = cfg.h;
    tc.apl.prune_fraction = cfg.prune_fraction;
    tc.apl.pruned = cfg.pruned;
    tc.surrogate = cfg.surrogate;
    tc.augment = cfg.augment;
    tc.normalize_sparsemax = cfg.normalize_sparsemax;
    tc.seed = seed;
    tree = std::make_unique<TreeRegularizer>(*model, pb.train_ref, tc);
    if (cfg.restarts > 0) harvest_restarts(cfg, pb, seed, *tree);
  }
  PenaltyFn penalty = make_penalty(reg, *model, tree.get());

  Artifacts art(run_dir);
  if (art.on()) {
    RunConfig snap = cfg;
    snap.regularizers = {reg};
    snap.lambdas = {lambda};
    snap.seeds = {seed};
    write_text(art.dir / "config.resolved", snap.to_text());
  }

  AdamState adam(model->params().size(), cfg.learning_rate);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uint64_t step = 0;
  std::vector<double> last_apls;
  std::vector<double> last_pred;

  auto do_retrain = [&]() {
    TrackRow* mark = nullptr;
    if (tree->trained() && !rec.log.tracking.empty() && rec.log.tracking.back().step == step) {
      mark = &rec.log.tracking.back();
      mark->at_retrain = true;
    }
    RetrainReport rr = tree->retrain(step);
    if (mark) mark->refit = tree->predicted(regularized_params(*model).flatten());
    if (art.on()) {
      for (const auto& f : rr.fits) {
        art.metrics << "retrain,," << step << ",,,,," << f.buffer_size << ',' << f.augmented << ','
                    << fmt(f.mean_mse) << ',' << fmt(f.max_mse) << '\n';
      }
    }
    rec.log.retrains.push_back(std::move(rr));
  };

  auto observe = [&]() {
    auto theta = regularized_params(*model).flatten();
    const bool was_trained = tree->trained();
    std::vector<double> pred = tree->predicted(theta);
    last_apls = tree->observe(*model, step);
    last_pred = pred;
    if (was_trained) rec.log.tracking.push_back(TrackRow{step, last_apls, pred, false, {}});
    if (!tree->trained() && tree->surrogates().front().buffer().size() >= cfg.surrogate.min_samples) {
      do_retrain();
    }
  };

  if (tree) observe();

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double loss_sum = 0.0, pen_sum = 0.0;
    std::size_t nb = 0;
    for (const auto& mb : minibatches(pb.train_count(), cfg.batch_size, rng)) {
      Batch batch = pb.train_batch(mb);
      Graph g;
      BoundParams p(g, model->params());
      LossTerms terms = model_loss(*model, p, batch, lambda, penalty);
      const double total = terms.total.value()[0];
      const double data = terms.data.value()[0];
      const double pen = terms.penalty.valid() ? terms.penalty.value()[0] : 0.0;
      if (!std::isfinite(total)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                            std::to_string(step + 1) + ": data loss " + fmt(data) +
                            ", lambda * penalty " + fmt(lambda * pen));
      }
      g.backward(terms.total);
      auto grad = p.flat_grad();
      adam_step(model->params(), grad, adam);
      ++step;
      loss_sum += data;
      pen_sum += pen;
      ++nb;
      if (tree) {
        if (step % cfg.record_every == 0) observe();
        if (!cfg.retrain_in_epochs && step % cfg.retrain_every == 0) do_retrain();
      }
    }
    if (tree && cfg.retrain_in_epochs && epoch % cfg.retrain_every == 0) do_retrain();

    EpochRow row{epoch, step, loss_sum / static_cast<double>(nb), pen_sum / static_cast<double>(nb),
                 last_apls.empty() ? -1.0 : mean_of(last_apls),
                 last_pred.empty() ? -1.0 : mean_of(last_pred)};
    rec.log.epochs.push_back(row);
    if (art.on()) {
      art.metrics << "epoch," << epoch << ',' << step << ',' << fmt(row.data_loss) << ','
                  << fmt(row.penalty) << ',' << fmt(row.true_apl) << ',' << fmt(row.pred_apl)
                  << ",,,,\n";
      if (cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0) {
        save_checkpoint(*model, (art.dir / "checkpoints" / ("epoch" + std::to_string(epoch) + ".json")).string());
      }
    }
  }

  // Distilled tree on the training reference, output 0.
  {
    auto labels = reference_labels(*model, pb.train_ref);
    Matrix feats = distill_features(*model, pb.train_ref, cfg);
    rec.tree = fit_apl(feats, labels.front(), eval_apl_options(cfg)).tree;
  }
  rec.train = evaluate(*model, pb, Split::kTrain, cfg, &*rec.tree);
  rec.test = evaluate(*model, pb, Split::kTest, cfg, &*rec.tree);
  rec.model = model;

  if (art.on()) {
    rec.checkpoint = (art.dir / "checkpoints" / "final.json").string();
    save_checkpoint(*model, rec.checkpoint);
    auto names = distill_feature_names(*model, pb, cfg);
    const auto dot = art.dir / "trees" / "distilled_out0.dot";
    const auto json = art.dir / "trees" / "distilled_out0.json";
    write_text(dot, export_dot(*rec.tree, names));
    write_text(json, rec.tree->to_json());
    rec.tree_files = {dot.string(), json.string()};
  }
  rec.ok = true;
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

SweepRecord run_train(const RunConfig& cfg) {
  cfg.validate();
  Problem pb = load_problem(cfg);
  return run_train(cfg, pb, cfg.regularizers.front(), cfg.lambdas.front(), cfg.seeds.front(),
                   cfg.output_dir);
}

// ---------------------------------------------------------------------------
// Sweeps

std::string tradeoff_header() {
  return "config_hash,regularizer,lambda,seed,split,auc,f1,accuracy,apl_eval,fidelity";
}

std::vector<std::string> tradeoff_rows(const SweepRecord& r) {
  std::vector<std::string> out;
  for (Split s : {Split::kTrain, Split::kTest}) {
    const MetricsRecord& m = s == Split::kTrain ? r.train : r.test;
    std::ostringstream os;
    os << r.config_hash << ',' << to_string(r.regularizer) << ',' << lambda_tag(r.lambda) << ','
       << r.seed << ',' << to_string(s) << ',' << fmt(m.auc) << ',' << fmt(m.f1) << ','
       << fmt(m.accuracy) << ',' << fmt(m.apl) << ',' << fmt(m.fidelity);
    out.push_back(os.str());
  }
  return out;
}

SweepResult run_sweep(const RunConfig& cfg, const Problem& pb) {
  SweepResult res;
  const std::string hash = cfg.hash();
  std::set<std::string> done;
  fs::path csv;
  if (!cfg.output_dir.empty()) {
    fs::create_directories(cfg.output_dir);
    csv = fs::path(cfg.output_dir) / "tradeoff.csv";
    write_text(fs::path(cfg.output_dir) / "config.resolved", cfg.to_text());
    std::ifstream in(csv);
    std::string line;
    while (std::getline(in, line)) {
      std::istringstream ls(line);
      std::string h, reg, lam, seed;
      std::getline(ls, h, ',');
      std::getline(ls, reg, ',');
      std::getline(ls, lam, ',');
      std::getline(ls, seed, ',');
      done.insert(h + "|" + reg + "|" + lam + "|" + seed);
    }
    if (!fs::exists(csv)) write_text(csv, tradeoff_header() + "\n");
  }

  for (RegKind reg : cfg.regularizers) {
    std::vector<double> lams = reg == RegKind::kNone ? std::vector<double>{0.0} : cfg.lambdas;
    for (double lam : lams) {
      for (std::uint64_t seed : cfg.seeds) {
        const std::string key =
            hash + "|" + to_string(reg) + "|" + lambda_tag(lam) + "|" + std::to_string(seed);
        if (done.count(key)) {
          ++res.skipped;
          continue;
        }
        std::string dir;
        if (!cfg.output_dir.empty()) {
          dir = (fs::path(cfg.output_dir) / "runs" /
                 (to_string(reg) + "_lam" + lambda_tag(lam) + "_seed" + std::to_string(seed)))
                    .string();
        }
        SweepRecord rec;
        try {
          rec = run_train(cfg, pb, reg, lam, seed, dir);
        } catch (const std::exception& e) {
          rec.config_hash = hash;
          rec.regularizer = reg;
          rec.lambda = lam;
          rec.seed = seed;
          rec.ok = false;
          rec.error = e.what();
          ++res.failed;
        }
        if (rec.ok && !csv.empty()) {
          std::ofstream out(csv, std::ios::app);
          for (const auto& row : tradeoff_rows(rec)) out << row << '\n';
        }
        res.records.push_back(std::move(rec));
      }
    }
  }
  return res;
}

SweepResult run_sweep(const RunConfig& cfg) {
  cfg.validate();
  Problem pb = load_problem(cfg);
  return run_sweep(cfg, pb);
}

// ---------------------------------------------------------------------------
// Distillation and baselines

std::vector<DistilledTree> run_distill(const Model& model, const Problem& pb, const RunConfig& cfg,
                                       bool per_region, std::vector<std::string>* warnings) {
  const AplOptions opt = eval_apl_options(cfg);
  auto train_labels = reference_labels(model, pb.train_ref);
  auto test_labels = reference_labels(model, pb.test_ref);
  Matrix train_x = distill_features(model, pb.train_ref, cfg);
  Matrix test_x = distill_features(model, pb.test_ref, cfg);
  auto names = distill_feature_names(model, pb, cfg);

  auto take = [](const Matrix& x, const std::vector<std::size_t>& rows) {
    Matrix out(rows.size(), x.cols());
    for (std::size_t k = 0; k < rows.size(); ++k)
      std::copy(x.row(rows[k]).begin(), x.row(rows[k]).end(), out.row(k).begin());
    return out;
  };
  auto pick = [](const std::vector<int>& v, const std::vector<std::size_t>& rows) {
    std::vector<int> out;
    for (std::size_t r : rows) out.push_back(v[r]);
    return out;
  };

  std::vector<DistilledTree> out;
  const std::size_t regions = per_region ? pb.partition.count() : 1;
  for (std::size_t q = 0; q < model.output_dim(); ++q) {
    for (std::size_t r = 0; r < regions; ++r) {
      std::vector<std::size_t> tr = per_region ? pb.train_ref.rows_in(r) : iota_vec(pb.train_ref.size());
      std::vector<std::size_t> te = per_region ? pb.test_ref.rows_in(r) : iota_vec(pb.test_ref.size());
      if (tr.size() < 10 || te.empty()) {
        if (warnings) {
          warnings->push_back("region " + std::to_string(r) + " skipped: " + std::to_string(tr.size()) +
                              " training rows, " + std::to_string(te.size()) + " test rows");
        }
        continue;
      }
      DistilledTree d;
      d.output = q;
      d.region = r;
      auto fit = fit_apl(take(train_x, tr), pick(train_labels[q], tr), opt);
      d.tree = std::move(fit.tree);
      d.apl = fit.apl;
      d.fidelity = fidelity(d.tree, take(test_x, te), pick(test_labels[q], te));
      d.dot = export_dot(d.tree, names);
      out.push_back(std::move(d));
    }
  }
  return out;
}

std::vector<SweepRecord> run_baseline_trees(const Problem& pb, const RunConfig& cfg,
                                            std::span<const std::size_t> h_grid, bool regional) {
  std::vector<SweepRecord> out;
  const std::size_t regions = regional ? pb.partition.count() : 1;
  const AplOptions eval_opt = eval_apl_options(cfg);

  auto labels_of = [](const ReferenceSet& ref) {
    std::vector<int> y(ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) y[i] = ref.batch.y[ref.step[i]](ref.example[i], 0) > 0.5;
    return y;
  };
  const auto ytrain = labels_of(pb.train_ref);
  const auto ytest = labels_of(pb.test_ref);

  for (std::size_t h : h_grid) {
    SweepRecord rec;
    rec.config_hash = cfg.hash();
    rec.regularizer = RegKind::kNone;
    rec.lambda = static_cast<double>(h);
    std::vector<DecisionTree> trees(regions);
    try {
      for (std::size_t r = 0; r < regions; ++r) {
        auto rows = regional ? pb.train_ref.rows_in(r) : iota_vec(pb.train_ref.size());
        if (rows.empty()) throw std::runtime_error("region " + std::to_string(r) + " has no training rows");
        Matrix x(rows.size(), pb.train_ref.features.cols());
        std::vector<int> y;
        for (std::size_t k = 0; k < rows.size(); ++k) {
          std::copy(pb.train_ref.features.row(rows[k]).begin(), pb.train_ref.features.row(rows[k]).end(),
                    x.row(k).begin());
          y.push_back(ytrain[rows[k]]);
        }
        trees[r] = train_tree(x, y, h);
      }
      auto score = [&](const ReferenceSet& ref, const std::vector<int>& y, MetricsRecord& m) {
        std::vector<double> prob(ref.size());
        std::vector<int> pred(ref.size());
        for (std::size_t i = 0; i < ref.size(); ++i) {
          const auto& t = trees[regional ? ref.region[i] : 0];
          prob[i] = t.predict_proba(ref.features.row(i));
          pred[i] = prob[i] > 0.5 ? 1 : 0;
        }
        try {
          m.auc = auc(prob, y);
        } catch (const std::invalid_argument&) {
          m.auc = std::numeric_limits<double>::quiet_NaN();
        }
        m.accuracy = accuracy(pred, y);
        m.f1 = f1(pred, y);
        m.auc_per_output = {m.auc};
        m.f1_per_output = {m.f1};
        m.accuracy_per_output = {m.accuracy};
        std::vector<std::vector<int>> labs = {pred};
        m.apl = mean_of(regional_true_apls(ref, labs, eval_opt));
        m.fidelity = 1.0;
      };
      score(pb.train_ref, ytrain, rec.train);
      score(pb.test_ref, ytest, rec.test);
      rec.ok = true;
      if (!regional) rec.tree = trees.front();
    } catch (const std::exception& e) {
      rec.ok = false;
      rec.error = e.what();
    }
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace treereg

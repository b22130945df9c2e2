// SPDX-License-Identifier: Apache-2.0
#include "treereg/config.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

namespace treereg {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(v);
  while (std::getline(in, cur, ',')) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const char* b = v.data();
  const char* e = b + v.size();
  auto [p, ec] = std::from_chars(b, e, out);
  if (ec != std::errc() || p != e || !std::isfinite(out)) {
    throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
  }
  return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const char* b = v.data();
  const char* e = b + v.size();
  auto [p, ec] = std::from_chars(b, e, out);
  if (ec != std::errc() || p != e) {
    throw ConfigError("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config: '" + key + "' expects true/false, got '" + v + "'");
}

template <typename T, typename F>
std::string join(const std::vector<T>& v, F f) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += f(v[i]);
  }
  return out;
}

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

std::string to_string(RegKind k) {
  switch (k) {
    case RegKind::kNone: return "none";
    case RegKind::kL1: return "l1";
    case RegKind::kL2: return "l2";
    case RegKind::kTreeGlobal: return "tree-global";
    case RegKind::kTreeRegionalL1: return "tree-regional-l1";
    case RegKind::kTreeRegionalL0: return "tree-regional-l0";
  }
  return "?";
}

RegKind parse_reg_kind(const std::string& s) {
  if (s == "none") return RegKind::kNone;
  if (s == "l1") return RegKind::kL1;
  if (s == "l2") return RegKind::kL2;
  if (s == "tree-global" || s == "tree") return RegKind::kTreeGlobal;
  if (s == "tree-regional-l1") return RegKind::kTreeRegionalL1;
  if (s == "tree-regional-l0" || s == "tree-regional") return RegKind::kTreeRegionalL0;
  throw ConfigError("config: unknown regularizer '" + s + "'");
}

bool is_tree(RegKind k) {
  return k == RegKind::kTreeGlobal || k == RegKind::kTreeRegionalL1 || k == RegKind::kTreeRegionalL0;
}

TreeMode tree_mode(RegKind k) {
  switch (k) {
    case RegKind::kTreeRegionalL1: return TreeMode::kRegionalL1;
    case RegKind::kTreeRegionalL0: return TreeMode::kRegionalL0;
    default: return TreeMode::kGlobal;
  }
}

void RunConfig::set(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  auto size = [&] { return static_cast<std::size_t>(to_uint(key, v)); };
  try {
    if (key == "experiment") experiment = v;
    else if (key == "dataset") dataset = v;
    else if (key == "csv_path") csv_path = v;
    else if (key == "schema_path") schema_path = v;
    else if (key == "data_seed") data_seed = to_uint(key, v);
    else if (key == "parabola_band") parabola_band = to_double(key, v);
    else if (key == "rect_grid") rect_grid = size();
    else if (key == "model") model.family = parse_family(v);
    else if (key == "hidden") {
      model.hidden.clear();
      for (const auto& s : split_list(v)) model.hidden.push_back(static_cast<std::size_t>(to_uint(key, s)));
    } else if (key == "activation") model.activation = parse_activation(v);
    else if (key == "gru_states") model.gru_states = size();
    else if (key == "hmm_states") model.hmm_states = size();
    else if (key == "emission") model.emission = parse_emission(v);
    else if (key == "regularizer" || key == "regularizers") {
      regularizers.clear();
      for (const auto& s : split_list(v)) regularizers.push_back(parse_reg_kind(s));
    } else if (key == "lambda" || key == "lambdas") {
      lambdas.clear();
      for (const auto& s : split_list(v)) lambdas.push_back(to_double(key, s));
    } else if (key == "lambda_grid") {
      // lo, hi, n
      auto parts = split_list(v);
      if (parts.size() != 3) throw ConfigError("config: lambda_grid expects lo,hi,n");
      lambdas = log_grid(to_double(key, parts[0]), to_double(key, parts[1]),
                         static_cast<std::size_t>(to_uint(key, parts[2])));
    } else if (key == "seed" || key == "seeds") {
      seeds.clear();
      for (const auto& s : split_list(v)) seeds.push_back(to_uint(key, s));
    } else if (key == "h") h = size();
    else if (key == "eval_h") eval_h = size();
    else if (key == "prune_fraction") prune_fraction = to_double(key, v);
    else if (key == "pruned") pruned = to_bool(key, v);
    else if (key == "surrogate_hidden") surrogate.hidden = size();
    else if (key == "J" || key == "buffer") surrogate.capacity = size();
    else if (key == "E" || key == "window") surrogate.window = size();
    else if (key == "augment_count") surrogate.augment = size();
    else if (key == "dirichlet_alpha") surrogate.dirichlet_alpha = to_double(key, v);
    else if (key == "epsilon") surrogate.epsilon = to_double(key, v);
    else if (key == "surrogate_epochs") surrogate.epochs = size();
    else if (key == "surrogate_lr") surrogate.learning_rate = to_double(key, v);
    else if (key == "surrogate_min_samples") surrogate.min_samples = size();
    else if (key == "surrogate_input_scale") surrogate.input_scale = to_double(key, v);
    else if (key == "retrain_every") retrain_every = size();
    else if (key == "retrain_unit") {
      if (v != "epochs" && v != "steps") throw ConfigError("config: retrain_unit is epochs or steps");
      retrain_in_epochs = v == "epochs";
    } else if (key == "record_every") record_every = size();
    else if (key == "augment") augment = to_bool(key, v);
    else if (key == "normalize_sparsemax") normalize_sparsemax = to_bool(key, v);
    else if (key == "restarts") restarts = size();
    else if (key == "restart_epochs") restart_epochs = size();
    else if (key == "learning_rate" || key == "lr") learning_rate = to_double(key, v);
    else if (key == "batch_size") batch_size = size();
    else if (key == "epochs") epochs = size();
    else if (key == "regions") regions = v;
    else if (key == "kmeans_k") kmeans_k = size();
    else if (key == "kmeans_seed") kmeans_seed = to_uint(key, v);
    else if (key == "interval_feature") interval_feature = size();
    else if (key == "interval_edges") {
      interval_edges.clear();
      for (const auto& s : split_list(v)) interval_edges.push_back(to_double(key, s));
    } else if (key == "region_file") region_file = v;
    else if (key == "distill_beliefs") distill_beliefs = to_bool(key, v);
    else if (key == "checkpoint_every") checkpoint_every = size();
    else if (key == "output_dir") output_dir = v;
    else throw ConfigError("config: unknown key '" + key + "'");
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("config: bad value for '" + key + "': " + e.what());
  }
}

void RunConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("config: " + m); };
  if (dataset != "parabola" && dataset != "signal-noise" && dataset != "rectangles" &&
      dataset != "csv") {
    fail("unknown dataset '" + dataset + "'");
  }
  if (dataset == "csv") {
    if (csv_path.empty() || !std::filesystem::exists(csv_path)) fail("csv_path does not exist: '" + csv_path + "'");
    if (schema_path.empty() || !std::filesystem::exists(schema_path)) {
      fail("schema_path does not exist: '" + schema_path + "'");
    }
  }
  if (lambdas.empty()) fail("no lambda values");
  for (double l : lambdas)
    if (l < 0.0) fail("lambda must be >= 0");
  if (regularizers.empty()) fail("no regularizer");
  if (seeds.empty()) fail("no seeds");
  if (epochs < 1) fail("epochs must be >= 1");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (h < 1) fail("h must be >= 1");
  if (prune_fraction < 0.0 || prune_fraction >= 1.0) fail("prune_fraction must lie in [0, 1)");
  if (learning_rate <= 0.0) fail("learning_rate must be positive");
  if (retrain_every < 1) fail("retrain_every must be >= 1");
  if (record_every < 1) fail("record_every must be >= 1");
  if (regions != "none" && regions != "kmeans" && regions != "intervals" && regions != "file") {
    fail("regions must be none, kmeans, intervals or file");
  }
  if (regions == "file" && (region_file.empty() || !std::filesystem::exists(region_file))) {
    fail("region_file does not exist: '" + region_file + "'");
  }
  for (RegKind k : regularizers) {
    if ((k == RegKind::kTreeRegionalL0 || k == RegKind::kTreeRegionalL1) && regions == "none") {
      fail("regional regularizers need regions");
    }
  }
  const bool seq = dataset == "signal-noise";
  if (seq && model.family == ModelFamily::kMlp) fail("signal-noise needs a sequential model");
  if (!seq && model.family != ModelFamily::kMlp) fail("tabular datasets need the mlp model");
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  auto kv = [&](const char* k, const std::string& v) { os << k << " = " << v << '\n'; };
  auto u = [](auto x) { return std::to_string(x); };
  auto b = [](bool x) { return std::string(x ? "true" : "false"); };
  kv("experiment", experiment);
  kv("dataset", dataset);
  kv("csv_path", csv_path);
  kv("schema_path", schema_path);
  kv("data_seed", u(data_seed));
  kv("parabola_band", num(parabola_band));
  kv("rect_grid", u(rect_grid));
  kv("model", to_string(model.family));
  kv("hidden", join(model.hidden, [](std::size_t x) { return std::to_string(x); }));
  kv("activation", to_string(model.activation));
  kv("gru_states", u(model.gru_states));
  kv("hmm_states", u(model.hmm_states));
  kv("emission", to_string(model.emission));
  kv("regularizers", join(regularizers, [](RegKind k) { return to_string(k); }));
  kv("lambdas", join(lambdas, num));
  kv("seeds", join(seeds, [](std::uint64_t s) { return std::to_string(s); }));
  kv("h", u(h));
  kv("eval_h", u(eval_h));
  kv("prune_fraction", num(prune_fraction));
  kv("pruned", b(pruned));
  kv("surrogate_hidden", u(surrogate.hidden));
  kv("J", u(surrogate.capacity));
  kv("E", u(surrogate.window));
  kv("augment_count", u(surrogate.augment));
  kv("dirichlet_alpha", num(surrogate.dirichlet_alpha));
  kv("epsilon", num(surrogate.epsilon));
  kv("surrogate_epochs", u(surrogate.epochs));
  kv("surrogate_lr", num(surrogate.learning_rate));
  kv("surrogate_min_samples", u(surrogate.min_samples));
  kv("surrogate_input_scale", num(surrogate.input_scale));
  kv("retrain_every", u(retrain_every));
  kv("retrain_unit", retrain_in_epochs ? "epochs" : "steps");
  kv("record_every", u(record_every));
  kv("augment", b(augment));
  kv("normalize_sparsemax", b(normalize_sparsemax));
  kv("restarts", u(restarts));
  kv("restart_epochs", u(restart_epochs));
  kv("learning_rate", num(learning_rate));
  kv("batch_size", u(batch_size));
  kv("epochs", u(epochs));
  kv("regions", regions);
  kv("kmeans_k", u(kmeans_k));
  kv("kmeans_seed", u(kmeans_seed));
  kv("interval_feature", u(interval_feature));
  kv("interval_edges", join(interval_edges, num));
  kv("region_file", region_file);
  kv("distill_beliefs", b(distill_beliefs));
  kv("checkpoint_every", u(checkpoint_every));
  kv("output_dir", output_dir);
  return os.str();
}

std::string RunConfig::hash() const {
  // FNV-1a over the snapshot, minus the output location and the sweep axes
  // (those are keyed separately, so growing a grid keeps earlier rows valid).
  RunConfig c = *this;
  c.output_dir.clear();
  c.regularizers = {RegKind::kNone};
  c.lambdas = {0.0};
  c.seeds = {0};
  std::uint64_t h64 = 1469598103934665603ULL;
  for (unsigned char ch : c.to_text()) {
    h64 ^= ch;
    h64 *= 1099511628211ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h64;
  return os.str();
}

RunConfig parse_config(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    base.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return base;
}

RunConfig load_config(const std::string& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::vector<double> log_grid(double lo, double hi, std::size_t n) {
  if (lo <= 0.0 || hi < lo || n == 0) throw ConfigError("log_grid: need 0 < lo <= hi and n >= 1");
  std::vector<double> out;
  if (n == 1) return {lo};
  const double a = std::log10(lo), b = std::log10(hi);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(std::pow(10.0, a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1)));
  }
  return out;
}

RunConfig preset(const std::string& name) {
  RunConfig c;
  c.experiment = name;
  if (name == "parabola") {
    c.dataset = "parabola";
    c.model.family = ModelFamily::kMlp;
    c.model.hidden = {100, 100, 10};
    c.learning_rate = 1e-3;
    c.batch_size = 100;
    c.epochs = 250;
    c.retrain_every = 25;
  } else if (name == "signal-noise" || name == "signal-noise-gruhmm") {
    c.dataset = "signal-noise";
    c.model.family = name == "signal-noise" ? ModelFamily::kGru : ModelFamily::kGruHmm;
    c.model.gru_states = 25;
    c.model.hmm_states = 5;
    c.learning_rate = 1e-3;
    c.batch_size = 10;
    c.epochs = 100;
    c.retrain_every = 25;
  } else if (name == "rectangles") {
    c.dataset = "rectangles";
    c.model.family = ModelFamily::kMlp;
    c.model.hidden = {128, 128, 128, 64, 64};
    c.learning_rate = 4e-3;
    c.batch_size = 32;
    c.epochs = 500;
    c.retrain_every = 1;
    c.surrogate.augment = 1000;
    c.h = 1;
    c.regions = "intervals";
    c.interval_feature = 0;
    c.interval_edges = {1, 2, 3, 4};
  } else if (name == "wine") {
    c.dataset = "csv";
    c.model.family = ModelFamily::kMlp;
    c.model.hidden = {128, 128, 128, 64, 64};
    c.learning_rate = 1e-4;
    c.batch_size = 128;
    c.epochs = 500;
    c.retrain_every = 50;
    c.retrain_in_epochs = false;
    c.surrogate.augment = 250;
    c.regions = "kmeans";
    c.kmeans_k = 5;
    c.lambdas = log_grid(1e-4, 10.0, 20);
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  return c;
}

}  // namespace treereg

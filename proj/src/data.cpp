// SPDX-License-Identifier: Apache-2.0
#include "treereg/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace treereg {

std::string to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kValid: return "valid";
    case Split::kTest: return "test";
  }
  return "?";
}

std::vector<std::size_t> TabularDataset::rows(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < split.size(); ++i)
    if (split[i] == s) out.push_back(i);
  return out;
}

TabularDataset TabularDataset::take(std::span<const std::size_t> idx) const {
  TabularDataset out;
  out.feature_names = feature_names;
  out.x = Matrix(idx.size(), x.cols());
  out.y = Matrix(idx.size(), y.cols());
  out.split.resize(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const std::size_t i = idx[k];
    std::copy(x.row(i).begin(), x.row(i).end(), out.x.row(k).begin());
    std::copy(y.row(i).begin(), y.row(i).end(), out.y.row(k).begin());
    out.split[k] = split[i];
    if (std::find(flipped.begin(), flipped.end(), i) != flipped.end()) out.flipped.push_back(k);
  }
  return out;
}

TabularDataset TabularDataset::subset(Split s) const {
  auto idx = rows(s);
  return take(idx);
}

SequenceDataset SequenceDataset::subset(Split s) const {
  SequenceDataset out;
  out.feature_names = feature_names;
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    if (split[i] != s) continue;
    out.sequences.push_back(sequences[i]);
    out.split.push_back(s);
  }
  return out;
}

TabularDataset SequenceDataset::flatten() const {
  std::size_t total = 0;
  for (const auto& s : sequences) total += s.x.rows();
  TabularDataset out;
  out.feature_names = feature_names;
  out.x = Matrix(total, input_dim());
  out.y = Matrix(total, output_dim());
  std::size_t r = 0;
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    const auto& s = sequences[i];
    for (std::size_t t = 0; t < s.x.rows(); ++t, ++r) {
      std::copy(s.x.row(t).begin(), s.x.row(t).end(), out.x.row(r).begin());
      std::copy(s.y.row(t).begin(), s.y.row(t).end(), out.y.row(r).begin());
      out.split.push_back(split[i]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

HmmSpec signal_hmm_spec() {
  HmmSpec s;
  s.prior.assign(5, 0.2);
  s.emission = Matrix::from_rows({{.5, .5, .5, .5, 0, 0, 0},
                                  {.5, .5, .5, .5, .5, 0, 0},
                                  {.5, .5, .5, 0, .5, 0, 0},
                                  {.5, .5, .5, 0, 0, .5, 0},
                                  {.5, .5, .5, 0, 0, 0, .5}});
  s.transition = Matrix::from_rows({{.7, .3, 0, 0, 0},
                                    {.5, .25, .25, 0, 0},
                                    {0, .25, .5, .25, 0},
                                    {0, 0, .25, .25, .5},
                                    {0, 0, 0, .5, .5}});
  return s;
}

HmmSpec noise_hmm_spec() {
  HmmSpec s;
  s.prior.assign(5, 0.2);
  s.emission = Matrix::from_rows({{.5, .5, .5, 0, 0, 0, 0},
                                  {0, .5, .5, .5, 0, 0, 0},
                                  {0, 0, .5, .5, .5, 0, 0},
                                  {0, 0, 0, .5, .5, .5, 0},
                                  {0, 0, 0, 0, .5, .5, .5}});
  s.transition = Matrix(5, 5, 0.2);
  return s;
}

std::vector<double> stationary_distribution(const Matrix& transition) {
  const std::size_t k = transition.rows();
  std::vector<double> pi(k, 1.0 / static_cast<double>(k)), next(k);
  for (int it = 0; it < 100000; ++it) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) next[j] += pi[i] * transition(i, j);
    double diff = 0.0;
    for (std::size_t j = 0; j < k; ++j) diff = std::max(diff, std::abs(next[j] - pi[j]));
    pi.swap(next);
    if (diff < 1e-15) break;
  }
  return pi;
}

std::size_t round_count(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::nearbyint(fraction * static_cast<double>(n)));
}

std::vector<Split> random_split(std::size_t n, double test_fraction, double valid_fraction,
                                std::mt19937_64& rng) {
  if (test_fraction < 0.0 || valid_fraction < 0.0 || test_fraction + valid_fraction >= 1.0) {
    throw std::invalid_argument("random_split: fractions must be >= 0 and sum below 1");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_test = round_count(test_fraction, n);
  const std::size_t n_valid = round_count(valid_fraction, n);
  std::vector<Split> out(n, Split::kTrain);
  for (std::size_t k = 0; k < n_test; ++k) out[order[k]] = Split::kTest;
  for (std::size_t k = n_test; k < n_test + n_valid && k < n; ++k) out[order[k]] = Split::kValid;
  return out;
}

// ---------------------------------------------------------------------------

int parabola_label(double x1, double x2) {
  return x2 > 5.0 * (x1 - 0.5) * (x1 - 0.5) + 0.4 ? 1 : 0;
}

TabularDataset gen_parabola(std::uint64_t seed, const ParabolaOptions& opt) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  TabularDataset d;
  d.feature_names = {"x1", "x2"};
  d.x = Matrix(opt.n, 2);
  d.y = Matrix(opt.n, 1);
  std::vector<std::size_t> band;
  for (std::size_t i = 0; i < opt.n; ++i) {
    const double a = unit(rng);
    const double b = unit(rng);
    d.x(i, 0) = a;
    d.x(i, 1) = b;
    d.y[i] = parabola_label(a, b);
    const double curve = 5.0 * (a - 0.5) * (a - 0.5) + 0.4;
    if (std::abs(b - curve) < opt.band) band.push_back(i);
  }
  std::shuffle(band.begin(), band.end(), rng);
  band.resize(std::min(band.size(), round_count(opt.flip_fraction, band.size())));
  std::sort(band.begin(), band.end());
  for (std::size_t i : band) d.y[i] = 1.0 - d.y[i];
  d.flipped = band;
  d.split = random_split(opt.n, opt.test_fraction, 0.0, rng);
  return d;
}

SequenceDataset gen_signal_noise_hmm(std::uint64_t seed, const SignalNoiseOptions& opt) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const HmmSpec sig = signal_hmm_spec();
  const HmmSpec noise = noise_hmm_spec();
  auto draw = [&](std::span<const double> probs) {
    const double u = unit(rng);
    double acc = 0.0;
    for (std::size_t k = 0; k < probs.size(); ++k) {
      acc += probs[k];
      if (u < acc) return static_cast<int>(k);
    }
    return static_cast<int>(probs.size() - 1);
  };

  SequenceDataset d;
  for (int f = 0; f < 14; ++f) d.feature_names.push_back("x" + std::to_string(f));
  for (std::size_t n = 0; n < opt.n; ++n) {
    Sequence s;
    s.x = Matrix(opt.steps, 14);
    s.y = Matrix(opt.steps, 1);
    int a = draw(sig.prior);
    int b = draw(noise.prior);
    for (std::size_t t = 0; t < opt.steps; ++t) {
      if (t > 0) {
        a = draw(sig.transition.row(static_cast<std::size_t>(a)));
        b = draw(noise.transition.row(static_cast<std::size_t>(b)));
      }
      s.latent.push_back(a);
      s.latent_noise.push_back(b);
      for (std::size_t f = 0; f < 7; ++f) {
        s.x(t, f) = unit(rng) < sig.emission(static_cast<std::size_t>(a), f) ? 1.0 : 0.0;
        s.x(t, 7 + f) = unit(rng) < noise.emission(static_cast<std::size_t>(b), f) ? 1.0 : 0.0;
      }
      s.y[t] = (a == 0 && s.x(t, 0) == 1.0) ? 1.0 : 0.0;
    }
    d.sequences.push_back(std::move(s));
  }
  d.split = random_split(opt.n, opt.test_fraction, 0.0, rng);
  return d;
}

int rectangles_label(double x, double y) {
  if (x < 0.0 || x > 5.0) return 0;
  const int col = std::min(4, static_cast<int>(std::floor(x)));
  const double center = col < 3 ? 0.4 : 0.6;
  return std::abs(y - center) <= 0.25 ? 1 : 0;
}

TabularDataset gen_five_rectangles(std::uint64_t seed, const RectanglesOptions& opt) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(0.0, 5.0), uy(0.0, 1.0);
  const std::size_t n_test = opt.grid * opt.grid;
  TabularDataset d;
  d.feature_names = {"x", "y"};
  d.x = Matrix(opt.n_train + n_test, 2);
  d.y = Matrix(opt.n_train + n_test, 1);
  for (std::size_t i = 0; i < opt.n_train; ++i) {
    d.x(i, 0) = ux(rng);
    d.x(i, 1) = uy(rng);
    d.y[i] = rectangles_label(d.x(i, 0), d.x(i, 1));
    d.split.push_back(Split::kTrain);
  }
  std::vector<std::size_t> order(opt.n_train);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(round_count(opt.flip_fraction, opt.n_train));
  std::sort(order.begin(), order.end());
  for (std::size_t i : order) d.y[i] = 1.0 - d.y[i];
  d.flipped = order;
  const double g = static_cast<double>(opt.grid);
  // Grid cells in shuffled order: APL pruning takes the trailing rows of a
  // reference set, which must not be one strip of the domain.
  std::vector<std::size_t> cells(n_test);
  std::iota(cells.begin(), cells.end(), std::size_t{0});
  std::shuffle(cells.begin(), cells.end(), rng);
  for (std::size_t a = 0; a < opt.grid; ++a) {
    for (std::size_t b = 0; b < opt.grid; ++b) {
      const std::size_t i = opt.n_train + cells[a * opt.grid + b];
      d.x(i, 0) = 5.0 * (static_cast<double>(a) + 0.5) / g;
      d.x(i, 1) = (static_cast<double>(b) + 0.5) / g;
      d.y[i] = rectangles_label(d.x(i, 0), d.x(i, 1));
      d.split.push_back(Split::kTest);
    }
  }
  return d;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n\"");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n\"");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == delim && !quoted) {
      out.push_back(trim(cell));
      cell.clear();
    } else {
      cell.push_back(c);
    }
  }
  out.push_back(trim(cell));
  return out;
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  for (auto& s : split_line(v, ',')) {
    if (!s.empty()) out.push_back(s);
  }
  return out;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* b = s.data();
  const char* e = b + s.size();
  if (*b == '+') ++b;
  auto [ptr, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && ptr == e && std::isfinite(out);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

}  // namespace

CsvSchema parse_schema(const std::string& text) {
  CsvSchema s;
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
      throw std::invalid_argument("schema line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    double num = 0.0;
    auto number = [&] {
      if (!parse_double(val, num)) {
        throw std::invalid_argument("schema line " + std::to_string(lineno) + ": bad number for " +
                                    key);
      }
      return num;
    };
    if (key == "target") {
      s.targets = split_list(val);
    } else if (key == "threshold") {
      s.threshold = number();
    } else if (key == "categorical") {
      s.categorical = split_list(val);
    } else if (key == "drop") {
      s.drop = split_list(val);
    } else if (key == "delimiter") {
      s.delimiter = val == "tab" ? '\t' : (val.empty() ? ',' : val[0]);
    } else if (key == "test_fraction") {
      s.test_fraction = number();
    } else if (key == "valid_fraction") {
      s.valid_fraction = number();
    } else if (key == "split_seed") {
      s.split_seed = static_cast<std::uint64_t>(number());
    } else {
      throw std::invalid_argument("schema line " + std::to_string(lineno) + ": unknown key " + key);
    }
  }
  if (s.targets.empty()) throw std::invalid_argument("schema: no target column");
  return s;
}

CsvSchema load_schema(const std::string& path) { return parse_schema(read_file(path)); }

TabularDataset parse_csv(const std::string& text, const CsvSchema& schema) {
  std::istringstream in(text);
  std::string header;
  while (std::getline(in, header) && trim(header).empty()) {
  }
  if (trim(header).empty()) throw std::runtime_error("csv: empty file");
  char delim = schema.delimiter;
  if (delim == 0) delim = header.find(';') != std::string::npos ? ';' : ',';
  const auto names = split_line(header, delim);
  for (const auto& want : schema.targets) {
    if (!contains(names, want)) throw std::runtime_error("csv: missing target column '" + want + "'");
  }
  for (const auto& want : schema.categorical) {
    if (!contains(names, want)) throw std::runtime_error("csv: missing categorical column '" + want + "'");
  }
  for (const auto& want : schema.drop) {
    if (!contains(names, want)) throw std::runtime_error("csv: missing column '" + want + "'");
  }

  std::vector<std::vector<std::string>> cells;
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto row = split_line(line, delim);
    if (row.size() != names.size()) {
      throw std::runtime_error("csv: row " + std::to_string(lineno) + " has " +
                               std::to_string(row.size()) + " cells, header has " +
                               std::to_string(names.size()));
    }
    cells.push_back(std::move(row));
  }
  if (cells.empty()) throw std::runtime_error("csv: no data rows");
  const std::size_t n = cells.size();

  auto numeric = [&](std::size_t r, std::size_t c) {
    double v = 0.0;
    if (!parse_double(cells[r][c], v)) {
      throw std::runtime_error("csv: unparseable cell at row " + std::to_string(r + 2) +
                               ", column '" + names[c] + "': '" + cells[r][c] + "'");
    }
    return v;
  };

  struct Column {
    std::size_t src;
    std::string name;
    std::string level;  // non-empty for one-hot indicator columns
  };
  std::vector<Column> cols;
  std::vector<std::size_t> target_cols;
  for (std::size_t c = 0; c < names.size(); ++c) {
    if (contains(schema.targets, names[c])) {
      target_cols.push_back(c);
    } else if (contains(schema.drop, names[c])) {
      continue;
    } else if (contains(schema.categorical, names[c])) {
      std::set<std::string> levels;
      for (const auto& row : cells) levels.insert(row[c]);
      for (const auto& lv : levels) cols.push_back({c, names[c] + "=" + lv, lv});
    } else {
      cols.push_back({c, names[c], ""});
    }
  }

  TabularDataset d;
  d.x = Matrix(n, cols.size());
  d.y = Matrix(n, target_cols.size());
  for (const auto& c : cols) d.feature_names.push_back(c.name);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      const auto& c = cols[j];
      d.x(r, j) = c.level.empty() ? numeric(r, c.src) : (cells[r][c.src] == c.level ? 1.0 : 0.0);
    }
    for (std::size_t q = 0; q < target_cols.size(); ++q) {
      d.y(r, q) = numeric(r, target_cols[q]) >= schema.threshold ? 1.0 : 0.0;
    }
  }

  std::mt19937_64 rng(schema.split_seed);
  d.split = random_split(n, schema.test_fraction, schema.valid_fraction, rng);
  const auto train = d.rows(Split::kTrain);
  if (train.empty()) throw std::runtime_error("csv: training split is empty");
  for (std::size_t j = 0; j < cols.size(); ++j) {
    if (!cols[j].level.empty()) continue;
    double mean = 0.0;
    for (std::size_t r : train) mean += d.x(r, j);
    mean /= static_cast<double>(train.size());
    double var = 0.0;
    for (std::size_t r : train) var += (d.x(r, j) - mean) * (d.x(r, j) - mean);
    var /= static_cast<double>(train.size());
    const double sd = std::sqrt(var);
    for (std::size_t r = 0; r < n; ++r) d.x(r, j) = sd > 1e-12 ? (d.x(r, j) - mean) / sd : 0.0;
  }
  return d;
}

TabularDataset load_csv(const std::string& path, const CsvSchema& schema) {
  return parse_csv(read_file(path), schema);
}

void write_csv(const TabularDataset& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.precision(17);
  for (const auto& name : d.feature_names) out << name << ',';
  for (std::size_t q = 0; q < d.y.cols(); ++q) out << "y" << q << (q + 1 < d.y.cols() ? "," : "\n");
  for (std::size_t r = 0; r < d.size(); ++r) {
    for (double v : d.x.row(r)) out << v << ',';
    for (std::size_t q = 0; q < d.y.cols(); ++q)
      out << d.y(r, q) << (q + 1 < d.y.cols() ? "," : "\n");
  }
  std::ofstream side(path + ".split");
  if (!side) throw std::runtime_error("cannot write " + path + ".split");
  for (Split s : d.split) side << to_string(s) << '\n';
}

// ---------------------------------------------------------------------------
// Regions

RegionPartition RegionPartition::single() { return RegionPartition{}; }

RegionPartition RegionPartition::centroids(Matrix c) {
  if (c.rows() == 0) throw std::invalid_argument("RegionPartition: no centroids");
  RegionPartition p;
  p.kind_ = Kind::kCentroids;
  p.count_ = c.rows();
  p.centers_ = std::move(c);
  return p;
}

RegionPartition RegionPartition::intervals(std::size_t feature, std::vector<double> edges) {
  if (!std::is_sorted(edges.begin(), edges.end())) {
    throw std::invalid_argument("RegionPartition: interval edges must be sorted");
  }
  RegionPartition p;
  p.kind_ = Kind::kIntervals;
  p.feature_ = feature;
  p.count_ = edges.size() + 1;
  p.edges_ = std::move(edges);
  return p;
}

std::size_t RegionPartition::assign(std::span<const double> x) const {
  switch (kind_) {
    case Kind::kSingle:
      return 0;
    case Kind::kIntervals: {
      if (feature_ >= x.size()) throw ShapeError("RegionPartition: feature index out of range");
      const double v = x[feature_];
      return static_cast<std::size_t>(std::lower_bound(edges_.begin(), edges_.end(), v) -
                                      edges_.begin());
    }
    case Kind::kCentroids: {
      if (x.size() != centers_.cols()) {
        throw ShapeError("RegionPartition: point has " + std::to_string(x.size()) +
                         " features, centroids have " + std::to_string(centers_.cols()));
      }
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t r = 0; r < centers_.rows(); ++r) {
        double d = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) d += (x[j] - centers_(r, j)) * (x[j] - centers_(r, j));
        if (d < best_d) {
          best_d = d;
          best = r;
        }
      }
      return best;
    }
  }
  return 0;
}

std::vector<std::size_t> RegionPartition::assign(const Matrix& x) const {
  std::vector<std::size_t> out(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) out[i] = assign(x.row(i));
  return out;
}

std::string RegionPartition::to_text() const {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t r = 0; r < count_; ++r) os << "region " << r << ' ' << name(r) << '\n';
  switch (kind_) {
    case Kind::kSingle:
      os << "kind single\n";
      break;
    case Kind::kIntervals:
      os << "kind intervals\nfeature " << feature_ << "\nedges";
      for (double e : edges_) os << ' ' << e;
      os << '\n';
      break;
    case Kind::kCentroids:
      os << "kind centroids\n";
      for (std::size_t r = 0; r < centers_.rows(); ++r) {
        os << "centroid";
        for (double v : centers_.row(r)) os << ' ' << v;
        os << '\n';
      }
      break;
  }
  return os.str();
}

RegionPartition RegionPartition::from_text(const std::string& text) {
  std::istringstream in(text);
  std::string line, kind;
  std::size_t feature = 0;
  std::vector<double> edges;
  std::vector<std::vector<double>> cents;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "kind") {
      ls >> kind;
    } else if (key == "feature") {
      ls >> feature;
    } else if (key == "edges") {
      double v;
      while (ls >> v) edges.push_back(v);
    } else if (key == "centroid") {
      std::vector<double> row;
      double v;
      while (ls >> v) row.push_back(v);
      cents.push_back(std::move(row));
    }
  }
  if (kind == "single") return single();
  if (kind == "intervals") return intervals(feature, edges);
  if (kind == "centroids") {
    if (cents.empty()) throw std::runtime_error("region map: no centroids");
    Matrix c(cents.size(), cents[0].size());
    for (std::size_t r = 0; r < cents.size(); ++r) {
      if (cents[r].size() != c.cols()) throw std::runtime_error("region map: ragged centroids");
      std::copy(cents[r].begin(), cents[r].end(), c.row(r).begin());
    }
    return centroids(std::move(c));
  }
  throw std::runtime_error("region map: unknown kind '" + kind + "'");
}

KMeansResult kmeans_regions(const Matrix& x, std::size_t k, std::uint64_t seed,
                            std::size_t max_iter) {
  const std::size_t n = x.rows();
  const std::size_t p = x.cols();
  if (k == 0) throw std::invalid_argument("kmeans_regions: k must be >= 1");
  if (n < k) throw std::invalid_argument("kmeans_regions: fewer points than clusters");
  std::mt19937_64 rng(seed);
  auto dist2 = [&](std::size_t i, const Matrix& c, std::size_t r) {
    double d = 0.0;
    for (std::size_t j = 0; j < p; ++j) d += (x(i, j) - c(r, j)) * (x(i, j) - c(r, j));
    return d;
  };

  // k-means++ seeding.
  Matrix c(k, p);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::size_t first = pick(rng);
  std::copy(x.row(first).begin(), x.row(first).end(), c.row(0).begin());
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = dist2(i, c, 0);
  for (std::size_t r = 1; r < k; ++r) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    std::size_t chosen = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng), acc = 0.0;
      chosen = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc >= target && d2[i] > 0.0) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = pick(rng);
    }
    std::copy(x.row(chosen).begin(), x.row(chosen).end(), c.row(r).begin());
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], dist2(i, c, r));
  }

  KMeansResult res;
  res.assignment.assign(n, 0);
  for (std::size_t it = 0; it < max_iter; ++it) {
    // Assignment step.
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double bd = dist2(i, c, 0);
      for (std::size_t r = 1; r < k; ++r) {
        const double d = dist2(i, c, r);
        if (d < bd) {
          bd = d;
          best = r;
        }
      }
      res.assignment[i] = best;
    }
    // Update step.
    Matrix next(k, p);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[res.assignment[i]];
      for (std::size_t j = 0; j < p; ++j) next(res.assignment[i], j) += x(i, j);
    }
    for (std::size_t r = 0; r < k; ++r) {
      if (counts[r] == 0) {
        // Repair: move the empty centroid onto the point farthest from its own.
        std::size_t far = 0;
        double fd = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double d = dist2(i, c, res.assignment[i]);
          if (d > fd) {
            fd = d;
            far = i;
          }
        }
        std::copy(x.row(far).begin(), x.row(far).end(), next.row(r).begin());
        res.assignment[far] = r;
        continue;
      }
      for (std::size_t j = 0; j < p; ++j) next(r, j) /= static_cast<double>(counts[r]);
    }
    double shift = 0.0;
    for (std::size_t r = 0; r < k; ++r) {
      double d = 0.0;
      for (std::size_t j = 0; j < p; ++j) d += (next(r, j) - c(r, j)) * (next(r, j) - c(r, j));
      shift = std::max(shift, std::sqrt(d));
    }
    c = std::move(next);
    double obj = 0.0;
    for (std::size_t i = 0; i < n; ++i) obj += dist2(i, c, res.assignment[i]);
    res.objective.push_back(obj);
    res.iterations = it + 1;
    if (shift < 1e-8) break;
  }
  res.partition = RegionPartition::centroids(c);
  res.assignment = res.partition.assign(x);
  return res;
}

// ---------------------------------------------------------------------------
// Batching

Batch tabular_batch(const TabularDataset& d, std::span<const std::size_t> rows) {
  Batch b;
  Matrix x(rows.size(), d.x.cols());
  Matrix y(rows.size(), d.y.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    std::copy(d.x.row(rows[k]).begin(), d.x.row(rows[k]).end(), x.row(k).begin());
    std::copy(d.y.row(rows[k]).begin(), d.y.row(rows[k]).end(), y.row(k).begin());
  }
  b.x.push_back(std::move(x));
  b.y.push_back(std::move(y));
  b.mask.emplace_back(rows.size(), d.y.cols(), 1.0);
  return b;
}

Batch sequence_batch(const SequenceDataset& d, std::span<const std::size_t> seqs) {
  Batch b;
  std::size_t steps = 0;
  for (std::size_t s : seqs) steps = std::max(steps, d.sequences.at(s).x.rows());
  const std::size_t p = d.input_dim();
  const std::size_t q = d.output_dim();
  for (std::size_t t = 0; t < steps; ++t) {
    Matrix x(seqs.size(), p), y(seqs.size(), q), m(seqs.size(), q);
    for (std::size_t k = 0; k < seqs.size(); ++k) {
      const auto& s = d.sequences[seqs[k]];
      if (t >= s.x.rows()) continue;
      std::copy(s.x.row(t).begin(), s.x.row(t).end(), x.row(k).begin());
      std::copy(s.y.row(t).begin(), s.y.row(t).end(), y.row(k).begin());
      std::fill(m.row(k).begin(), m.row(k).end(), 1.0);
    }
    b.x.push_back(std::move(x));
    b.y.push_back(std::move(y));
    b.mask.push_back(std::move(m));
  }
  return b;
}

std::vector<std::vector<std::size_t>> minibatches(std::size_t n, std::size_t batch_size,
                                                  std::mt19937_64& rng) {
  if (batch_size == 0) throw std::invalid_argument("minibatches: batch size must be positive");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t s = 0; s < n; s += batch_size) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(s),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, s + batch_size)));
  }
  return out;
}

}  // namespace treereg

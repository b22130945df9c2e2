// SPDX-License-Identifier: Apache-2.0
#include "treereg/regularize.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace treereg {

Var l1(Var theta) { return sum(abs(theta)); }
Var l2(Var theta) { return sum(square(theta)); }

std::vector<std::size_t> ReferenceSet::rows_in(std::size_t r) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < region.size(); ++i)
    if (region[i] == r) out.push_back(i);
  return out;
}

ReferenceSet make_reference(const TabularDataset& d, const RegionPartition& part) {
  if (d.size() == 0) throw std::invalid_argument("reference set is empty");
  ReferenceSet ref;
  std::vector<std::size_t> all(d.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  ref.batch = tabular_batch(d, all);
  ref.features = d.x;
  ref.step.assign(d.size(), 0);
  ref.example = all;
  ref.region = part.assign(d.x);
  ref.regions = part.count();
  return ref;
}

ReferenceSet make_reference(const SequenceDataset& d, const RegionPartition& part) {
  if (d.sequences.empty()) throw std::invalid_argument("reference set is empty");
  ReferenceSet ref;
  std::vector<std::size_t> all(d.sequences.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  ref.batch = sequence_batch(d, all);
  std::size_t total = 0;
  for (const auto& s : d.sequences) total += s.x.rows();
  ref.features = Matrix(total, d.input_dim());
  // Sequence-major order, so the pruning tail holds whole sequences.
  std::size_t r = 0;
  for (std::size_t b = 0; b < d.sequences.size(); ++b) {
    const auto& s = d.sequences[b];
    for (std::size_t t = 0; t < s.x.rows(); ++t, ++r) {
      std::copy(s.x.row(t).begin(), s.x.row(t).end(), ref.features.row(r).begin());
      ref.step.push_back(t);
      ref.example.push_back(b);
    }
  }
  ref.region = part.assign(ref.features);
  ref.regions = part.count();
  return ref;
}

std::vector<std::vector<int>> reference_labels(const Model& model, const ReferenceSet& ref) {
  auto probs = predict_proba(model, ref.batch);
  const std::size_t q = model.output_dim();
  std::vector<std::vector<int>> out(q, std::vector<int>(ref.size()));
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const Matrix& p = probs[ref.step[i]];
    for (std::size_t k = 0; k < q; ++k) out[k][i] = p(ref.example[i], k) > 0.5 ? 1 : 0;
  }
  return out;
}

namespace {

Matrix take_rows(const Matrix& x, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), x.cols());
  for (std::size_t k = 0; k < rows.size(); ++k)
    std::copy(x.row(rows[k]).begin(), x.row(rows[k]).end(), out.row(k).begin());
  return out;
}

double summed_apl(const Matrix& x, std::span<const std::vector<int>> labels,
                  std::span<const std::size_t> rows, const AplOptions& opt) {
  double total = 0.0;
  for (const auto& lab : labels) {
    std::vector<int> sub(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) sub[k] = lab[rows[k]];
    total += apl(x, sub, opt);
  }
  return total;
}

}  // namespace

std::vector<double> regional_true_apls(const ReferenceSet& ref,
                                       std::span<const std::vector<int>> labels,
                                       const AplOptions& opt) {
  std::vector<double> out(ref.regions, 0.0);
  for (std::size_t r = 0; r < ref.regions; ++r) {
    auto rows = ref.rows_in(r);
    if (rows.size() < 10) {
      throw std::runtime_error("region " + std::to_string(r) + " has " + std::to_string(rows.size()) +
                               " reference rows (need at least 10)");
    }
    out[r] = summed_apl(take_rows(ref.features, rows), labels, rows, opt);
  }
  return out;
}

std::vector<double> regional_true_apls(const Model& model, const ReferenceSet& ref,
                                       const AplOptions& opt) {
  auto labels = reference_labels(model, ref);
  return regional_true_apls(ref, labels, opt);
}

double evaluation_apl(const Model& model, const ReferenceSet& ref, const AplOptions& opt) {
  auto apls = regional_true_apls(model, ref, opt);
  double total = 0.0;
  for (double a : apls) total += a;
  return total / static_cast<double>(apls.size());
}

void set_regularized(Model& model, std::span<const double> subset) {
  auto idx = regularized_indices(model);
  if (idx.size() != subset.size()) {
    throw ShapeError("set_regularized: subset has " + std::to_string(subset.size()) +
                     " values, model expects " + std::to_string(idx.size()));
  }
  auto values = model.params().values();
  for (std::size_t i = 0; i < idx.size(); ++i) values[idx[i]] = subset[i];
}

std::string to_string(TreeMode m) {
  switch (m) {
    case TreeMode::kGlobal: return "tree-global";
    case TreeMode::kRegionalL1: return "tree-regional-l1";
    case TreeMode::kRegionalL0: return "tree-regional-l0";
  }
  return "?";
}

// ---------------------------------------------------------------------------

TreeRegularizer::TreeRegularizer(const Model& model, ReferenceSet ref, TreeRegConfig cfg)
    : cfg_(cfg),
      ref_(std::move(ref)),
      scratch_(model.clone()),
      segments_(model.regularized_segments()),
      rng_(cfg.seed) {
  if (cfg_.mode == TreeMode::kGlobal) {
    std::fill(ref_.region.begin(), ref_.region.end(), 0);
    ref_.regions = 1;
  }
  for (std::size_t r = 0; r < ref_.regions; ++r) {
    if (ref_.rows_in(r).size() < 10) {
      throw std::runtime_error("region " + std::to_string(r) + " has too few reference rows");
    }
  }
  const std::size_t dim = regularized_indices(model).size();
  for (std::size_t r = 0; r < ref_.regions; ++r) {
    surrogates_.emplace_back(dim, cfg_.surrogate, cfg_.seed * 1000003ULL + r + 1);
  }
}

Var TreeRegularizer::combine(Var omegas) const {
  if (cfg_.mode == TreeMode::kRegionalL0) {
    Var z = omegas;
    if (cfg_.normalize_sparsemax) {
      double mx = 0.0;
      for (double v : omegas.value().data()) mx = std::max(mx, std::abs(v));
      if (mx > 0.0) z = scale(omegas, 1.0 / mx);
    }
    return sum(mul(sparsemax(z), omegas));
  }
  return sum(omegas);
}

Var TreeRegularizer::penalty(const BoundParams& p) const {
  Var theta = p.gather_row(segments_);
  std::vector<Var> parts;
  for (const auto& s : surrogates_) parts.push_back(s.predict(theta));
  Var omegas = parts.size() == 1 ? parts[0] : concat_cols(parts);
  return combine(omegas);
}

std::vector<double> TreeRegularizer::predicted(std::span<const double> subset) const {
  std::vector<double> out;
  for (const auto& s : surrogates_) out.push_back(s.predict_raw(subset));
  return out;
}

std::vector<double> TreeRegularizer::weights(std::span<const double> subset) const {
  auto omegas = predicted(subset);
  if (cfg_.mode != TreeMode::kRegionalL0) return std::vector<double>(omegas.size(), 1.0);
  if (cfg_.normalize_sparsemax) {
    double mx = 0.0;
    for (double v : omegas) mx = std::max(mx, std::abs(v));
    if (mx > 0.0)
      for (double& v : omegas) v /= mx;
  }
  return sparsemax(omegas);
}

std::vector<double> TreeRegularizer::true_apls(const Model& model) const {
  return regional_true_apls(model, ref_, cfg_.apl);
}

std::vector<double> TreeRegularizer::true_apls_for(std::span<const double> subset) const {
  set_regularized(*scratch_, subset);
  return true_apls(*scratch_);
}

std::vector<double> TreeRegularizer::observe(const Model& model, std::uint64_t step) {
  scratch_->params().unflatten(model.params().values());
  auto apls = true_apls(model);
  auto theta = regularized_params(model).flatten();
  for (std::size_t r = 0; r < surrogates_.size(); ++r) surrogates_[r].record(theta, apls[r], step);
  return apls;
}

void TreeRegularizer::seed_sample(std::span<const double> subset, std::span<const double> apls,
                                  std::uint64_t step) {
  if (apls.size() != surrogates_.size()) throw ShapeError("seed_sample: one APL per region expected");
  for (std::size_t r = 0; r < surrogates_.size(); ++r) {
    surrogates_[r].record(std::vector<double>(subset.begin(), subset.end()), apls[r], step);
  }
}

RetrainReport TreeRegularizer::retrain(std::uint64_t step) {
  const auto start = std::chrono::steady_clock::now();
  RetrainReport rep;
  rep.step = step;
  // Every surrogate holds the same thetas; only the targets differ by region.
  std::vector<std::vector<AplSample>> extra(surrogates_.size());
  const auto& buf = surrogates_.front().buffer();
  if (cfg_.augment && cfg_.surrogate.augment > 0 && !buf.empty()) {
    std::vector<std::vector<double>> pts;
    for (const auto& s : buf) pts.push_back(s.theta);
    auto thetas = convex_hull_thetas(pts, cfg_.surrogate.augment, cfg_.surrogate.dirichlet_alpha, rng_);
    for (auto& th : thetas) {
      auto apls = true_apls_for(th);
      for (std::size_t r = 0; r < surrogates_.size(); ++r) {
        extra[r].push_back(AplSample{th, apls[r], step});
      }
    }
  }
  for (std::size_t r = 0; r < surrogates_.size(); ++r) {
    rep.fits.push_back(surrogates_[r].retrain(extra[r]));
  }
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

bool TreeRegularizer::trained() const {
  return std::all_of(surrogates_.begin(), surrogates_.end(),
                     [](const Surrogate& s) { return s.retrain_count() > 0; });
}

}  // namespace treereg

// SPDX-License-Identifier: Apache-2.0
#include "treereg/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

namespace treereg {

Surrogate::Surrogate(std::size_t input_dim, SurrogateConfig cfg, std::uint64_t seed)
    : input_dim_(input_dim),
      cfg_(cfg),
      shift_(input_dim, 0.0),
      inv_scale_(1, 1.0),
      rng_(seed) {
  if (input_dim == 0) throw std::invalid_argument("Surrogate: input dimension must be positive");
  net_.glorot(net_.add("W1", cfg_.hidden, input_dim), rng_);
  net_.add("b1", 1, cfg_.hidden);
  // Zero output layer: an untrained surrogate predicts exactly 0.
  net_.add("w2", 1, cfg_.hidden);
  net_.add("b2", 1, 1);
}

Var Surrogate::predict(Var theta) const {
  if (theta.rows() != 1 || theta.cols() != input_dim_) {
    throw ShapeError("surrogate_predict: expected 1x" + std::to_string(input_dim_) + ", got " +
                     theta.value().shape_string());
  }
  Graph& g = theta.graph();
  Matrix neg(1, input_dim_);
  for (std::size_t i = 0; i < input_dim_; ++i) neg[i] = -shift_[i];
  Var z = scale(add(theta, g.constant(std::move(neg))), inv_scale_[0]);
  Var h = tanh(add_row(matmul_bt(z, g.constant(net_.matrix(0))), g.constant(net_.matrix(1))));
  return add_row(matmul_bt(h, g.constant(net_.matrix(2))), g.constant(net_.matrix(3)));
}

double Surrogate::predict_raw(std::span<const double> theta) const {
  if (theta.size() != input_dim_) {
    throw ShapeError("surrogate_predict: expected " + std::to_string(input_dim_) +
                     " values, got " + std::to_string(theta.size()));
  }
  const std::size_t hdim = cfg_.hidden;
  auto w1 = net_.values(0);
  auto b1 = net_.values(1);
  auto w2 = net_.values(2);
  double out = net_.values(3)[0];
  std::vector<double> z(input_dim_);
  for (std::size_t i = 0; i < input_dim_; ++i) z[i] = (theta[i] - shift_[i]) * inv_scale_[0];
  for (std::size_t j = 0; j < hdim; ++j) {
    double a = b1[j];
    const double* row = w1.data() + j * input_dim_;
    for (std::size_t i = 0; i < input_dim_; ++i) a += row[i] * z[i];
    out += w2[j] * std::tanh(a);
  }
  return out;
}

double Surrogate::predict_value(std::span<const double> theta) const {
  return std::max(0.0, predict_raw(theta));
}

void Surrogate::record(std::vector<double> theta, double apl, std::uint64_t step) {
  if (theta.size() != input_dim_) {
    throw ShapeError("record_sample: expected " + std::to_string(input_dim_) + " values, got " +
                     std::to_string(theta.size()));
  }
  if (!std::isfinite(apl) || apl < 0.0) {
    throw std::invalid_argument("record_sample: APL must be finite and >= 0");
  }
  // Keep the buffer ordered by step even if a caller records out of order.
  auto pos = std::upper_bound(buffer_.begin(), buffer_.end(), step,
                              [](std::uint64_t s, const AplSample& a) { return s < a.step; });
  buffer_.insert(pos, AplSample{std::move(theta), apl, step});
  const std::uint64_t newest = buffer_.back().step;
  while (!buffer_.empty() && newest - buffer_.front().step > cfg_.window) buffer_.pop_front();
  while (buffer_.size() > cfg_.capacity) buffer_.pop_front();
}

std::pair<double, double> Surrogate::mse(std::span<const AplSample> samples) const {
  double total = 0.0, worst = 0.0;
  for (const auto& s : samples) {
    const double e = predict_raw(s.theta) - s.apl;
    total += e * e;
    worst = std::max(worst, e * e);
  }
  return {samples.empty() ? 0.0 : total / static_cast<double>(samples.size()), worst};
}

FitReport Surrogate::retrain(std::span<const AplSample> extra) {
  FitReport report;
  report.buffer_size = buffer_.size();
  report.augmented = extra.size();
  std::vector<const AplSample*> fit;
  for (const auto& s : buffer_) fit.push_back(&s);
  for (const auto& s : extra) {
    if (s.theta.size() != input_dim_) throw ShapeError("retrain_surrogate: bad sample width");
    fit.push_back(&s);
  }
  if (fit.size() < cfg_.min_samples) return report;

  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const std::size_t n = fit.size();
  const Eigen::Index dim = static_cast<Eigen::Index>(input_dim_);
  RowMat xc(static_cast<Eigen::Index>(n), dim);
  for (std::size_t r = 0; r < n; ++r)
    xc.row(static_cast<Eigen::Index>(r)) = Eigen::Map<const Eigen::RowVectorXd>(fit[r]->theta.data(), dim);
  Eigen::RowVectorXd mu = xc.colwise().mean();
  xc.rowwise() -= mu;
  std::copy(mu.data(), mu.data() + dim, shift_.begin());

  // Train the first layer in an orthonormal basis P of the span of the
  // centred buffer, then store W1 = W1r * P. Hull samples lie in that span;
  // other extra rows are projected onto it.
  const Eigen::Index m = static_cast<Eigen::Index>(buffer_.size());
  Eigen::MatrixXd gram = xc.topRows(m) * xc.topRows(m).transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  const Eigen::VectorXd& lam = eig.eigenvalues();
  const double top = lam.size() > 0 ? lam.maxCoeff() : 0.0;
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < lam.size(); ++i)
    if (top > 0.0 && lam[i] > 1e-10 * top) keep.push_back(i);
  const Eigen::Index k = static_cast<Eigen::Index>(keep.size());

  std::vector<double> y(n);
  for (std::size_t r = 0; r < n; ++r) y[r] = fit[r]->apl;
  const Eigen::Index hdim = static_cast<Eigen::Index>(cfg_.hidden);
  Eigen::Map<RowMat> w1(net_.values(0).data(), hdim, dim);

  if (k == 0) {
    // Every input is identical: only a constant can be fit.
    double mean_y = 0.0;
    for (double v : y) mean_y += v / static_cast<double>(n);
    w1.setZero();
    auto w2 = net_.values(2);
    double hidden_out = 0.0;
    for (Eigen::Index j = 0; j < hdim; ++j) hidden_out += w2[j] * std::tanh(net_.values(1)[j]);
    net_.values(3)[0] = mean_y - hidden_out;
    inv_scale_[0] = 1.0;
  } else {
    RowMat basis(k, dim);
    for (Eigen::Index c = 0; c < k; ++c) {
      const Eigen::Index i = keep[static_cast<std::size_t>(c)];
      basis.row(c) = (eig.eigenvectors().col(i).transpose() * xc.topRows(m)) / std::sqrt(lam[i]);
    }
    const RowMat proj = xc * basis.transpose();
    Matrix z(n, static_cast<std::size_t>(k));
    std::copy(proj.data(), proj.data() + proj.size(), z.data().begin());
    const double s = cfg_.input_scale > 0.0
                         ? cfg_.input_scale
                         : 1.0 / std::sqrt(proj.squaredNorm() / static_cast<double>(proj.size()));
    for (double& v : z.data()) v *= s;
    inv_scale_[0] = s;

    ParamVector red;
    red.add("W1", cfg_.hidden, static_cast<std::size_t>(k));
    red.add("b1", 1, cfg_.hidden);
    red.add("w2", 1, cfg_.hidden);
    red.add("b2", 1, 1);
    Eigen::Map<RowMat> w1r(red.values(0).data(), hdim, k);
    w1r = w1 * basis.transpose();
    for (std::size_t seg = 1; seg < 4; ++seg) {
      auto src = net_.values(seg);
      std::copy(src.begin(), src.end(), red.values(seg).begin());
    }

    // Full-batch Adam on the reduced net; gradients written out by hand.
    using Vec = Eigen::VectorXd;
    const Eigen::Map<const RowMat> zs(z.data().data(), static_cast<Eigen::Index>(n), k);
    const Eigen::Map<const Vec> ys(y.data(), static_cast<Eigen::Index>(n));
    Eigen::Map<Eigen::RowVectorXd> b1(red.values(1).data(), hdim);
    Eigen::Map<Eigen::RowVectorXd> w2(red.values(2).data(), hdim);
    double& b2 = red.values(3)[0];
    std::vector<double> grad(red.size());
    Eigen::Map<RowMat> gw1(grad.data(), hdim, k);
    Eigen::Map<Eigen::RowVectorXd> gb1(grad.data() + hdim * k, hdim);
    Eigen::Map<Eigen::RowVectorXd> gw2(grad.data() + hdim * k + hdim, hdim);
    double& gb2 = grad.back();
    const double inv_n = 1.0 / static_cast<double>(n);
    const double eps2 = 2.0 * cfg_.epsilon;
    AdamState adam(red.size(), cfg_.learning_rate);
    RowMat h(static_cast<Eigen::Index>(n), hdim);
    for (std::size_t epoch = 0; epoch < cfg_.epochs; ++epoch) {
      h.noalias() = zs * w1r.transpose();
      h.rowwise() += b1;
      h = h.array().tanh();
      Vec out = h * w2.transpose();
      out.array() += b2;
      const Vec err = (out - ys) * (2.0 * inv_n);
      gw2 = err.transpose() * h + eps2 * w2;
      gb2 = err.sum() + eps2 * b2;
      RowMat d = (err * w2).array() * (1.0 - h.array().square());
      gw1.noalias() = d.transpose() * zs;
      gw1 += eps2 * w1r;
      gb1 = d.colwise().sum() + eps2 * b1;
      adam_step(red, grad, adam);
    }
    w1 = w1r * basis;
    for (std::size_t seg = 1; seg < 4; ++seg) {
      auto src = red.values(seg);
      std::copy(src.begin(), src.end(), net_.values(seg).begin());
    }
  }
  ++retrains_;

  report.trained = true;
  double total = 0.0;
  for (const auto* s : fit) {
    const double e = predict_raw(s->theta) - s->apl;
    total += e * e;
    report.max_mse = std::max(report.max_mse, e * e);
  }
  report.mean_mse = total / static_cast<double>(n);
  return report;
}

// ---------------------------------------------------------------------------

std::vector<std::vector<double>> convex_hull_thetas(std::span<const std::vector<double>> points,
                                                    std::size_t count, double alpha,
                                                    std::mt19937_64& rng) {
  if (points.empty()) throw std::invalid_argument("augment_convex_hull: empty buffer");
  if (alpha <= 0.0) throw std::invalid_argument("augment_convex_hull: alpha must be positive");
  const std::size_t dim = points.front().size();
  std::gamma_distribution<double> gamma(alpha, 1.0);
  std::vector<std::vector<double>> out;
  out.reserve(count);
  std::vector<double> w(points.size());
  for (std::size_t c = 0; c < count; ++c) {
    double total = 0.0;
    for (double& v : w) {
      v = gamma(rng);
      total += v;
    }
    std::vector<double> theta(dim, 0.0);
    for (std::size_t j = 0; j < points.size(); ++j) {
      const double wj = w[j] / total;
      for (std::size_t i = 0; i < dim; ++i) theta[i] += wj * points[j][i];
    }
    out.push_back(std::move(theta));
  }
  return out;
}

std::vector<AplSample> augment_convex_hull(const Surrogate& s, std::size_t count,
                                           const std::function<double(std::span<const double>)>& apl_of,
                                           std::mt19937_64& rng) {
  std::vector<std::vector<double>> pts;
  for (const auto& b : s.buffer()) pts.push_back(b.theta);
  if (pts.empty()) throw std::invalid_argument("augment_convex_hull: empty buffer");
  const std::uint64_t step = s.buffer().back().step;
  std::vector<AplSample> out;
  for (auto& theta : convex_hull_thetas(pts, count, s.config().dirichlet_alpha, rng)) {
    const double a = apl_of(theta);
    out.push_back(AplSample{std::move(theta), a, step});
  }
  return out;
}

std::vector<AplSample> restart_samples(
    const std::function<std::vector<AplSample>(std::uint64_t)>& harvest, std::size_t restarts,
    std::uint64_t base_seed) {
  std::vector<AplSample> out;
  for (std::size_t r = 0; r < restarts; ++r) {
    auto part = harvest(base_seed + r);
    for (auto& s : part) out.push_back(std::move(s));
  }
  return out;
}

}  // namespace treereg

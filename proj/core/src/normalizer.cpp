#include "advdiff/normalizer.hpp"

#include <algorithm>
#include <cmath>

#include "advdiff/error.hpp"

namespace advdiff::add {

DeltaNormalizer::DeltaNormalizer(std::size_t dim, std::size_t warmup_updates)
    : mean_(dim, 0.0), var_(dim, 1.0), amp_(dim, 1.0), warmup_(warmup_updates) {}

DeltaNormalizer DeltaNormalizer::identity(std::size_t dim) {
  DeltaNormalizer n(dim);
  n.frozen_ = true;
  return n;
}

std::vector<double> DeltaNormalizer::stddev() const {
  std::vector<double> s(var_.size());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = std::sqrt(var_[i]);
  return s;
}

void DeltaNormalizer::set_amplification(std::size_t index, double factor) {
  if (index >= amp_.size()) throw ShapeError("amplification index out of range");
  amp_[index] = factor;
}

void DeltaNormalizer::merge(std::span<const double> batch_mean,
                            std::span<const double> batch_var, double batch_count) {
  if (count_ == 0.0) {
    std::copy(batch_mean.begin(), batch_mean.end(), mean_.begin());
    std::copy(batch_var.begin(), batch_var.end(), var_.begin());
    count_ = batch_count;
  } else {
    const double total = count_ + batch_count;
    for (std::size_t i = 0; i < mean_.size(); ++i) {
      const double d = batch_mean[i] - mean_[i];
      const double m2 = var_[i] * count_ + batch_var[i] * batch_count +
                        d * d * count_ * batch_count / total;
      mean_[i] += d * batch_count / total;
      var_[i] = std::max(0.0, m2 / total);
    }
    count_ = total;
  }
  ++updates_;
  if (warmup_ > 0 && updates_ >= warmup_) frozen_ = true;
}

void DeltaNormalizer::update(std::span<const double> delta) {
  if (frozen_) return;
  if (delta.size() != dim()) throw ShapeError("normalizer update: dimension mismatch");
  const std::vector<double> zero(dim(), 0.0);
  merge(delta, zero, 1.0);
}

void DeltaNormalizer::update(const ad::Tensor& batch) {
  if (frozen_ || batch.size() == 0) return;
  if (batch.cols() != dim()) throw ShapeError("normalizer update: dimension mismatch");
  const auto n = static_cast<double>(batch.rows());
  std::vector<double> m(dim(), 0.0);
  std::vector<double> v(dim(), 0.0);
  for (std::size_t r = 0; r < batch.rows(); ++r) {
    const auto row = batch.row_span(r);
    for (std::size_t i = 0; i < dim(); ++i) m[i] += row[i];
  }
  for (double& x : m) x /= n;
  for (std::size_t r = 0; r < batch.rows(); ++r) {
    const auto row = batch.row_span(r);
    for (std::size_t i = 0; i < dim(); ++i) v[i] += (row[i] - m[i]) * (row[i] - m[i]);
  }
  for (double& x : v) x /= n;
  merge(m, v, n);
}

std::vector<double> DeltaNormalizer::normalize(std::span<const double> delta) const {
  if (delta.size() != dim()) throw ShapeError("normalize: dimension mismatch");
  std::vector<double> out(dim());
  for (std::size_t i = 0; i < dim(); ++i) {
    out[i] = amp_[i] * delta[i] / std::max(std::sqrt(var_[i]), kStdFloor);
  }
  return out;
}

ad::Tensor DeltaNormalizer::normalize(const ad::Tensor& batch) const {
  if (batch.cols() != dim()) throw ShapeError("normalize: dimension mismatch");
  std::vector<double> scale(dim());
  for (std::size_t i = 0; i < dim(); ++i) {
    scale[i] = amp_[i] / std::max(std::sqrt(var_[i]), kStdFloor);
  }
  ad::Tensor out = batch;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row_span(r);
    for (std::size_t i = 0; i < dim(); ++i) row[i] *= scale[i];
  }
  return out;
}

nlohmann::json DeltaNormalizer::to_json() const {
  return {{"mean", mean_},       {"variance", var_},   {"amplification", amp_},
          {"count", count_},     {"updates", updates_}, {"warmup_updates", warmup_},
          {"frozen", frozen_}};
}

DeltaNormalizer DeltaNormalizer::from_json(const nlohmann::json& j) {
  DeltaNormalizer n;
  n.mean_ = j.at("mean").get<std::vector<double>>();
  n.var_ = j.at("variance").get<std::vector<double>>();
  n.amp_ = j.at("amplification").get<std::vector<double>>();
  n.count_ = j.at("count").get<double>();
  n.updates_ = j.at("updates").get<std::size_t>();
  n.warmup_ = j.at("warmup_updates").get<std::size_t>();
  n.frozen_ = j.at("frozen").get<bool>();
  if (n.var_.size() != n.mean_.size() || n.amp_.size() != n.mean_.size()) {
    throw ShapeError("normalizer state has inconsistent dimensions");
  }
  return n;
}

}  // namespace advdiff::add

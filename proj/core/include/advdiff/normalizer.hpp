#ifndef ADVDIFF_NORMALIZER_HPP_
#define ADVDIFF_NORMALIZER_HPP_

#include <cstddef>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "advdiff/tensor.hpp"

namespace advdiff::add {

// Running per-dimension statistics of differential vectors.
//
// The transform divides by the running standard deviation (floored at 1e-6)
// and then multiplies by a per-dimension amplification factor. It does not
// subtract the mean, so the zero differential stays the zero vector and the
// single positive sample keeps its meaning after normalization.
class DeltaNormalizer {
 public:
  static constexpr double kStdFloor = 1e-6;

  DeltaNormalizer() = default;
  // warmup_updates > 0 freezes the statistics after that many update() calls.
  explicit DeltaNormalizer(std::size_t dim, std::size_t warmup_updates = 0);

  // A frozen normalizer with unit scale: normalize() only applies amplification.
  static DeltaNormalizer identity(std::size_t dim);

  std::size_t dim() const noexcept { return mean_.size(); }
  bool frozen() const noexcept { return frozen_; }
  void freeze() noexcept { frozen_ = true; }
  double count() const noexcept { return count_; }
  std::size_t updates() const noexcept { return updates_; }

  const std::vector<double>& mean() const noexcept { return mean_; }
  const std::vector<double>& variance() const noexcept { return var_; }
  std::vector<double> stddev() const;

  void set_amplification(std::size_t index, double factor);
  const std::vector<double>& amplification() const noexcept { return amp_; }

  // No-op once frozen.
  void update(std::span<const double> delta);
  // One update from every row of `batch`.
  void update(const ad::Tensor& batch);

  std::vector<double> normalize(std::span<const double> delta) const;
  ad::Tensor normalize(const ad::Tensor& batch) const;

  nlohmann::json to_json() const;
  static DeltaNormalizer from_json(const nlohmann::json& j);

 private:
  void merge(std::span<const double> batch_mean, std::span<const double> batch_var,
             double batch_count);

  std::vector<double> mean_;
  std::vector<double> var_;
  std::vector<double> amp_;
  double count_ = 0.0;
  std::size_t updates_ = 0;
  std::size_t warmup_ = 0;
  bool frozen_ = false;
};

}  // namespace advdiff::add

#endif  // ADVDIFF_NORMALIZER_HPP_

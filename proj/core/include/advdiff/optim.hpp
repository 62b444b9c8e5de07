#ifndef ADVDIFF_OPTIM_HPP_
#define ADVDIFF_OPTIM_HPP_

#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "advdiff/tensor.hpp"

namespace advdiff::optim {

// First-order optimizer over a fixed, ordered list of parameter tensors.
// State is allocated on the first step and keyed by position.
class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void step(std::span<ad::Tensor* const> params,
                    std::span<const ad::Tensor> grads) = 0;
  virtual double learning_rate() const = 0;
};

// Heavy-ball SGD: v <- mu v + g; p <- p - lr v.
class SgdMomentum final : public Optimizer {
 public:
  SgdMomentum(double learning_rate, double momentum);
  void step(std::span<ad::Tensor* const> params,
            std::span<const ad::Tensor> grads) override;
  double learning_rate() const override { return lr_; }

 private:
  double lr_;
  double momentum_;
  std::vector<ad::Tensor> velocity_;
};

class Adam final : public Optimizer {
 public:
  explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
                double epsilon = 1e-8);
  void step(std::span<ad::Tensor* const> params,
            std::span<const ad::Tensor> grads) override;
  double learning_rate() const override { return lr_; }

 private:
  double lr_;
  double beta1_;
  double beta2_;
  double eps_;
  long steps_ = 0;
  std::vector<ad::Tensor> m_;
  std::vector<ad::Tensor> v_;
};

enum class OptimizerKind { kSgdMomentum, kAdam };

OptimizerKind parse_optimizer(std::string_view name);
std::string_view to_string(OptimizerKind kind);
std::unique_ptr<Optimizer> make_optimizer(OptimizerKind kind, double learning_rate,
                                          double momentum = 0.9);

// Scales grads in place so their joint L2 norm is at most max_norm; returns
// the norm before clipping.
double clip_global_norm(std::span<ad::Tensor> grads, double max_norm);

}  // namespace advdiff::optim

#endif  // ADVDIFF_OPTIM_HPP_

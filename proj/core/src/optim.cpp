#include "advdiff/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "advdiff/error.hpp"

namespace advdiff::optim {
namespace {

void check_lists(std::span<ad::Tensor* const> params,
                 std::span<const ad::Tensor> grads) {
  if (params.size() != grads.size()) {
    throw ShapeError("optimizer: " + std::to_string(params.size()) +
                     " parameters but " + std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape() != grads[i].shape()) {
      throw ShapeError("optimizer: gradient shape " + ad::to_string(grads[i].shape()) +
                       " does not match parameter " + ad::to_string(params[i]->shape()));
    }
    if (!grads[i].all_finite()) throw NumericError("optimizer: non-finite gradient");
  }
}

std::vector<ad::Tensor> zeros_like(std::span<ad::Tensor* const> params) {
  std::vector<ad::Tensor> out;
  out.reserve(params.size());
  for (const ad::Tensor* p : params) out.emplace_back(p->shape(), 0.0);
  return out;
}

}  // namespace

SgdMomentum::SgdMomentum(double learning_rate, double momentum)
    : lr_(learning_rate), momentum_(momentum) {
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("learning rate must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw std::invalid_argument("momentum must lie in [0, 1)");
  }
}

void SgdMomentum::step(std::span<ad::Tensor* const> params,
                       std::span<const ad::Tensor> grads) {
  check_lists(params, grads);
  if (velocity_.empty()) velocity_ = zeros_like(params);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->data();
    auto v = velocity_[i].data();
    auto g = grads[i].data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      v[k] = momentum_ * v[k] + g[k];
      p[k] -= lr_ * v[k];
    }
  }
}

Adam::Adam(double learning_rate, double beta1, double beta2, double epsilon)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("learning rate must be >= 0");
}

void Adam::step(std::span<ad::Tensor* const> params,
                std::span<const ad::Tensor> grads) {
  check_lists(params, grads);
  if (m_.empty()) {
    m_ = zeros_like(params);
    v_ = zeros_like(params);
  }
  ++steps_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->data();
    auto m = m_[i].data();
    auto v = v_[i].data();
    auto g = grads[i].data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * g[k];
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * g[k] * g[k];
      p[k] -= lr_ * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
    }
  }
}

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "sgd_momentum") return OptimizerKind::kSgdMomentum;
  if (name == "adam") return OptimizerKind::kAdam;
  throw ConfigError("unknown optimizer '" + std::string(name) + "'");
}

std::string_view to_string(OptimizerKind kind) {
  return kind == OptimizerKind::kAdam ? "adam" : "sgd_momentum";
}

std::unique_ptr<Optimizer> make_optimizer(OptimizerKind kind, double learning_rate,
                                          double momentum) {
  if (kind == OptimizerKind::kAdam) return std::make_unique<Adam>(learning_rate);
  return std::make_unique<SgdMomentum>(learning_rate, momentum);
}

double clip_global_norm(std::span<ad::Tensor> grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads) {
    for (double x : g.data()) sq += x * x;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& g : grads) {
      for (double& x : g.data()) x *= s;
    }
  }
  return norm;
}

}  // namespace advdiff::optim

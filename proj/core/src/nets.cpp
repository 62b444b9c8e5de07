#include "advdiff/nets.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "advdiff/error.hpp"

namespace advdiff::nets {
namespace {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void activate(Activation act, std::span<double> values) {
  switch (act) {
    case Activation::kRelu:
      for (double& v : values) v = v > 0.0 ? v : 0.0;
      return;
    case Activation::kTanh:
      for (double& v : values) v = std::tanh(v);
      return;
    case Activation::kIdentity:
      return;
  }
}

ad::Var activate(Activation act, ad::Var x) {
  switch (act) {
    case Activation::kRelu: return ad::relu(x);
    case Activation::kTanh: return ad::tanh(x);
    case Activation::kIdentity: return x;
  }
  return x;
}

void check_sizes(const std::vector<std::size_t>& sizes) {
  if (sizes.size() < 2) {
    throw std::invalid_argument("an MLP needs at least an input and an output size");
  }
  for (std::size_t s : sizes) {
    if (s == 0) throw std::invalid_argument("MLP layer sizes must be positive");
  }
}

}  // namespace

std::string_view to_string(Activation activation) {
  switch (activation) {
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
    case Activation::kIdentity: return "identity";
  }
  return "unknown";
}

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  if (name == "identity") return Activation::kIdentity;
  throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

Mlp Mlp::init(std::vector<std::size_t> layer_sizes, Activation hidden,
              std::uint64_t seed, double output_gain) {
  check_sizes(layer_sizes);
  Mlp mlp;
  mlp.sizes_ = std::move(layer_sizes);
  mlp.hidden_ = hidden;
  mlp.seed_ = seed;
  Rng rng(seed);
  const std::size_t n_layers = mlp.sizes_.size() - 1;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const std::size_t in = mlp.sizes_[l];
    const std::size_t out = mlp.sizes_[l + 1];
    const bool last = l + 1 == n_layers;
    double bound = 1.0 / std::sqrt(static_cast<double>(in));
    if (last) bound *= output_gain;
    std::uniform_real_distribution<double> dist(-bound, bound);
    DenseLayer layer;
    layer.weight = ad::Tensor({in, out});
    for (double& w : layer.weight.data()) w = dist(rng);
    layer.bias = ad::Tensor({1, out}, 0.0);
    layer.activation = last ? Activation::kIdentity : hidden;
    mlp.layers_.push_back(std::move(layer));
  }
  return mlp;
}

Mlp from_parts(std::vector<std::size_t> layer_sizes, Activation hidden,
               std::uint64_t seed, std::span<const double> flat) {
  Mlp mlp = Mlp::init(std::move(layer_sizes), hidden, seed);
  mlp.assign(flat);
  return mlp;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += layer.weight.size() + layer.bias.size();
  return n;
}

std::vector<ad::Tensor*> Mlp::parameters() {
  std::vector<ad::Tensor*> out;
  for (auto& layer : layers_) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
  }
  return out;
}

std::vector<double> Mlp::flatten() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (const auto& layer : layers_) {
    flat.insert(flat.end(), layer.weight.data().begin(), layer.weight.data().end());
    flat.insert(flat.end(), layer.bias.data().begin(), layer.bias.data().end());
  }
  return flat;
}

void Mlp::assign(std::span<const double> flat) {
  if (flat.size() != parameter_count()) {
    throw ShapeError("parameter vector has " + std::to_string(flat.size()) +
                     " entries, network expects " +
                     std::to_string(parameter_count()));
  }
  std::size_t offset = 0;
  for (auto& layer : layers_) {
    for (ad::Tensor* t : {&layer.weight, &layer.bias}) {
      std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), t->size(),
                  t->data().begin());
      offset += t->size();
    }
  }
}

ad::Tensor Mlp::evaluate(const ad::Tensor& x) const {
  if (x.rank() != 2 || x.cols() != input_size()) {
    throw ShapeError("network expects input width " + std::to_string(input_size()) +
                     ", got " + ad::to_string(x.shape()));
  }
  const auto batch = static_cast<Eigen::Index>(x.rows());
  RowMatrix h = Eigen::Map<const RowMatrix>(x.data().data(), batch,
                                            static_cast<Eigen::Index>(x.cols()));
  for (const auto& layer : layers_) {
    const auto in = static_cast<Eigen::Index>(layer.weight.rows());
    const auto out = static_cast<Eigen::Index>(layer.weight.cols());
    Eigen::Map<const RowMatrix> w(layer.weight.data().data(), in, out);
    Eigen::Map<const Eigen::RowVectorXd> b(layer.bias.data().data(), out);
    RowMatrix next = h * w;
    next.rowwise() += b;
    activate(layer.activation, std::span<double>(next.data(), static_cast<std::size_t>(next.size())));
    h = std::move(next);
  }
  ad::Tensor result({x.rows(), output_size()});
  std::copy_n(h.data(), result.size(), result.data().begin());
  return result;
}

std::vector<double> Mlp::evaluate(std::span<const double> x) const {
  return evaluate(ad::Tensor::row(x)).storage();
}

BoundMlp Mlp::bind(ad::Graph& graph) const {
  BoundMlp bound;
  for (const auto& layer : layers_) {
    bound.params_.push_back(graph.parameter(layer.weight));
    bound.params_.push_back(graph.parameter(layer.bias));
    bound.activations_.push_back(layer.activation);
  }
  return bound;
}

ad::Var BoundMlp::apply(ad::Var x) const {
  ad::Var h = x;
  for (std::size_t l = 0; l < activations_.size(); ++l) {
    h = ad::add_bias(ad::matmul(h, params_[2 * l]), params_[2 * l + 1]);
    h = activate(activations_[l], h);
  }
  return h;
}

double gaussian_log_density(std::span<const double> mean,
                            std::span<const double> sigma,
                            std::span<const double> x) {
  if (mean.size() != sigma.size() || x.size() != sigma.size()) {
    throw ShapeError("gaussian_log_density: dimension mismatch");
  }
  double lp = -0.5 * static_cast<double>(x.size()) * std::log(2.0 * std::numbers::pi);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double z = (x[i] - mean[i]) / sigma[i];
    lp -= 0.5 * z * z + std::log(sigma[i]);
  }
  return lp;
}

GaussianPolicy::GaussianPolicy(Mlp mean_net, std::vector<double> sigma)
    : mean_(std::move(mean_net)), sigma_(std::move(sigma)) {
  if (sigma_.size() != mean_.output_size()) {
    throw ShapeError("policy sigma has " + std::to_string(sigma_.size()) +
                     " entries for " + std::to_string(mean_.output_size()) +
                     " action dimensions");
  }
  log_norm_ = 0.5 * static_cast<double>(sigma_.size()) * std::log(2.0 * std::numbers::pi);
  for (double s : sigma_) {
    if (!(s > 0.0) || !std::isfinite(s)) {
      throw std::invalid_argument("policy sigma must be strictly positive");
    }
    log_norm_ += std::log(s);
  }
}

std::vector<double> GaussianPolicy::mean(std::span<const double> features) const {
  if (features.size() != mean_.input_size()) {
    throw ShapeError("policy expects " + std::to_string(mean_.input_size()) +
                     " features, got " + std::to_string(features.size()));
  }
  return mean_.evaluate(features);
}

PolicySample GaussianPolicy::sample(std::span<const double> features, Rng& rng) const {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> z(sigma_.size());
  for (double& v : z) v = normal(rng);
  return sample_with_noise(features, z);
}

PolicySample GaussianPolicy::sample_with_noise(std::span<const double> features,
                                               std::span<const double> z) const {
  if (z.size() != sigma_.size()) throw ShapeError("noise dimension mismatch");
  PolicySample out;
  out.action = mean(features);
  double quad = 0.0;
  for (std::size_t i = 0; i < sigma_.size(); ++i) {
    out.action[i] += sigma_[i] * z[i];
    quad += z[i] * z[i];
  }
  out.log_prob = -0.5 * quad - log_norm_;
  return out;
}

double GaussianPolicy::log_prob(std::span<const double> mean_action,
                                std::span<const double> action) const {
  return gaussian_log_density(mean_action, sigma_, action);
}

ad::Var GaussianPolicy::log_prob(const BoundMlp& bound, ad::Var features,
                                 const ad::Tensor& actions) const {
  ad::Graph& g = *features.graph();
  const ad::Var mu = bound.apply(features);
  if (mu.shape() != actions.shape()) {
    throw ShapeError("log_prob: actions " + ad::to_string(actions.shape()) +
                     " vs mean " + ad::to_string(mu.shape()));
  }
  ad::Tensor inv_sigma(actions.shape());
  for (std::size_t r = 0; r < actions.rows(); ++r) {
    for (std::size_t c = 0; c < actions.cols(); ++c) inv_sigma.at(r, c) = 1.0 / sigma_[c];
  }
  const ad::Var z = (g.constant(actions) - mu) * g.constant(std::move(inv_sigma));
  return (-0.5 * ad::sum_cols(ad::square(z))) - log_norm_;
}

double squash(double logit) {
  const double s = logit >= 0.0 ? 1.0 / (1.0 + std::exp(-logit))
                                : std::exp(logit) / (1.0 + std::exp(logit));
  return std::clamp(s, Discriminator::kEpsilon, 1.0 - Discriminator::kEpsilon);
}

Discriminator::Discriminator(Mlp net) : net_(std::move(net)) {
  if (net_.output_size() != 1) {
    throw ShapeError("discriminator network must have a single output");
  }
}

double Discriminator::score(std::span<const double> delta) const {
  if (delta.size() != input_size()) {
    throw ShapeError("discriminator expects " + std::to_string(input_size()) +
                     " differential entries, got " + std::to_string(delta.size()));
  }
  return squash(net_.evaluate(delta).front());
}

ad::Tensor Discriminator::score_batch(const ad::Tensor& deltas) const {
  ad::Tensor logits = net_.evaluate(deltas);
  for (double& v : logits.data()) v = squash(v);
  return logits;
}

ad::Var Discriminator::score(const BoundMlp& bound, ad::Var deltas) const {
  return ad::clamp(ad::sigmoid(bound.apply(deltas)), kEpsilon, 1.0 - kEpsilon);
}

ad::Var Discriminator::log_score(const BoundMlp& bound, ad::Var deltas) const {
  return ad::log_sigmoid(bound.apply(deltas));
}

}  // namespace advdiff::nets

#ifndef ADVDIFF_NETS_HPP_
#define ADVDIFF_NETS_HPP_

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "advdiff/autodiff.hpp"
#include "advdiff/tensor.hpp"

namespace advdiff {

using Rng = std::mt19937_64;

namespace nets {

enum class Activation { kRelu, kTanh, kIdentity };

std::string_view to_string(Activation activation);
Activation parse_activation(std::string_view name);

struct DenseLayer {
  ad::Tensor weight;  // (in x out)
  ad::Tensor bias;    // (1 x out)
  Activation activation = Activation::kIdentity;
};

class BoundMlp;

// Fully connected network: hidden layers use one activation, the output
// layer is linear.
class Mlp {
 public:
  Mlp() = default;

  // Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)) scaled by `output_gain` on
  // the last layer; biases zero.
  static Mlp init(std::vector<std::size_t> layer_sizes, Activation hidden,
                  std::uint64_t seed, double output_gain = 1.0);

  const std::vector<std::size_t>& layer_sizes() const noexcept { return sizes_; }
  Activation hidden_activation() const noexcept { return hidden_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::size_t input_size() const { return sizes_.front(); }
  std::size_t output_size() const { return sizes_.back(); }
  std::size_t parameter_count() const;

  std::vector<DenseLayer>& layers() noexcept { return layers_; }
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }

  // Weight/bias tensors in layer order: W0, b0, W1, b1, ...
  std::vector<ad::Tensor*> parameters();
  std::vector<double> flatten() const;
  void assign(std::span<const double> flat);

  // Tape-free batch evaluation; `x` is (B x input_size).
  ad::Tensor evaluate(const ad::Tensor& x) const;
  std::vector<double> evaluate(std::span<const double> x) const;

  // Places the parameters into `graph` as parameter leaves.
  BoundMlp bind(ad::Graph& graph) const;

 private:
  std::vector<std::size_t> sizes_;
  Activation hidden_ = Activation::kRelu;
  std::uint64_t seed_ = 0;
  std::vector<DenseLayer> layers_;
};

// Builds an Mlp with the given structure from flattened parameters.
Mlp from_parts(std::vector<std::size_t> layer_sizes, Activation hidden,
               std::uint64_t seed, std::span<const double> flat);

inline Mlp mlp_init(std::vector<std::size_t> layer_sizes, Activation hidden,
                    std::uint64_t seed) {
  return Mlp::init(std::move(layer_sizes), hidden, seed);
}

class BoundMlp {
 public:
  BoundMlp() = default;
  ad::Var apply(ad::Var x) const;
  const std::vector<ad::Var>& params() const noexcept { return params_; }

 private:
  friend class Mlp;
  std::vector<ad::Var> params_;
  std::vector<Activation> activations_;
};

struct PolicySample {
  std::vector<double> action;
  double log_prob = 0.0;
};

// Diagonal Gaussian with state-dependent mean and fixed standard deviation.
class GaussianPolicy {
 public:
  GaussianPolicy() = default;
  GaussianPolicy(Mlp mean_net, std::vector<double> sigma);

  Mlp& mean_net() noexcept { return mean_; }
  const Mlp& mean_net() const noexcept { return mean_; }
  const std::vector<double>& sigma() const noexcept { return sigma_; }
  std::size_t action_size() const { return sigma_.size(); }

  std::vector<double> mean(std::span<const double> features) const;
  PolicySample sample(std::span<const double> features, Rng& rng) const;
  // Sample with externally supplied standard-normal noise.
  PolicySample sample_with_noise(std::span<const double> features,
                                 std::span<const double> z) const;
  double log_prob(std::span<const double> mean,
                  std::span<const double> action) const;

  // Per-row log density (B x 1) of `actions` under the bound mean network.
  ad::Var log_prob(const BoundMlp& bound, ad::Var features,
                   const ad::Tensor& actions) const;

 private:
  Mlp mean_;
  std::vector<double> sigma_;
  double log_norm_ = 0.0;  // sum(log sigma) + d/2 log(2 pi)
};

double gaussian_log_density(std::span<const double> mean,
                            std::span<const double> sigma,
                            std::span<const double> x);

// Scalar-output network squashed by a logistic and clamped to [eps, 1-eps].
class Discriminator {
 public:
  static constexpr double kEpsilon = 1e-6;

  Discriminator() = default;
  explicit Discriminator(Mlp net);

  Mlp& net() noexcept { return net_; }
  const Mlp& net() const noexcept { return net_; }
  std::size_t input_size() const { return net_.input_size(); }

  double score(std::span<const double> delta) const;
  // Scores for each row of `deltas`, (B x 1).
  ad::Tensor score_batch(const ad::Tensor& deltas) const;
  // Graph version; `bound` must come from net().bind().
  ad::Var score(const BoundMlp& bound, ad::Var deltas) const;
  // Unclamped log D, finite for any logit.
  ad::Var log_score(const BoundMlp& bound, ad::Var deltas) const;

 private:
  Mlp net_;
};

double squash(double logit);

}  // namespace nets
}  // namespace advdiff

#endif  // ADVDIFF_NETS_HPP_

#ifndef ADVDIFF_ADD_CORE_HPP_
#define ADVDIFF_ADD_CORE_HPP_

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "advdiff/autodiff.hpp"
#include "advdiff/nets.hpp"

namespace advdiff::add {

// Labelled feature vector extracted from an agent or reference state by an
// observation map. Angular entries are scalar angles in radians.
struct FeatureVector {
  std::vector<double> values;
  std::vector<std::string> labels;
  std::vector<bool> angular;  // empty means all linear

  std::size_t size() const noexcept { return values.size(); }
};

// Per-objective error vector fed to the discriminator. The ideal solution is
// the all-zero vector of the same length.
struct DifferentialVector {
  std::vector<double> values;
  std::vector<std::string> labels;

  std::size_t size() const noexcept { return values.size(); }
  static DifferentialVector zeros_like(const DifferentialVector& other);
};

// Wraps to (-pi, pi].
double wrap_angle(double radians);

// ref - agent, entrywise; angular entries are wrapped.
DifferentialVector differential(const FeatureVector& ref, const FeatureVector& agent);

DifferentialVector concat(const DifferentialVector& a, const DifferentialVector& b);

enum class GpMode { kNone, kNeg, kPos, kBoth, kWganGp };

inline constexpr std::array<GpMode, 5> kAllGpModes = {
    GpMode::kNone, GpMode::kNeg, GpMode::kPos, GpMode::kBoth, GpMode::kWganGp};

std::string_view to_string(GpMode mode);
GpMode parse_gp_mode(std::string_view name);

// Discriminator objective terms built on one graph.
struct DiscLossTerms {
  ad::Var loss;             // -[log D(0) + mean log(1 - D(neg))] + lambda * penalty
  ad::Var penalty;          // unscaled gradient penalty (zero constant for kNone)
  ad::Var positive_score;   // D(0), (1 x 1)
  ad::Var negative_scores;  // D(neg), (B x 1)
  ad::Var positive_input;   // the zero vector leaf
  ad::Var negative_input;   // the negatives leaf
  std::size_t positive_samples = 0;  // rows in positive_input
};

// `negatives` is (B x n). `bound` must be disc.net().bind(graph). The rng
// draws interpolation coefficients for kWganGp only.
DiscLossTerms disc_loss(ad::Graph& graph, const nets::Discriminator& disc,
                        const nets::BoundMlp& bound, const ad::Tensor& negatives,
                        GpMode mode, double lambda_gp, Rng& rng);

// Penalty on the squashed discriminator output's input-gradient:
//   kNone   0
//   kNeg    mean_i ||grad D(neg_i)||^2
//   kPos    ||grad D(0)||^2
//   kBoth   kPos + kNeg
//   kWganGp mean_i (||grad D(u_i neg_i)||_2 - 1)^2, u_i ~ U[0, 1]
ad::Var gradient_penalty(ad::Graph& graph, const nets::Discriminator& disc,
                         const nets::BoundMlp& bound, const ad::Tensor& negatives,
                         GpMode mode, Rng& rng);

// -log(1 - D), with D clamped to [eps, 1 - eps].
double add_reward(double score);
double add_reward(const nets::Discriminator& disc, std::span<const double> delta);

// Input-gradient of the squashed score at each row of `deltas`, (B x n).
ad::Tensor score_input_gradient(const nets::Discriminator& disc,
                                const ad::Tensor& deltas);

}  // namespace advdiff::add

#endif  // ADVDIFF_ADD_CORE_HPP_

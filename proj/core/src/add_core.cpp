#include "advdiff/add_core.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "advdiff/error.hpp"

namespace advdiff::add {
namespace {

// Keeps sqrt differentiable when an input-gradient vanishes.
constexpr double kNormFloor = 1e-12;

ad::Var penalty_from_scores(ad::Graph& graph, ad::Var scores, ad::Var inputs,
                            bool lipschitz) {
  const std::size_t batch = inputs.value().rows();
  const ad::Var grad = graph.gradient(ad::sum(scores), inputs);
  if (!lipschitz) {
    return (1.0 / static_cast<double>(batch)) * ad::sum(ad::square(grad));
  }
  const ad::Var norms = ad::sqrt(ad::sum_cols(ad::square(grad)) + kNormFloor);
  return ad::mean(ad::square(norms - 1.0));
}

ad::Tensor interpolate_towards_zero(const ad::Tensor& negatives, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  ad::Tensor out = negatives;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    const double u = unit(rng);
    for (double& v : out.row_span(r)) v *= u;
  }
  return out;
}

ad::Var build_penalty(ad::Graph& graph, const nets::Discriminator& disc,
                      const nets::BoundMlp& bound, GpMode mode,
                      ad::Var positive_input, ad::Var positive_score,
                      ad::Var negative_input, ad::Var negative_scores, Rng& rng) {
  switch (mode) {
    case GpMode::kNone:
      return graph.constant(ad::Tensor::scalar(0.0));
    case GpMode::kNeg:
      return penalty_from_scores(graph, negative_scores, negative_input, false);
    case GpMode::kPos:
      return penalty_from_scores(graph, positive_score, positive_input, false);
    case GpMode::kBoth:
      return penalty_from_scores(graph, positive_score, positive_input, false) +
             penalty_from_scores(graph, negative_scores, negative_input, false);
    case GpMode::kWganGp: {
      const ad::Var mixed =
          graph.input(interpolate_towards_zero(negative_input.value(), rng));
      return penalty_from_scores(graph, disc.score(bound, mixed), mixed, true);
    }
  }
  throw std::logic_error("unhandled gradient penalty mode");
}

void check_negatives(const nets::Discriminator& disc, const ad::Tensor& negatives) {
  if (negatives.rank() != 2 || negatives.rows() == 0) {
    throw std::invalid_argument("discriminator loss needs a non-empty negative batch");
  }
  if (negatives.cols() != disc.input_size()) {
    throw ShapeError("negatives have width " + std::to_string(negatives.cols()) +
                     ", discriminator expects " + std::to_string(disc.input_size()));
  }
}

}  // namespace

DifferentialVector DifferentialVector::zeros_like(const DifferentialVector& other) {
  return {std::vector<double>(other.size(), 0.0), other.labels};
}

double wrap_angle(double radians) {
  double d = std::remainder(radians, 2.0 * std::numbers::pi);
  if (d <= -std::numbers::pi) d += 2.0 * std::numbers::pi;
  return d;
}

DifferentialVector differential(const FeatureVector& ref, const FeatureVector& agent) {
  if (ref.size() != agent.size()) {
    throw ShapeError("differential: feature lengths differ (" +
                     std::to_string(ref.size()) + " vs " +
                     std::to_string(agent.size()) + ")");
  }
  if (ref.labels != agent.labels) {
    throw std::invalid_argument("differential: feature labels do not match");
  }
  if (ref.angular != agent.angular) {
    throw std::invalid_argument("differential: angular flags do not match");
  }
  DifferentialVector out;
  out.labels = ref.labels;
  out.values.resize(ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double d = ref.values[i] - agent.values[i];
    const bool angular = !ref.angular.empty() && ref.angular[i];
    out.values[i] = angular ? wrap_angle(d) : d;
  }
  return out;
}

DifferentialVector concat(const DifferentialVector& a, const DifferentialVector& b) {
  DifferentialVector out = a;
  out.values.insert(out.values.end(), b.values.begin(), b.values.end());
  out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
  return out;
}

std::string_view to_string(GpMode mode) {
  switch (mode) {
    case GpMode::kNone: return "none";
    case GpMode::kNeg: return "neg";
    case GpMode::kPos: return "pos";
    case GpMode::kBoth: return "both";
    case GpMode::kWganGp: return "wgan_gp";
  }
  return "unknown";
}

GpMode parse_gp_mode(std::string_view name) {
  for (GpMode mode : kAllGpModes) {
    if (to_string(mode) == name) return mode;
  }
  throw ConfigError("unknown gradient penalty mode '" + std::string(name) + "'");
}

DiscLossTerms disc_loss(ad::Graph& graph, const nets::Discriminator& disc,
                        const nets::BoundMlp& bound, const ad::Tensor& negatives,
                        GpMode mode, double lambda_gp, Rng& rng) {
  check_negatives(disc, negatives);
  if (!(lambda_gp >= 0.0)) throw std::invalid_argument("lambda_gp must be >= 0");

  DiscLossTerms terms;
  terms.positive_input = graph.input(ad::Tensor({1, disc.input_size()}, 0.0));
  terms.positive_samples = terms.positive_input.value().rows();
  terms.negative_input = graph.input(negatives);
  terms.positive_score = disc.score(bound, terms.positive_input);
  terms.negative_scores = disc.score(bound, terms.negative_input);

  const ad::Var real_term = ad::log(terms.positive_score);
  const ad::Var fake_term = ad::mean(ad::log(1.0 - terms.negative_scores));
  terms.penalty = build_penalty(graph, disc, bound, mode, terms.positive_input,
                                terms.positive_score, terms.negative_input,
                                terms.negative_scores, rng);
  terms.loss = -(real_term + fake_term) + lambda_gp * terms.penalty;
  return terms;
}

ad::Var gradient_penalty(ad::Graph& graph, const nets::Discriminator& disc,
                         const nets::BoundMlp& bound, const ad::Tensor& negatives,
                         GpMode mode, Rng& rng) {
  if (mode == GpMode::kNone) return graph.constant(ad::Tensor::scalar(0.0));
  if (mode != GpMode::kPos) check_negatives(disc, negatives);
  const ad::Var positive_input = graph.input(ad::Tensor({1, disc.input_size()}, 0.0));
  const ad::Var positive_score = disc.score(bound, positive_input);
  if (mode == GpMode::kPos) {
    return penalty_from_scores(graph, positive_score, positive_input, false);
  }
  const ad::Var negative_input = graph.input(negatives);
  const ad::Var negative_scores = disc.score(bound, negative_input);
  return build_penalty(graph, disc, bound, mode, positive_input, positive_score,
                       negative_input, negative_scores, rng);
}

double add_reward(double score) {
  const double d =
      std::clamp(score, nets::Discriminator::kEpsilon, 1.0 - nets::Discriminator::kEpsilon);
  return -std::log1p(-d);
}

double add_reward(const nets::Discriminator& disc, std::span<const double> delta) {
  return add_reward(disc.score(delta));
}

ad::Tensor score_input_gradient(const nets::Discriminator& disc,
                                const ad::Tensor& deltas) {
  ad::Graph graph;
  const nets::BoundMlp bound = disc.net().bind(graph);
  const ad::Var x = graph.input(deltas);
  const ad::Var grad = graph.gradient(ad::sum(disc.score(bound, x)), x);
  return grad.value();
}

}  // namespace advdiff::add

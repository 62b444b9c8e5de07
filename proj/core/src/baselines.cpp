#include "advdiff/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "advdiff/error.hpp"

namespace advdiff::baselines {
namespace {

std::size_t find_label(const add::FeatureVector& f, const std::string& label) {
  const auto it = std::find(f.labels.begin(), f.labels.end(), label);
  if (it == f.labels.end()) {
    throw std::invalid_argument("feature '" + label + "' is not present");
  }
  return static_cast<std::size_t>(it - f.labels.begin());
}

}  // namespace

double ExpRewardSpec::total_weight() const {
  double w = 0.0;
  for (const auto& t : terms) w += t.weight;
  return w;
}

void ExpRewardSpec::validate() const {
  for (const auto& t : terms) {
    if (!(t.weight >= 0.0)) throw ConfigError("term '" + t.name + "': weight must be >= 0");
    if (!(t.scale > 0.0)) throw ConfigError("term '" + t.name + "': scale must be > 0");
    if (!t.feature_weights.empty() && t.feature_weights.size() != t.features.size()) {
      throw ConfigError("term '" + t.name + "': feature_weights size mismatch");
    }
  }
}

ExpSetting exp_setting(std::string_view name) {
  if (name == "setting1") return {{0.2, 0.2, 0.2, 0.2, 0.2}, {1, 1, 1, 1, 1}};
  if (name == "setting2") return {{0.5, 0.1, 0.15, 0.1, 0.15}, {4, 10, 0.2, 1, 0.1}};
  if (name == "setting3") return {{0.5, 0.1, 0.15, 0.1, 0.15}, {0.2, 0.05, 3, 1.5, 8}};
  if (name == "setting4") return {{0.5, 0.1, 0.15, 0.1, 0.15}, {10, 0.04, 100, 7.5, 75}};
  if (name == "setting5") return {{0.2, 0.1, 0.2, 0.05, 0.45}, {0.25, 0.01, 5, 1, 10}};
  if (name == "default") return {{0.5, 0.1, 0.15, 0.1, 0.15}, {0.25, 0.01, 5, 1, 10}};
  throw ConfigError("unknown reward setting '" + std::string(name) + "'");
}

ExpRewardSpec exp_reward_preset(std::string_view setting,
                                const std::array<std::vector<std::string>, 5>& groups) {
  const ExpSetting s = exp_setting(setting);
  ExpRewardSpec spec;
  spec.name = std::string(setting);
  for (std::size_t i = 0; i < kExpTermNames.size(); ++i) {
    spec.terms.push_back({std::string(kExpTermNames[i]), s.weights[i], s.scales[i],
                          groups[i], {}});
  }
  return spec;
}

ExpRewardSpec pointmass_exp_preset(std::string_view setting) {
  return exp_reward_preset(setting,
                           {{{"pos_x", "pos_y"}, {}, {"vel_x", "vel_y"}, {}, {}}});
}

double exp_reward(const ExpRewardSpec& spec, const add::FeatureVector& agent,
                  const add::FeatureVector& ref) {
  const add::DifferentialVector delta = add::differential(ref, agent);
  double reward = 0.0;
  for (const auto& term : spec.terms) {
    double sq = 0.0;
    for (std::size_t k = 0; k < term.features.size(); ++k) {
      const double e = delta.values[find_label(agent, term.features[k])];
      const double fw = term.feature_weights.empty() ? 1.0 : term.feature_weights[k];
      sq += fw * e * e;
    }
    reward += term.weight * std::exp(-term.scale * sq);
  }
  return reward;
}

Sigmoid parse_sigmoid(std::string_view name) {
  if (name == "linear") return Sigmoid::kLinear;
  if (name == "gaussian") return Sigmoid::kGaussian;
  throw ConfigError("unknown sigmoid '" + std::string(name) + "'");
}

std::string_view to_string(Sigmoid sigmoid) {
  switch (sigmoid) {
    case Sigmoid::kLinear: return "linear";
    case Sigmoid::kGaussian: return "gaussian";
  }
  return "unknown";
}

void ToleranceSpec::validate() const {
  if (!upper_unbounded && !(lower <= upper)) {
    throw std::invalid_argument("tolerance bounds must satisfy lower <= upper");
  }
  if (!(margin > 0.0)) throw std::invalid_argument("tolerance margin must be > 0");
  if (!(value_at_margin > 0.0 && value_at_margin < 1.0)) {
    throw std::invalid_argument("tolerance value_at_margin must lie in (0, 1)");
  }
}

double tolerance(double x, const ToleranceSpec& spec) {
  const double hi = spec.upper_unbounded ? std::numeric_limits<double>::infinity()
                                         : spec.upper;
  if (x >= spec.lower && x <= hi) return 1.0;
  const double d = std::max(spec.lower - x, x - hi) / spec.margin;
  switch (spec.sigmoid) {
    case Sigmoid::kLinear: {
      const double s = (1.0 - spec.value_at_margin) * d;
      return std::abs(s) < 1.0 ? 1.0 - s : 0.0;
    }
    case Sigmoid::kGaussian:
      return std::exp(-std::log(1.0 / spec.value_at_margin) * d * d);
  }
  return 0.0;
}

WalkerRewardSpec WalkerRewardSpec::standard() {
  WalkerRewardSpec s;
  s.height = {1.2, 0.0, true, 0.6, 0.1, Sigmoid::kGaussian};
  s.move = {8.0, 0.0, true, 4.0, 0.5, Sigmoid::kLinear};
  return s;
}

WalkerRewardSpec WalkerRewardSpec::for_targets(double height_target, double speed_target) {
  WalkerRewardSpec s = standard();
  s.height.margin *= height_target / s.height.lower;
  s.height.lower = height_target;
  s.move.margin *= speed_target / s.move.lower;
  s.move.lower = speed_target;
  s.height.validate();
  s.move.validate();
  return s;
}

double walker_manual_reward(double h, double u, double v, const WalkerRewardSpec& spec) {
  const double stand = (3.0 * tolerance(h, spec.height) + (1.0 + u) / 2.0) / 4.0;
  const double move = tolerance(v, spec.move);
  return stand * (5.0 * move + 1.0) / 6.0;
}

double steering_reward(std::span<const double> velocity, const SteeringSpec& spec) {
  const auto e = steering_errors(velocity, spec);
  return std::exp(-2.0 * (e[0] * e[0] + 0.1 * e[1] * e[1]));
}

double mixed_task_reward(double tracking_reward, std::span<const double> velocity,
                         const SteeringSpec& spec) {
  return 0.5 * tracking_reward + 0.5 * steering_reward(velocity, spec);
}

nlohmann::json to_json(const ExpRewardSpec& spec) {
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& t : spec.terms) {
    terms.push_back({{"name", t.name},
                     {"weight", t.weight},
                     {"scale", t.scale},
                     {"features", t.features},
                     {"feature_weights", t.feature_weights}});
  }
  return {{"name", spec.name}, {"terms", terms}};
}

ExpRewardSpec exp_spec_from_json(const nlohmann::json& j) {
  ExpRewardSpec spec;
  spec.name = j.value("name", "custom");
  for (const auto& t : j.at("terms")) {
    ExpTerm term;
    term.name = t.at("name").get<std::string>();
    term.weight = t.at("weight").get<double>();
    term.scale = t.at("scale").get<double>();
    term.features = t.value("features", std::vector<std::string>{});
    term.feature_weights = t.value("feature_weights", std::vector<double>{});
    spec.terms.push_back(std::move(term));
  }
  spec.validate();
  return spec;
}

}  // namespace advdiff::baselines

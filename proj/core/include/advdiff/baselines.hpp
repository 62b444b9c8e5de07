#ifndef ADVDIFF_BASELINES_HPP_
#define ADVDIFF_BASELINES_HPP_

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "advdiff/add_core.hpp"
#include "advdiff/steering.hpp"

namespace advdiff::baselines {

// One exponentiated-error term: weight * exp(-scale * sum_k fw_k * e_k^2),
// where e_k = ref - agent over the term's feature labels.
struct ExpTerm {
  std::string name;
  double weight = 0.0;
  double scale = 1.0;
  std::vector<std::string> features;     // empty group: error 0, term = weight
  std::vector<double> feature_weights;   // empty means all 1
};

struct ExpRewardSpec {
  std::string name;
  std::vector<ExpTerm> terms;

  double total_weight() const;
  // weights >= 0, scales > 0, feature_weights sized to features when given.
  void validate() const;
};

// Term names of the five-term tracking reward, in table order.
inline constexpr std::array<std::string_view, 5> kExpTermNames = {"p", "jv", "rv", "e",
                                                                   "c"};
// Setting names of the weight-sensitivity grid, in table order.
inline constexpr std::array<std::string_view, 6> kExpSettingNames = {
    "setting1", "setting2", "setting3", "setting4", "setting5", "default"};

struct ExpSetting {
  std::array<double, 5> weights;
  std::array<double, 5> scales;
};

ExpSetting exp_setting(std::string_view name);

// Builds a spec for `setting` with each term's features taken from `groups`
// (aligned with kExpTermNames).
ExpRewardSpec exp_reward_preset(std::string_view setting,
                                const std::array<std::vector<std::string>, 5>& groups);

// Point-mass grouping: position -> p, velocity -> rv, the rest empty.
ExpRewardSpec pointmass_exp_preset(std::string_view setting);

// sum_i w_i exp(-a_i |error_i|^2). Throws std::invalid_argument if a term
// names a feature that the vectors do not carry.
double exp_reward(const ExpRewardSpec& spec, const add::FeatureVector& agent,
                  const add::FeatureVector& ref);

enum class Sigmoid { kLinear, kGaussian };

Sigmoid parse_sigmoid(std::string_view name);
std::string_view to_string(Sigmoid sigmoid);

struct ToleranceSpec {
  double lower = 0.0;
  double upper = 0.0;
  bool upper_unbounded = false;
  double margin = 1.0;
  double value_at_margin = 0.1;
  Sigmoid sigmoid = Sigmoid::kGaussian;

  void validate() const;
};

double tolerance(double x, const ToleranceSpec& spec);

// Composite hand-designed reward for the (height, uprightness, speed) task.
struct WalkerRewardSpec {
  ToleranceSpec height;  // one-sided: h >= target
  ToleranceSpec move;    // one-sided: v >= target

  // Walker preset: height tol(h; 1.2, inf, 0.1, 0.6, gaussian), move tol(v;
  // 8.0, inf, 0.5, 4.0, linear).
  static WalkerRewardSpec standard();
  // Same shape with targets moved to (h*, v*) and margins scaled by the same
  // ratios.
  static WalkerRewardSpec for_targets(double height_target, double speed_target);
};

// r_stand * (5 r_move + 1) / 6 with r_stand = (3 tol_h + (1 + u) / 2) / 4.
double walker_manual_reward(double h, double u, double v,
                            const WalkerRewardSpec& spec = WalkerRewardSpec::standard());

// exp(-2 ((v* - v.d*)^2 + 0.1 |v_perp|^2)).
double steering_reward(std::span<const double> velocity, const SteeringSpec& spec);

// 0.5 r_track + 0.5 steering_reward.
double mixed_task_reward(double tracking_reward, std::span<const double> velocity,
                         const SteeringSpec& spec);

nlohmann::json to_json(const ExpRewardSpec& spec);
ExpRewardSpec exp_spec_from_json(const nlohmann::json& j);

}  // namespace advdiff::baselines

#endif  // ADVDIFF_BASELINES_HPP_

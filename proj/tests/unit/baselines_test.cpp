#include "advdiff/baselines.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "advdiff/error.hpp"

namespace advdiff::baselines {
namespace {

add::FeatureVector pm(double px, double py, double vx, double vy) {
  return {{px, py, vx, vy}, {"pos_x", "pos_y", "vel_x", "vel_y"}, {}};
}

ExpRewardSpec single_term(double weight, double scale) {
  return {"single", {{"p", weight, scale, {"pos_x", "pos_y"}, {}}}};
}

TEST(ExpReward, ZeroErrorGivesTotalWeight) {
  for (std::string_view name : kExpSettingNames) {
    const auto spec = pointmass_exp_preset(name);
    const auto f = pm(0.3, -0.2, 1.0, 0.5);
    EXPECT_NEAR(exp_reward(spec, f, f), spec.total_weight(), 1e-12) << name;
  }
}

TEST(ExpReward, HumanoidWeightsSumToOne) {
  const auto spec = pointmass_exp_preset("default");
  const auto f = pm(0.0, 0.0, 0.0, 0.0);
  EXPECT_NEAR(exp_reward(spec, f, f), 1.0, 1e-12);
}

TEST(ExpReward, LogTwoErrorHalvesTheTerm) {
  const double e = std::sqrt(std::log(2.0));
  EXPECT_NEAR(exp_reward(single_term(1.0, 1.0), pm(e, 0, 0, 0), pm(0, 0, 0, 0)), 0.5, 1e-12);
}

TEST(ExpReward, FeatureWeightsScaleTheSquaredError) {
  ExpRewardSpec spec = single_term(1.0, 1.0);
  spec.terms[0].feature_weights = {2.0, 0.0};
  EXPECT_NEAR(exp_reward(spec, pm(1.0, 5.0, 0, 0), pm(0, 0, 0, 0)), std::exp(-2.0), 1e-12);
}

TEST(ExpReward, StrictlyDecreasingInErrorNorm) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const auto spec = pointmass_exp_preset("default");
  const auto ref = pm(0, 0, 0, 0);
  for (int i = 0; i < 500; ++i) {
    const double px = u(rng), py = u(rng), vx = u(rng), vy = u(rng);
    const double s = 1.0 + std::abs(u(rng));
    // Scaling the position error up with velocity fixed lowers the reward.
    EXPECT_GT(exp_reward(spec, pm(px, py, vx, vy), ref),
              exp_reward(spec, pm(s * px, s * py, vx, vy), ref));
    EXPECT_GT(exp_reward(spec, pm(px, py, vx, vy), ref),
              exp_reward(spec, pm(px, py, s * vx, s * vy), ref));
  }
}

TEST(ExpReward, WithinUnitRangeForUnitWeights) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  for (std::string_view name : kExpSettingNames) {
    const auto spec = pointmass_exp_preset(name);
    for (int i = 0; i < 100; ++i) {
      const double r = exp_reward(spec, pm(u(rng), u(rng), u(rng), u(rng)), pm(0, 0, 0, 0));
      EXPECT_GE(r, 0.0);
      EXPECT_LE(r, 1.0 + 1e-12);
    }
  }
}

TEST(ExpReward, MissingFeatureThrows) {
  ExpRewardSpec spec = single_term(1.0, 1.0);
  spec.terms[0].features = {"rot_z"};
  EXPECT_THROW(exp_reward(spec, pm(0, 0, 0, 0), pm(0, 0, 0, 0)), std::invalid_argument);
}

TEST(ExpReward, ValidateRejectsBadSpecs) {
  EXPECT_THROW(single_term(-0.1, 1.0).validate(), ConfigError);
  EXPECT_THROW(single_term(1.0, 0.0).validate(), ConfigError);
  ExpRewardSpec spec = single_term(1.0, 1.0);
  spec.terms[0].feature_weights = {1.0};
  EXPECT_THROW(spec.validate(), ConfigError);
}

TEST(ExpReward, SettingsAreDistinctOnAProbeState) {
  const auto probe = pm(0.4, -0.3, 0.8, 0.2);
  const auto ref = pm(0, 0, 0, 0);
  std::set<double> values;
  for (std::string_view name : kExpSettingNames) {
    values.insert(exp_reward(pointmass_exp_preset(name), probe, ref));
  }
  EXPECT_EQ(values.size(), kExpSettingNames.size());
}

TEST(ExpReward, UnknownSettingThrows) {
  EXPECT_THROW(exp_setting("setting9"), ConfigError);
}

TEST(ExpReward, JsonRoundTrip) {
  ExpRewardSpec spec = pointmass_exp_preset("setting4");
  spec.terms[0].feature_weights = {0.5, 2.0};
  const auto back = exp_spec_from_json(to_json(spec));
  ASSERT_EQ(back.terms.size(), spec.terms.size());
  for (std::size_t i = 0; i < spec.terms.size(); ++i) {
    EXPECT_EQ(back.terms[i].name, spec.terms[i].name);
    EXPECT_EQ(back.terms[i].weight, spec.terms[i].weight);
    EXPECT_EQ(back.terms[i].scale, spec.terms[i].scale);
    EXPECT_EQ(back.terms[i].features, spec.terms[i].features);
    EXPECT_EQ(back.terms[i].feature_weights, spec.terms[i].feature_weights);
  }
}

ToleranceSpec bounded(double lo, double hi, double margin, double vm, Sigmoid s) {
  return {lo, hi, false, margin, vm, s};
}

TEST(Tolerance, InsideBoundsIsOne) {
  const auto spec = bounded(1.0, 2.0, 0.5, 0.1, Sigmoid::kGaussian);
  for (double x : {1.0, 1.5, 2.0}) EXPECT_EQ(tolerance(x, spec), 1.0);
  ToleranceSpec open{1.2, 0.0, true, 0.6, 0.1, Sigmoid::kGaussian};
  EXPECT_EQ(tolerance(1e6, open), 1.0);
}

TEST(Tolerance, GaussianAtOneMarginIsValueAtMargin) {
  const auto spec = bounded(1.0, 2.0, 0.5, 0.1, Sigmoid::kGaussian);
  EXPECT_NEAR(tolerance(0.5, spec), 0.1, 1e-12);
  EXPECT_NEAR(tolerance(2.5, spec), 0.1, 1e-12);
}

TEST(Tolerance, LinearLeavesSupportAtTwoMargins) {
  const auto spec = bounded(0.0, 1.0, 1.0, 0.5, Sigmoid::kLinear);
  EXPECT_EQ(tolerance(3.0, spec), 0.0);
  EXPECT_EQ(tolerance(-2.0, spec), 0.0);
  EXPECT_NEAR(tolerance(2.0, spec), 0.5, 1e-12);
  EXPECT_NEAR(tolerance(1.5, spec), 0.75, 1e-12);
}

TEST(Tolerance, ContinuousAtTheBounds) {
  for (Sigmoid s : {Sigmoid::kLinear, Sigmoid::kGaussian}) {
    const auto spec = bounded(1.0, 2.0, 0.5, 0.2, s);
    EXPECT_NEAR(tolerance(1.0 - 1e-9, spec), 1.0, 1e-8);
    EXPECT_NEAR(tolerance(2.0 + 1e-9, spec), 1.0, 1e-8);
  }
}

TEST(Tolerance, InUnitInterval) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  for (Sigmoid s : {Sigmoid::kLinear, Sigmoid::kGaussian}) {
    const auto spec = bounded(-1.0, 1.0, 2.0, 0.3, s);
    for (int i = 0; i < 500; ++i) {
      const double t = tolerance(u(rng), spec);
      EXPECT_GE(t, 0.0);
      EXPECT_LE(t, 1.0);
    }
  }
}

TEST(Tolerance, ValidateRejectsBadSpecs) {
  EXPECT_THROW(bounded(2.0, 1.0, 1.0, 0.1, Sigmoid::kLinear).validate(), std::invalid_argument);
  EXPECT_THROW(bounded(0.0, 1.0, 0.0, 0.1, Sigmoid::kLinear).validate(), std::invalid_argument);
  EXPECT_THROW(bounded(0.0, 1.0, 1.0, 1.0, Sigmoid::kLinear).validate(), std::invalid_argument);
  EXPECT_EQ(parse_sigmoid("gaussian"), Sigmoid::kGaussian);
  EXPECT_THROW(parse_sigmoid("logistic"), ConfigError);
}

TEST(Walker, SaturatedTargetsGiveOne) {
  EXPECT_NEAR(walker_manual_reward(1.2, 1.0, 8.0), 1.0, 1e-12);
  EXPECT_NEAR(walker_manual_reward(3.0, 1.0, 20.0), 1.0, 1e-12);
}

TEST(Walker, NoMovementGivesOneSixth) {
  EXPECT_NEAR(walker_manual_reward(1.2, 1.0, 0.0), 1.0 / 6.0, 1e-12);
}

TEST(Walker, MatchesIndependentEvaluation) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> h(0.0, 2.0), u(-1.0, 1.0), v(0.0, 12.0);
  for (int i = 0; i < 500; ++i) {
    const double hh = h(rng), uu = u(rng), vv = v(rng);
    const double dh = std::max(1.2 - hh, 0.0) / 0.6;
    const double tol_h = std::exp(-std::log(10.0) * dh * dh);
    const double dv = std::max(8.0 - vv, 0.0) / 4.0;
    const double tol_v = 0.5 * dv < 1.0 ? 1.0 - 0.5 * dv : 0.0;
    const double stand = (3.0 * tol_h + (1.0 + uu) / 2.0) / 4.0;
    EXPECT_NEAR(walker_manual_reward(hh, uu, vv), stand * (5.0 * tol_v + 1.0) / 6.0, 1e-12);
  }
}

TEST(Walker, ForTargetsMovesBoundsAndMargins) {
  const auto s = WalkerRewardSpec::for_targets(1.0, 1.0);
  EXPECT_DOUBLE_EQ(s.height.lower, 1.0);
  EXPECT_DOUBLE_EQ(s.height.margin, 0.5);
  EXPECT_DOUBLE_EQ(s.move.lower, 1.0);
  EXPECT_DOUBLE_EQ(s.move.margin, 0.5);
  EXPECT_NEAR(walker_manual_reward(1.0, 1.0, 1.0, s), 1.0, 1e-12);
  EXPECT_NEAR(walker_manual_reward(1.0, 1.0, 0.0, s), 1.0 / 6.0, 1e-12);
}

TEST(Steering, OnTargetRewardIsOne) {
  SteeringSpec spec;
  spec.direction = {0.0, 1.0};
  spec.speed = 1.3;
  const std::vector<double> v{0.0, 1.3};
  EXPECT_NEAR(steering_reward(v, spec), 1.0, 1e-15);
  EXPECT_NEAR(mixed_task_reward(0.4, v, spec), 0.7, 1e-15);
  EXPECT_NEAR(mixed_task_reward(1.0, v, spec), 1.0, 1e-15);
}

TEST(Steering, MatchesIndependentEvaluation) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-2.0, 2.0), unit(0.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    const double angle = 3.0 * u(rng);
    SteeringSpec spec;
    spec.direction = {std::cos(angle), std::sin(angle)};
    spec.speed = 0.5 + unit(rng);
    const std::vector<double> v{u(rng), u(rng)};
    const double along = v[0] * spec.direction[0] + v[1] * spec.direction[1];
    const double lat = std::hypot(v[0] - along * spec.direction[0],
                                  v[1] - along * spec.direction[1]);
    const double rg =
        std::exp(-2.0 * ((spec.speed - along) * (spec.speed - along) + 0.1 * lat * lat));
    const double track = unit(rng);
    EXPECT_NEAR(mixed_task_reward(track, v, spec), 0.5 * track + 0.5 * rg, 1e-12);
  }
}

}  // namespace
}  // namespace advdiff::baselines

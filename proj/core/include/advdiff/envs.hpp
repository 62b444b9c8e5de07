#ifndef ADVDIFF_ENVS_HPP_
#define ADVDIFF_ENVS_HPP_

#include <cstddef>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "advdiff/add_core.hpp"
#include "advdiff/baselines.hpp"
#include "advdiff/rl.hpp"
#include "advdiff/steering.hpp"

namespace advdiff::envs {

enum class ReferenceKind { kCircle, kLissajous, kSine };

ReferenceKind parse_reference_kind(std::string_view name);
std::string_view to_string(ReferenceKind kind);

struct ReferenceState {
  Vec2 position{};
  Vec2 velocity{};
};

// Periodic planar trajectory with analytic velocity; theta = 2 pi phase.
//   circle     A (cos theta, sin theta)
//   lissajous  A (sin theta, sin 2 theta)
//   sine       A (sin theta, 0)
class Reference {
 public:
  Reference() = default;
  Reference(ReferenceKind kind, double period, double amplitude);

  ReferenceKind kind() const noexcept { return kind_; }
  double period() const noexcept { return period_; }
  double amplitude() const noexcept { return amplitude_; }

  ReferenceState at_phase(double phase) const;

  // Header phase,pos_x,pos_y,vel_x,vel_y and `samples` rows over one period.
  void write_csv(std::ostream& out, std::size_t samples) const;

 private:
  ReferenceKind kind_ = ReferenceKind::kCircle;
  double period_ = 5.0;
  double amplitude_ = 1.0;
};

Reference make_reference(ReferenceKind kind, double period, double amplitude);

struct PointMassState {
  Vec2 position{};
  Vec2 velocity{};
};

// v' = v + a dt, p' = p + v' dt with each acceleration component clamped to
// [-a_max, a_max].
PointMassState integrate(const PointMassState& s, std::span<const double> accel, double dt,
                         double a_max);

// Labels pos_x, pos_y, vel_x, vel_y.
add::FeatureVector pointmass_features(const Vec2& position, const Vec2& velocity);

struct PointMassConfig {
  double dt = 0.05;
  double a_max = 5.0;
  ReferenceKind reference = ReferenceKind::kCircle;
  double period = 5.0;
  double amplitude = 1.0;
  double init_noise = 0.0;     // stddev of the position/velocity offset at reset
  double arena_radius = 10.0;  // failure once |p| exceeds this
  baselines::ExpRewardSpec exp_reward = baselines::pointmass_exp_preset("default");
};

// Tracks a reference trajectory. The action is the commanded acceleration.
// Observation: [r_p - p, r_v - v, r_p, r_v] with r taken one step ahead.
// Differential: reference minus agent position and velocity after the step.
class PointMassEnv final : public rl::Environment {
 public:
  explicit PointMassEnv(PointMassConfig config = {});

  std::size_t observation_size() const override { return 8; }
  std::size_t action_size() const override { return 2; }
  std::vector<std::string> delta_labels() const override;
  std::vector<std::string> metric_names() const override;
  std::vector<double> reset(Rng& rng) override;
  rl::StepResult step(std::span<const double> action) override;
  std::unique_ptr<rl::Environment> clone() const override;

  const PointMassConfig& config() const noexcept { return cfg_; }
  const Reference& reference() const noexcept { return ref_; }
  const PointMassState& state() const noexcept { return state_; }
  double phase() const noexcept { return phase_; }
  void set_state(const PointMassState& state, double phase);

  add::FeatureVector features() const;
  add::FeatureVector reference_features() const;  // at the current phase
  std::vector<double> observation() const;
  double next_phase() const;

 private:
  PointMassConfig cfg_;
  Reference ref_;
  PointMassState state_;
  double phase_ = 0.0;
};

// Feedforward command that lands exactly on the next reference position.
std::vector<double> oracle_action(const PointMassEnv& env);

// Root and joint positions of a pose; joints may be empty.
struct Pose {
  std::vector<double> root;
  std::vector<std::vector<double>> joints;
};

// (sum_j |(x^_j - x^_root) - (x_j - x_root)| + |x^_root - x_root|) / (J + 1).
double position_tracking_error(const Pose& agent, const Pose& ref);

struct TriObjectiveTargets {
  double height = 1.0;
  double uprightness = 1.0;
  double speed = 1.0;
};

// h = |p|, u = cosine between v and the counter-clockwise tangent at p,
// speed = |v|.
struct TriObjectiveState {
  double height = 0.0;
  double uprightness = 0.0;
  double speed = 0.0;
};

TriObjectiveState tri_objective_state(const Vec2& position, const Vec2& velocity);

// [h* - h, u* - u, v* - v] labelled height, uprightness, speed.
add::DifferentialVector tri_objective_delta(const TriObjectiveState& s,
                                            const TriObjectiveTargets& targets);

struct TriObjectiveConfig {
  double dt = 0.05;
  double a_max = 5.0;
  TriObjectiveTargets targets;
  double init_radius = 1.5;  // reset positions uniform in this disc
  double init_speed = 0.5;   // reset velocity components uniform in +-init_speed
  double arena_radius = 10.0;
  baselines::WalkerRewardSpec manual = baselines::WalkerRewardSpec::for_targets(1.0, 1.0);
};

// Observation: [p, v, delta].
class TriObjectiveEnv final : public rl::Environment {
 public:
  explicit TriObjectiveEnv(TriObjectiveConfig config = {});

  std::size_t observation_size() const override { return 7; }
  std::size_t action_size() const override { return 2; }
  std::vector<std::string> delta_labels() const override;
  std::vector<std::string> metric_names() const override;
  std::vector<double> reset(Rng& rng) override;
  rl::StepResult step(std::span<const double> action) override;
  std::unique_ptr<rl::Environment> clone() const override;

  const PointMassState& state() const noexcept { return state_; }
  void set_state(const PointMassState& state) { state_ = state; }

 private:
  std::vector<double> observation() const;

  TriObjectiveConfig cfg_;
  PointMassState state_;
};

// Appends (v* - v.d*, -|v - (v.d*)d*|) labelled steer_speed, steer_lateral.
add::DifferentialVector steering_augment(const add::DifferentialVector& delta,
                                         std::span<const double> velocity,
                                         const SteeringSpec& spec);

struct SteeringConfig {
  double dt = 0.05;
  double a_max = 5.0;
  double lateral_amplitude = 0.2;  // m
  double lateral_period = 2.5;     // s
  SteeringSpec steering;
  double amplification = 50.0;
  double arena_radius = 50.0;  // distance from the reference
  baselines::ExpRewardSpec exp_reward = baselines::pointmass_exp_preset("default");
};

// Reference: a base point moving at v* d* plus a lateral oscillation along the
// normal of d*. d* and v* are drawn at reset and every resample_steps steps.
// Observation: [r_p - p, r_v - v, v, d*, v*, sin, cos] with r one step ahead.
class SteeringEnv final : public rl::Environment {
 public:
  explicit SteeringEnv(SteeringConfig config = {});

  std::size_t observation_size() const override { return 11; }
  std::size_t action_size() const override { return 2; }
  std::vector<std::string> delta_labels() const override;
  std::vector<double> delta_amplification() const override;
  std::vector<std::string> metric_names() const override;
  std::vector<double> reset(Rng& rng) override;
  rl::StepResult step(std::span<const double> action) override;
  std::unique_ptr<rl::Environment> clone() const override;

  const SteeringSpec& target() const noexcept { return spec_; }
  const PointMassState& state() const noexcept { return state_; }
  ReferenceState reference_at(const Vec2& base, double phase) const;

 private:
  void sample_target();
  std::vector<double> observation() const;

  SteeringConfig cfg_;
  SteeringSpec spec_;
  PointMassState state_;
  Vec2 base_{};
  double phase_ = 0.0;
  std::size_t steps_ = 0;
  Rng rng_;
};

}  // namespace advdiff::envs

#endif  // ADVDIFF_ENVS_HPP_

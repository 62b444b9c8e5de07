#include "advdiff/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "advdiff/error.hpp"

namespace advdiff::envs {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap_phase(double phase) {
  double p = std::fmod(phase, 1.0);
  if (p < 0.0) p += 1.0;
  return p;
}

double norm(const Vec2& v) { return std::hypot(v[0], v[1]); }

Vec2 sub(const Vec2& a, const Vec2& b) { return {a[0] - b[0], a[1] - b[1]}; }

void check_action(std::span<const double> action) {
  if (action.size() != 2) throw ShapeError("point-mass action must have 2 entries");
  for (double a : action) {
    if (!std::isfinite(a)) throw NumericError("non-finite action");
  }
}

void check_dynamics(double dt, double a_max) {
  if (!(dt > 0.0)) throw ConfigError("dt must be > 0");
  if (!(a_max > 0.0)) throw ConfigError("a_max must be > 0");
}

}  // namespace

ReferenceKind parse_reference_kind(std::string_view name) {
  if (name == "circle") return ReferenceKind::kCircle;
  if (name == "lissajous") return ReferenceKind::kLissajous;
  if (name == "sine") return ReferenceKind::kSine;
  throw ConfigError("unknown reference kind '" + std::string(name) + "'");
}

std::string_view to_string(ReferenceKind kind) {
  switch (kind) {
    case ReferenceKind::kCircle: return "circle";
    case ReferenceKind::kLissajous: return "lissajous";
    case ReferenceKind::kSine: return "sine";
  }
  return "unknown";
}

Reference::Reference(ReferenceKind kind, double period, double amplitude)
    : kind_(kind), period_(period), amplitude_(amplitude) {
  if (!(period > 0.0) || !std::isfinite(period)) {
    throw std::invalid_argument("reference period must be > 0");
  }
  if (!(amplitude >= 0.0) || !std::isfinite(amplitude)) {
    throw std::invalid_argument("reference amplitude must be >= 0");
  }
}

ReferenceState Reference::at_phase(double phase) const {
  const double theta = kTwoPi * wrap_phase(phase);
  const double a = amplitude_;
  const double w = kTwoPi / period_;
  ReferenceState s;
  switch (kind_) {
    case ReferenceKind::kCircle:
      s.position = {a * std::cos(theta), a * std::sin(theta)};
      s.velocity = {-a * w * std::sin(theta), a * w * std::cos(theta)};
      break;
    case ReferenceKind::kLissajous:
      s.position = {a * std::sin(theta), a * std::sin(2.0 * theta)};
      s.velocity = {a * w * std::cos(theta), 2.0 * a * w * std::cos(2.0 * theta)};
      break;
    case ReferenceKind::kSine:
      s.position = {a * std::sin(theta), 0.0};
      s.velocity = {a * w * std::cos(theta), 0.0};
      break;
  }
  return s;
}

void Reference::write_csv(std::ostream& out, std::size_t samples) const {
  out << "phase,pos_x,pos_y,vel_x,vel_y\n";
  out.precision(17);
  for (std::size_t i = 0; i < samples; ++i) {
    const double phase = static_cast<double>(i) / static_cast<double>(samples);
    const ReferenceState s = at_phase(phase);
    out << phase << ',' << s.position[0] << ',' << s.position[1] << ',' << s.velocity[0]
        << ',' << s.velocity[1] << '\n';
  }
}

Reference make_reference(ReferenceKind kind, double period, double amplitude) {
  return Reference(kind, period, amplitude);
}

PointMassState integrate(const PointMassState& s, std::span<const double> accel, double dt,
                         double a_max) {
  check_action(accel);
  PointMassState out;
  for (std::size_t k = 0; k < 2; ++k) {
    const double a = std::clamp(accel[k], -a_max, a_max);
    out.velocity[k] = s.velocity[k] + a * dt;
    out.position[k] = s.position[k] + out.velocity[k] * dt;
  }
  return out;
}

add::FeatureVector pointmass_features(const Vec2& position, const Vec2& velocity) {
  return {{position[0], position[1], velocity[0], velocity[1]},
          {"pos_x", "pos_y", "vel_x", "vel_y"},
          {}};
}

PointMassEnv::PointMassEnv(PointMassConfig config)
    : cfg_(std::move(config)), ref_(cfg_.reference, cfg_.period, cfg_.amplitude) {
  check_dynamics(cfg_.dt, cfg_.a_max);
  if (!(cfg_.init_noise >= 0.0)) throw ConfigError("init_noise must be >= 0");
  cfg_.exp_reward.validate();
  const ReferenceState r = ref_.at_phase(0.0);
  state_ = {r.position, r.velocity};
}

std::vector<std::string> PointMassEnv::delta_labels() const {
  return {"pos_x", "pos_y", "vel_x", "vel_y"};
}

std::vector<std::string> PointMassEnv::metric_names() const {
  return {"tracking_error", "velocity_error"};
}

void PointMassEnv::set_state(const PointMassState& state, double phase) {
  state_ = state;
  phase_ = wrap_phase(phase);
}

double PointMassEnv::next_phase() const { return wrap_phase(phase_ + cfg_.dt / cfg_.period); }

add::FeatureVector PointMassEnv::features() const {
  return pointmass_features(state_.position, state_.velocity);
}

add::FeatureVector PointMassEnv::reference_features() const {
  const ReferenceState r = ref_.at_phase(phase_);
  return pointmass_features(r.position, r.velocity);
}

std::vector<double> PointMassEnv::observation() const {
  const ReferenceState r = ref_.at_phase(next_phase());
  const Vec2 dp = sub(r.position, state_.position);
  const Vec2 dv = sub(r.velocity, state_.velocity);
  return {dp[0], dp[1], dv[0], dv[1], r.position[0], r.position[1], r.velocity[0],
          r.velocity[1]};
}

std::vector<double> PointMassEnv::reset(Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  phase_ = unit(rng);
  const ReferenceState r = ref_.at_phase(phase_);
  state_ = {r.position, r.velocity};
  if (cfg_.init_noise > 0.0) {
    std::normal_distribution<double> noise(0.0, cfg_.init_noise);
    for (std::size_t k = 0; k < 2; ++k) {
      state_.position[k] += noise(rng);
      state_.velocity[k] += noise(rng);
    }
  }
  return observation();
}

rl::StepResult PointMassEnv::step(std::span<const double> action) {
  state_ = integrate(state_, action, cfg_.dt, cfg_.a_max);
  phase_ = next_phase();
  const add::FeatureVector agent = features();
  const add::FeatureVector ref = reference_features();
  rl::StepResult out;
  out.delta = add::differential(ref, agent).values;
  out.manual_reward = baselines::exp_reward(cfg_.exp_reward, agent, ref);
  out.metrics = {std::hypot(out.delta[0], out.delta[1]), std::hypot(out.delta[2], out.delta[3])};
  out.failed = norm(state_.position) > cfg_.arena_radius;
  out.observation = observation();
  return out;
}

std::unique_ptr<rl::Environment> PointMassEnv::clone() const {
  return std::make_unique<PointMassEnv>(*this);
}

std::vector<double> oracle_action(const PointMassEnv& env) {
  const double dt = env.config().dt;
  const ReferenceState r = env.reference().at_phase(env.next_phase());
  const PointMassState& s = env.state();
  std::vector<double> a(2);
  for (std::size_t k = 0; k < 2; ++k) {
    a[k] = ((r.position[k] - s.position[k]) / dt - s.velocity[k]) / dt;
  }
  return a;
}

double position_tracking_error(const Pose& agent, const Pose& ref) {
  if (agent.root.size() != ref.root.size() || agent.joints.size() != ref.joints.size()) {
    throw ShapeError("position_tracking_error: pose structures differ");
  }
  const std::size_t dim = agent.root.size();
  double root_err = 0.0;
  for (std::size_t k = 0; k < dim; ++k) {
    const double d = ref.root[k] - agent.root[k];
    root_err += d * d;
  }
  double total = std::sqrt(root_err);
  for (std::size_t j = 0; j < agent.joints.size(); ++j) {
    if (agent.joints[j].size() != dim || ref.joints[j].size() != dim) {
      throw ShapeError("position_tracking_error: joint dimension differs from root");
    }
    double e = 0.0;
    for (std::size_t k = 0; k < dim; ++k) {
      const double d = (ref.joints[j][k] - ref.root[k]) - (agent.joints[j][k] - agent.root[k]);
      e += d * d;
    }
    total += std::sqrt(e);
  }
  return total / static_cast<double>(agent.joints.size() + 1);
}

TriObjectiveState tri_objective_state(const Vec2& position, const Vec2& velocity) {
  TriObjectiveState s;
  s.height = norm(position);
  s.speed = norm(velocity);
  if (s.height > 1e-9 && s.speed > 1e-9) {
    const double tx = -position[1] / s.height;
    const double ty = position[0] / s.height;
    s.uprightness = (velocity[0] * tx + velocity[1] * ty) / s.speed;
  }
  return s;
}

add::DifferentialVector tri_objective_delta(const TriObjectiveState& s,
                                            const TriObjectiveTargets& targets) {
  return {{targets.height - s.height, targets.uprightness - s.uprightness,
           targets.speed - s.speed},
          {"height", "uprightness", "speed"}};
}

TriObjectiveEnv::TriObjectiveEnv(TriObjectiveConfig config) : cfg_(std::move(config)) {
  check_dynamics(cfg_.dt, cfg_.a_max);
  if (!(cfg_.init_radius >= 0.0) || !(cfg_.init_speed >= 0.0)) {
    throw ConfigError("init_radius and init_speed must be >= 0");
  }
  cfg_.manual.height.validate();
  cfg_.manual.move.validate();
}

std::vector<std::string> TriObjectiveEnv::delta_labels() const {
  return {"height", "uprightness", "speed"};
}

std::vector<std::string> TriObjectiveEnv::metric_names() const {
  return {"height_error", "uprightness_error", "speed_error"};
}

std::vector<double> TriObjectiveEnv::observation() const {
  const auto d = tri_objective_delta(tri_objective_state(state_.position, state_.velocity),
                                     cfg_.targets);
  return {state_.position[0], state_.position[1], state_.velocity[0], state_.velocity[1],
          d.values[0], d.values[1], d.values[2]};
}

std::vector<double> TriObjectiveEnv::reset(Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double r = cfg_.init_radius * std::sqrt(unit(rng));
  const double theta = kTwoPi * unit(rng);
  state_.position = {r * std::cos(theta), r * std::sin(theta)};
  std::uniform_real_distribution<double> vel(-cfg_.init_speed, cfg_.init_speed);
  state_.velocity[0] = vel(rng);
  state_.velocity[1] = vel(rng);
  return observation();
}

rl::StepResult TriObjectiveEnv::step(std::span<const double> action) {
  state_ = integrate(state_, action, cfg_.dt, cfg_.a_max);
  const TriObjectiveState s = tri_objective_state(state_.position, state_.velocity);
  rl::StepResult out;
  out.delta = tri_objective_delta(s, cfg_.targets).values;
  out.manual_reward = baselines::walker_manual_reward(s.height, s.uprightness, s.speed,
                                                      cfg_.manual);
  out.metrics = {std::abs(out.delta[0]), std::abs(out.delta[1]), std::abs(out.delta[2])};
  out.failed = s.height > cfg_.arena_radius;
  out.observation = observation();
  return out;
}

std::unique_ptr<rl::Environment> TriObjectiveEnv::clone() const {
  return std::make_unique<TriObjectiveEnv>(*this);
}

add::DifferentialVector steering_augment(const add::DifferentialVector& delta,
                                         std::span<const double> velocity,
                                         const SteeringSpec& spec) {
  spec.validate();
  const auto e = steering_errors(velocity, spec);
  return add::concat(delta, {{e[0], e[1]}, {"steer_speed", "steer_lateral"}});
}

SteeringEnv::SteeringEnv(SteeringConfig config) : cfg_(std::move(config)) {
  check_dynamics(cfg_.dt, cfg_.a_max);
  cfg_.steering.validate();
  if (!(cfg_.lateral_period > 0.0) || !(cfg_.lateral_amplitude >= 0.0)) {
    throw ConfigError("invalid lateral oscillation parameters");
  }
  if (!(cfg_.amplification > 0.0)) throw ConfigError("amplification must be > 0");
  cfg_.exp_reward.validate();
  spec_ = cfg_.steering;
  const ReferenceState r = reference_at(base_, 0.0);
  state_ = {r.position, r.velocity};
}

std::vector<std::string> SteeringEnv::delta_labels() const {
  return {"pos_x", "pos_y", "vel_x", "vel_y", "steer_speed", "steer_lateral"};
}

std::vector<double> SteeringEnv::delta_amplification() const {
  return {1.0, 1.0, 1.0, 1.0, cfg_.amplification, cfg_.amplification};
}

std::vector<std::string> SteeringEnv::metric_names() const {
  return {"tracking_error", "target_velocity_error", "speed_error", "lateral_speed"};
}

ReferenceState SteeringEnv::reference_at(const Vec2& base, double phase) const {
  const Vec2& d = spec_.direction;
  const Vec2 n{-d[1], d[0]};
  const double theta = kTwoPi * wrap_phase(phase);
  const double a = cfg_.lateral_amplitude;
  const double w = kTwoPi / cfg_.lateral_period;
  ReferenceState r;
  for (std::size_t k = 0; k < 2; ++k) {
    r.position[k] = base[k] + a * std::sin(theta) * n[k];
    r.velocity[k] = spec_.speed * d[k] + a * w * std::cos(theta) * n[k];
  }
  return r;
}

void SteeringEnv::sample_target() {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double angle = kTwoPi * unit(rng_);
  spec_.direction = {std::cos(angle), std::sin(angle)};
  spec_.speed = cfg_.steering.min_speed +
                (cfg_.steering.max_speed - cfg_.steering.min_speed) * unit(rng_);
}

std::vector<double> SteeringEnv::observation() const {
  const Vec2 base_next{base_[0] + spec_.speed * spec_.direction[0] * cfg_.dt,
                       base_[1] + spec_.speed * spec_.direction[1] * cfg_.dt};
  const double phase_next = wrap_phase(phase_ + cfg_.dt / cfg_.lateral_period);
  const ReferenceState r = reference_at(base_next, phase_next);
  const Vec2 dp = sub(r.position, state_.position);
  const Vec2 dv = sub(r.velocity, state_.velocity);
  return {dp[0],
          dp[1],
          dv[0],
          dv[1],
          state_.velocity[0],
          state_.velocity[1],
          spec_.direction[0],
          spec_.direction[1],
          spec_.speed,
          std::sin(kTwoPi * phase_next),
          std::cos(kTwoPi * phase_next)};
}

std::vector<double> SteeringEnv::reset(Rng& rng) {
  rng_.seed(rng());
  sample_target();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  phase_ = unit(rng);
  base_ = {0.0, 0.0};
  steps_ = 0;
  const ReferenceState r = reference_at(base_, phase_);
  state_ = {r.position, r.velocity};
  return observation();
}

rl::StepResult SteeringEnv::step(std::span<const double> action) {
  state_ = integrate(state_, action, cfg_.dt, cfg_.a_max);
  for (std::size_t k = 0; k < 2; ++k) base_[k] += spec_.speed * spec_.direction[k] * cfg_.dt;
  phase_ = wrap_phase(phase_ + cfg_.dt / cfg_.lateral_period);
  ++steps_;

  const ReferenceState r = reference_at(base_, phase_);
  const add::FeatureVector agent = pointmass_features(state_.position, state_.velocity);
  const add::FeatureVector ref = pointmass_features(r.position, r.velocity);
  const add::DifferentialVector tracking = add::differential(ref, agent);
  const add::DifferentialVector full = steering_augment(tracking, state_.velocity, spec_);

  rl::StepResult out;
  out.delta = full.values;
  out.manual_reward = baselines::mixed_task_reward(
      baselines::exp_reward(cfg_.exp_reward, agent, ref), state_.velocity, spec_);
  const double tracking_error = std::hypot(tracking.values[0], tracking.values[1]);
  const Vec2 target{spec_.speed * spec_.direction[0], spec_.speed * spec_.direction[1]};
  out.metrics = {tracking_error, norm(sub(state_.velocity, target)),
                 std::abs(full.values[4]), std::abs(full.values[5])};
  out.failed = tracking_error > cfg_.arena_radius;
  if (cfg_.steering.resample_steps > 0 && steps_ % cfg_.steering.resample_steps == 0) {
    sample_target();
  }
  out.observation = observation();
  return out;
}

std::unique_ptr<rl::Environment> SteeringEnv::clone() const {
  return std::make_unique<SteeringEnv>(*this);
}

}  // namespace advdiff::envs

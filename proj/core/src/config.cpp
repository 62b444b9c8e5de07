#include "advdiff/config.hpp"

#include <fstream>
#include <set>

#include "advdiff/error.hpp"

namespace advdiff::config {
namespace {

using nlohmann::json;

// Reads the known keys of one JSON object and rejects everything else.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where(key) + ": " + e.what());
    }
  }

  // Enumerations stored by name.
  template <typename T, typename Parse>
  void get_named(const char* key, T& out, Parse parse) {
    std::string name;
    bool present = j_.contains(key);
    get(key, name);
    if (!present) return;
    try {
      out = parse(name);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(where(key) + ": " + e.what());
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string where(std::string_view key = {}) const {
    std::string p = path_.empty() ? "config" : path_;
    if (!key.empty()) p += "." + std::string(key);
    return p;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown key " + where(key));
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string, std::less<>> seen_;
};

json ppo_json(const rl::PpoConfig& p) {
  return {{"clip", p.clip},
          {"gamma", p.gamma},
          {"gae_lambda", p.gae_lambda},
          {"td_lambda", p.td_lambda},
          {"minibatch_size", p.minibatch_size},
          {"epochs", p.epochs},
          {"policy_lr", p.policy_lr},
          {"value_lr", p.value_lr},
          {"disc_lr", p.disc_lr},
          {"momentum", p.momentum},
          {"max_grad_norm", p.max_grad_norm},
          {"gp_mode", std::string(add::to_string(p.gp_mode))},
          {"lambda_gp", p.lambda_gp}};
}

void read_ppo(const json& j, const std::string& path, rl::PpoConfig& p) {
  ObjectReader r(j, path);
  r.get("clip", p.clip);
  r.get("gamma", p.gamma);
  r.get("gae_lambda", p.gae_lambda);
  r.get("td_lambda", p.td_lambda);
  r.get("minibatch_size", p.minibatch_size);
  r.get("epochs", p.epochs);
  r.get("policy_lr", p.policy_lr);
  r.get("value_lr", p.value_lr);
  r.get("disc_lr", p.disc_lr);
  r.get("momentum", p.momentum);
  r.get("max_grad_norm", p.max_grad_norm);
  r.get_named("gp_mode", p.gp_mode, add::parse_gp_mode);
  r.get("lambda_gp", p.lambda_gp);
  r.finish();
}

json regression_json(const regression::RegressionConfig& c) {
  return {{"points", c.points},
          {"x_max", c.x_max},
          {"generator_hidden", c.generator_hidden},
          {"disc_hidden", c.disc_hidden},
          {"activation", std::string(nets::to_string(c.activation))},
          {"disc_output_gain", c.disc_output_gain},
          {"steps", c.steps},
          {"disc_steps", c.disc_steps},
          {"lambda_gp", c.lambda_gp},
          {"generator_lr", c.generator_lr},
          {"disc_lr", c.disc_lr},
          {"optimizer", std::string(optim::to_string(c.optimizer))},
          {"gp_mode", std::string(add::to_string(c.gp_mode))},
          {"log_every", c.log_every},
          {"snapshot_every", c.snapshot_every}};
}

void read_regression(const json& j, const std::string& path,
                     regression::RegressionConfig& c) {
  ObjectReader r(j, path);
  r.get("points", c.points);
  r.get("x_max", c.x_max);
  r.get("generator_hidden", c.generator_hidden);
  r.get("disc_hidden", c.disc_hidden);
  r.get_named("activation", c.activation, nets::parse_activation);
  r.get("disc_output_gain", c.disc_output_gain);
  r.get("steps", c.steps);
  r.get("disc_steps", c.disc_steps);
  r.get("lambda_gp", c.lambda_gp);
  r.get("generator_lr", c.generator_lr);
  r.get("disc_lr", c.disc_lr);
  r.get_named("optimizer", c.optimizer, optim::parse_optimizer);
  r.get_named("gp_mode", c.gp_mode, add::parse_gp_mode);
  r.get("log_every", c.log_every);
  r.get("snapshot_every", c.snapshot_every);
  r.finish();
}

json nested_value(const json& root, std::string_view dotted, bool& found) {
  const json* node = &root;
  std::size_t start = 0;
  while (start <= dotted.size()) {
    const std::size_t dot = dotted.find('.', start);
    const std::string key(dotted.substr(start, dot == std::string_view::npos
                                                   ? std::string_view::npos
                                                   : dot - start));
    if (!node->is_object() || !node->contains(key)) {
      found = false;
      return {};
    }
    node = &node->at(key);
    if (dot == std::string_view::npos) break;
    start = dot + 1;
  }
  found = true;
  return *node;
}

}  // namespace

std::string_view to_string(TaskKind task) {
  switch (task) {
    case TaskKind::kRegression: return "regression";
    case TaskKind::kPointMassTrack: return "pointmass_track";
    case TaskKind::kTriObjective: return "tri_objective";
    case TaskKind::kSteering: return "steering";
  }
  return "unknown";
}

std::string_view to_string(RewardKind reward) {
  switch (reward) {
    case RewardKind::kAdd: return "add";
    case RewardKind::kExpManual: return "exp_manual";
    case RewardKind::kToleranceManual: return "tolerance_manual";
    case RewardKind::kMixed: return "mixed";
  }
  return "unknown";
}

TaskKind parse_task(std::string_view name) {
  for (TaskKind t : {TaskKind::kRegression, TaskKind::kPointMassTrack,
                     TaskKind::kTriObjective, TaskKind::kSteering}) {
    if (to_string(t) == name) return t;
  }
  throw ConfigError("unknown task '" + std::string(name) + "'");
}

RewardKind parse_reward(std::string_view name) {
  for (RewardKind r : {RewardKind::kAdd, RewardKind::kExpManual,
                       RewardKind::kToleranceManual, RewardKind::kMixed}) {
    if (to_string(r) == name) return r;
  }
  throw ConfigError("unknown reward source '" + std::string(name) + "'");
}

RewardKind manual_reward_for(TaskKind task) {
  switch (task) {
    case TaskKind::kPointMassTrack: return RewardKind::kExpManual;
    case TaskKind::kTriObjective: return RewardKind::kToleranceManual;
    case TaskKind::kSteering: return RewardKind::kMixed;
    case TaskKind::kRegression: break;
  }
  throw ConfigError("the regression task has no manual reward");
}

ExperimentConfig::ExperimentConfig() {
  trainer.ppo.gp_mode = add::GpMode::kNeg;
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ConfigError("seeds must not be empty");
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
  if (task == TaskKind::kRegression) {
    if (reward != RewardKind::kAdd) {
      throw ConfigError("the regression task only supports reward 'add'");
    }
    regression.validate();
    return;
  }
  if (reward != RewardKind::kAdd && reward != manual_reward_for(task)) {
    throw ConfigError("reward '" + std::string(to_string(reward)) +
                      "' is not available for task '" + std::string(to_string(task)) +
                      "' (use 'add' or '" +
                      std::string(to_string(manual_reward_for(task))) + "')");
  }
  trainer.ppo.validate();
  if (trainer.trajectories == 0 || trainer.horizon == 0) {
    throw ConfigError("training.trajectories and training.horizon must be > 0");
  }
  if (!(trainer.action_std > 0.0)) throw ConfigError("training.action_std must be > 0");
  if (eval.episodes == 0) throw ConfigError("eval.episodes must be > 0");
  if (exp_setting != "custom") baselines::exp_setting(exp_setting);
  pointmass.exp_reward.validate();
  try {
    steering.steering.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("steering.target: ") + e.what());
  }
  for (double dt : {pointmass.dt, tri_objective.dt, steering.dt}) {
    if (!(dt > 0.0)) throw ConfigError("dt must be > 0");
  }
  if (!(pointmass.period > 0.0)) throw ConfigError("pointmass.period must be > 0");
}

rl::RewardSource ExperimentConfig::reward_source() const {
  return reward == RewardKind::kAdd ? rl::RewardSource::kAdd : rl::RewardSource::kManual;
}

std::size_t ExperimentConfig::eval_horizon() const {
  return eval.horizon == 0 ? trainer.horizon : eval.horizon;
}

json to_json(const ExperimentConfig& cfg) {
  const auto& t = cfg.trainer;
  json j;
  j["task"] = std::string(to_string(cfg.task));
  j["reward"] = std::string(to_string(cfg.reward));
  j["seeds"] = cfg.seeds;
  j["iterations"] = cfg.iterations;
  j["checkpoint_every"] = cfg.checkpoint_every;
  j["output_dir"] = cfg.output_dir;
  j["ppo"] = ppo_json(t.ppo);
  j["training"] = {{"trajectories", t.trajectories},
                   {"horizon", t.horizon},
                   {"action_std", t.action_std},
                   {"policy_output_gain", t.policy_output_gain},
                   {"normalizer_warmup", t.normalizer_warmup},
                   {"normalize_delta", t.normalize_delta}};
  j["networks"] = {{"policy_hidden", t.policy_hidden},
                   {"value_hidden", t.value_hidden},
                   {"disc_hidden", t.disc_hidden},
                   {"activation", std::string(nets::to_string(t.activation))}};
  j["eval"] = {{"episodes", cfg.eval.episodes},
               {"seed", cfg.eval.seed},
               {"horizon", cfg.eval.horizon}};
  j["exp_setting"] = cfg.exp_setting;
  j["exp_reward"] = baselines::to_json(cfg.pointmass.exp_reward);
  const auto& pm = cfg.pointmass;
  j["pointmass"] = {{"dt", pm.dt},
                    {"a_max", pm.a_max},
                    {"reference", std::string(envs::to_string(pm.reference))},
                    {"period", pm.period},
                    {"amplitude", pm.amplitude},
                    {"init_noise", pm.init_noise},
                    {"arena_radius", pm.arena_radius}};
  const auto& tri = cfg.tri_objective;
  j["tri_objective"] = {{"dt", tri.dt},
                        {"a_max", tri.a_max},
                        {"targets",
                         {{"height", tri.targets.height},
                          {"uprightness", tri.targets.uprightness},
                          {"speed", tri.targets.speed}}},
                        {"init_radius", tri.init_radius},
                        {"init_speed", tri.init_speed},
                        {"arena_radius", tri.arena_radius}};
  const auto& st = cfg.steering;
  j["steering"] = {{"dt", st.dt},
                   {"a_max", st.a_max},
                   {"lateral_amplitude", st.lateral_amplitude},
                   {"lateral_period", st.lateral_period},
                   {"amplification", st.amplification},
                   {"arena_radius", st.arena_radius},
                   {"target",
                    {{"direction", st.steering.direction},
                     {"speed", st.steering.speed},
                     {"min_speed", st.steering.min_speed},
                     {"max_speed", st.steering.max_speed},
                     {"resample_steps", st.steering.resample_steps}}}};
  j["regression"] = regression_json(cfg.regression);
  return j;
}

ExperimentConfig from_json(const json& j) {
  ExperimentConfig cfg;
  auto& t = cfg.trainer;
  ObjectReader r(j, "");
  r.get_named("task", cfg.task, parse_task);
  r.get_named("reward", cfg.reward, parse_reward);
  r.get("seeds", cfg.seeds);
  r.get("iterations", cfg.iterations);
  r.get("checkpoint_every", cfg.checkpoint_every);
  r.get("output_dir", cfg.output_dir);
  r.get("exp_setting", cfg.exp_setting);

  if (const json* c = r.child("ppo")) read_ppo(*c, "ppo", t.ppo);
  if (const json* c = r.child("training")) {
    ObjectReader s(*c, "training");
    s.get("trajectories", t.trajectories);
    s.get("horizon", t.horizon);
    s.get("action_std", t.action_std);
    s.get("policy_output_gain", t.policy_output_gain);
    s.get("normalizer_warmup", t.normalizer_warmup);
    s.get("normalize_delta", t.normalize_delta);
    s.finish();
  }
  if (const json* c = r.child("networks")) {
    ObjectReader s(*c, "networks");
    s.get("policy_hidden", t.policy_hidden);
    s.get("value_hidden", t.value_hidden);
    s.get("disc_hidden", t.disc_hidden);
    s.get_named("activation", t.activation, nets::parse_activation);
    s.finish();
  }
  if (const json* c = r.child("eval")) {
    ObjectReader s(*c, "eval");
    s.get("episodes", cfg.eval.episodes);
    s.get("seed", cfg.eval.seed);
    s.get("horizon", cfg.eval.horizon);
    s.finish();
  }
  const json* exp = r.child("exp_reward");
  if (cfg.exp_setting == "custom") {
    if (exp == nullptr) throw ConfigError("exp_setting 'custom' needs an exp_reward block");
    try {
      cfg.pointmass.exp_reward = baselines::exp_spec_from_json(*exp);
    } catch (const json::exception& e) {
      throw ConfigError(std::string("exp_reward: ") + e.what());
    }
  } else {
    cfg.pointmass.exp_reward = baselines::pointmass_exp_preset(cfg.exp_setting);
  }
  cfg.steering.exp_reward = cfg.pointmass.exp_reward;

  if (const json* c = r.child("pointmass")) {
    auto& pm = cfg.pointmass;
    ObjectReader s(*c, "pointmass");
    s.get("dt", pm.dt);
    s.get("a_max", pm.a_max);
    s.get_named("reference", pm.reference, envs::parse_reference_kind);
    s.get("period", pm.period);
    s.get("amplitude", pm.amplitude);
    s.get("init_noise", pm.init_noise);
    s.get("arena_radius", pm.arena_radius);
    s.finish();
  }
  if (const json* c = r.child("tri_objective")) {
    auto& tri = cfg.tri_objective;
    ObjectReader s(*c, "tri_objective");
    s.get("dt", tri.dt);
    s.get("a_max", tri.a_max);
    if (const json* tg = s.child("targets")) {
      ObjectReader g(*tg, "tri_objective.targets");
      g.get("height", tri.targets.height);
      g.get("uprightness", tri.targets.uprightness);
      g.get("speed", tri.targets.speed);
      g.finish();
    }
    s.get("init_radius", tri.init_radius);
    s.get("init_speed", tri.init_speed);
    s.get("arena_radius", tri.arena_radius);
    s.finish();
  }
  if (const json* c = r.child("steering")) {
    auto& st = cfg.steering;
    ObjectReader s(*c, "steering");
    s.get("dt", st.dt);
    s.get("a_max", st.a_max);
    s.get("lateral_amplitude", st.lateral_amplitude);
    s.get("lateral_period", st.lateral_period);
    s.get("amplification", st.amplification);
    s.get("arena_radius", st.arena_radius);
    if (const json* tg = s.child("target")) {
      ObjectReader g(*tg, "steering.target");
      g.get("direction", st.steering.direction);
      g.get("speed", st.steering.speed);
      g.get("min_speed", st.steering.min_speed);
      g.get("max_speed", st.steering.max_speed);
      g.get("resample_steps", st.steering.resample_steps);
      g.finish();
    }
    s.finish();
  }
  if (const json* c = r.child("regression")) read_regression(*c, "regression", cfg.regression);
  r.finish();

  cfg.tri_objective.manual = baselines::WalkerRewardSpec::for_targets(
      cfg.tri_objective.targets.height, cfg.tri_objective.targets.speed);
  cfg.validate();
  return cfg;
}

ExperimentConfig load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return from_json(j);
}

void save(const std::filesystem::path& path, const ExperimentConfig& cfg) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json(cfg).dump(2) << '\n';
}

void apply_override(json& j, std::string_view assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("override '" + std::string(assignment) + "' is not of the form key=value");
  }
  const std::string_view key = assignment.substr(0, eq);
  const std::string text(assignment.substr(eq + 1));
  bool found = false;
  nested_value(j, key, found);
  if (!found) throw ConfigError("override targets unknown key '" + std::string(key) + "'");

  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  std::string pointer = "/" + std::string(key);
  for (char& c : pointer) {
    if (c == '.') c = '/';
  }
  j[json::json_pointer(pointer)] = std::move(value);
}

ExperimentConfig with_overrides(const ExperimentConfig& cfg,
                                const std::vector<std::string>& assignments) {
  json j = to_json(cfg);
  for (const auto& a : assignments) apply_override(j, a);
  return from_json(j);
}

std::unique_ptr<rl::Environment> make_environment(const ExperimentConfig& cfg) {
  switch (cfg.task) {
    case TaskKind::kPointMassTrack:
      return std::make_unique<envs::PointMassEnv>(cfg.pointmass);
    case TaskKind::kTriObjective:
      return std::make_unique<envs::TriObjectiveEnv>(cfg.tri_objective);
    case TaskKind::kSteering:
      return std::make_unique<envs::SteeringEnv>(cfg.steering);
    case TaskKind::kRegression:
      break;
  }
  throw ConfigError("the regression task has no environment");
}

}  // namespace advdiff::config

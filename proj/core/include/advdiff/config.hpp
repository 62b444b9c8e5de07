#ifndef ADVDIFF_CONFIG_HPP_
#define ADVDIFF_CONFIG_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "advdiff/envs.hpp"
#include "advdiff/regression.hpp"
#include "advdiff/rl.hpp"

namespace advdiff::config {

enum class TaskKind { kRegression, kPointMassTrack, kTriObjective, kSteering };
enum class RewardKind { kAdd, kExpManual, kToleranceManual, kMixed };

std::string_view to_string(TaskKind task);
std::string_view to_string(RewardKind reward);
TaskKind parse_task(std::string_view name);
RewardKind parse_reward(std::string_view name);

// The hand-designed reward that goes with a task (exp_manual for tracking,
// tolerance_manual for the tri-objective task, mixed for steering).
RewardKind manual_reward_for(TaskKind task);

struct EvalConfig {
  std::size_t episodes = 16;
  std::uint64_t seed = 1000;
  std::size_t horizon = 0;  // 0 uses the training horizon
};

struct ExperimentConfig {
  TaskKind task = TaskKind::kPointMassTrack;
  RewardKind reward = RewardKind::kAdd;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::size_t iterations = 200;
  std::size_t checkpoint_every = 50;  // 0 keeps only the final checkpoint
  std::string output_dir = "runs/experiment";

  // gp_mode and lambda_gp live in trainer.ppo. trainer.seed is overwritten
  // per run from `seeds`.
  rl::TrainerConfig trainer;
  EvalConfig eval;

  // One of the exp_setting names, or "custom" to use the exp_reward spec
  // stored in the task blocks verbatim.
  std::string exp_setting = "default";
  envs::PointMassConfig pointmass;
  envs::TriObjectiveConfig tri_objective;
  envs::SteeringConfig steering;
  regression::RegressionConfig regression;

  ExperimentConfig();

  // Throws ConfigError.
  void validate() const;
  rl::RewardSource reward_source() const;
  std::size_t eval_horizon() const;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
// Unknown keys and malformed values throw ConfigError. Missing keys keep
// their defaults.
ExperimentConfig from_json(const nlohmann::json& j);

ExperimentConfig load(const std::filesystem::path& path);
void save(const std::filesystem::path& path, const ExperimentConfig& cfg);

// "a.b.c=value". The value is parsed as JSON when possible and taken as a
// string otherwise. The path must already exist in the serialized config.
void apply_override(nlohmann::json& j, std::string_view assignment);
ExperimentConfig with_overrides(const ExperimentConfig& cfg,
                                const std::vector<std::string>& assignments);

// Environment for an RL task; throws ConfigError for kRegression.
std::unique_ptr<rl::Environment> make_environment(const ExperimentConfig& cfg);

}  // namespace advdiff::config

#endif  // ADVDIFF_CONFIG_HPP_

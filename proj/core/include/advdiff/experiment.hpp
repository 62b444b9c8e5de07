#ifndef ADVDIFF_EXPERIMENT_HPP_
#define ADVDIFF_EXPERIMENT_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "advdiff/config.hpp"
#include "advdiff/rl.hpp"

namespace advdiff::experiment {

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for fewer than two values
  std::size_t count = 0;
};

Summary summarize(std::span<const double> values);

struct EvalReport {
  std::size_t episodes = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> metric_names;
  std::vector<Summary> metrics;  // over episodes of each episode's per-step mean
  Summary manual_return;         // sum of the task's hand-designed reward

  // Summary of the named metric; throws std::out_of_range if absent.
  const Summary& metric(std::string_view name) const;
  nlohmann::json to_json() const;
};

// Deterministic episodes of `actor` on copies of `env`.
EvalReport evaluate_actor(const rl::Environment& env, const rl::Actor& actor,
                          std::size_t episodes, std::size_t horizon, std::uint64_t seed);

// Actor that returns the policy mean.
rl::Actor mean_actor(const nets::GaussianPolicy& policy);

struct SeedResult {
  std::uint64_t seed = 0;
  std::filesystem::path dir;
  std::size_t iterations = 0;
  EvalReport final_eval;
  // Discriminator bookkeeping over the whole run.
  std::size_t disc_updates = 0;
  std::size_t positive_samples = 0;
  std::size_t max_positive_per_update = 0;
};

struct RunResult {
  std::filesystem::path dir;
  std::vector<SeedResult> seeds;
};

struct RunOptions {
  // Progress lines; none are written when empty.
  std::function<void(const std::string&)> log;
  std::size_t log_every = 10;
};

// Writes <output_dir>/config.json, then for every seed a directory
// seed_<s>/ with metrics.jsonl, timing.jsonl, curves/*.csv,
// checkpoints/iter_<n>/ and report.json, and finally <output_dir>/report.json.
// A non-finite value writes seed_<s>/dump.json and rethrows NumericError.
RunResult run(const config::ExperimentConfig& cfg, const RunOptions& options = {});

// One seed into `dir`.
SeedResult run_seed(const config::ExperimentConfig& cfg, std::uint64_t seed,
                    const std::filesystem::path& dir, const RunOptions& options = {});

// Networks and metadata stored in a checkpoint directory.
struct Checkpoint {
  config::ExperimentConfig config;
  std::uint64_t seed = 0;
  std::size_t iteration = 0;
  nets::GaussianPolicy policy;  // RL tasks
  nets::Mlp value;
  nets::Discriminator disc;
  add::DeltaNormalizer normalizer;
  nets::Mlp generator;  // regression
};

void save_checkpoint(const std::filesystem::path& dir, const config::ExperimentConfig& cfg,
                     std::uint64_t seed, std::size_t iteration, const rl::Learner& learner);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

// Deterministic evaluation of a checkpoint. For regression checkpoints the
// report holds the dataset "mse" as its only metric.
EvalReport evaluate(const std::filesystem::path& checkpoint, std::size_t episodes,
                    std::uint64_t seed);

enum class AblationAxis { kGpMode, kExpWeights, kRewardSource };

AblationAxis parse_axis(std::string_view name);
std::string_view to_string(AblationAxis axis);

struct GridPoint {
  std::string setting;
  config::ExperimentConfig config;
};

// One config per setting, output_dir set to <base.output_dir>/<setting>.
std::vector<GridPoint> ablation_grid(const config::ExperimentConfig& base, AblationAxis axis);

struct AblationRow {
  std::string setting;
  std::uint64_t seed = 0;
  EvalReport eval;
};

struct AblationResult {
  std::vector<std::string> settings;
  std::vector<AblationRow> rows;
};

// Runs the grid and writes <output_dir>/ablation.csv (one row per setting and
// seed) and <output_dir>/ablation_summary.csv (mean and std per setting).
AblationResult ablate(const config::ExperimentConfig& base, AblationAxis axis,
                      const RunOptions& options = {});

// Rebuilds curves/<metric>.csv from metrics.jsonl. Given a multi-seed run
// directory it does so for each seed and writes across-seed mean/std curves
// to <dir>/curves. Returns the number of curve files written.
std::size_t export_curves(const std::filesystem::path& dir);

}  // namespace advdiff::experiment

#endif  // ADVDIFF_EXPERIMENT_HPP_

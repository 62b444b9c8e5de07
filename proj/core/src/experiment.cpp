#include "advdiff/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "advdiff/checkpoint.hpp"
#include "advdiff/error.hpp"
#include "advdiff/regression.hpp"

namespace advdiff::experiment {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using config::ExperimentConfig;
using config::TaskKind;

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::trunc) {
  std::ofstream out(path, mode);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void write_json(const fs::path& path, const json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return json::parse(in);
}

// Appends one record per line and flushes so the file stays parseable if the
// process dies mid-run.
class JsonlWriter {
 public:
  explicit JsonlWriter(const fs::path& path) : out_(open_out(path)) {}
  void write(const json& record) {
    out_ << record.dump() << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

void check_finite(const json& record, std::size_t iteration) {
  for (const auto& [key, value] : record.items()) {
    if (value.is_number_float() && !std::isfinite(value.get<double>())) {
      throw NumericError("non-finite " + key + " at iteration " + std::to_string(iteration));
    }
  }
}

json iteration_json(const rl::IterationRecord& rec, const std::vector<std::string>& names,
                    bool adversarial) {
  json j;
  j["iteration"] = rec.iteration;
  j["samples"] = rec.samples;
  j["mean_return"] = rec.collect.mean_return;
  j["mean_manual_reward"] = rec.collect.mean_manual_reward;
  for (std::size_t k = 0; k < names.size(); ++k) j[names[k]] = rec.collect.metrics.at(k);
  j["policy_loss"] = rec.update.policy_loss;
  j["value_loss"] = rec.update.value_loss;
  j["clip_fraction"] = rec.update.clip_fraction;
  if (adversarial) {
    j["disc_loss"] = rec.update.disc_loss;
    j["gradient_penalty"] = rec.update.gradient_penalty;
    j["disc_negative"] = rec.collect.mean_disc_negative;
    j["disc_zero"] = rec.disc_zero_score;
    j["disc_updates"] = rec.update.disc_updates;
    j["positive_samples"] = rec.update.positive_samples;
  }
  return j;
}

json regression_json(const regression::RegressionLog& log) {
  return {{"iteration", log.step},
          {"mse", log.mse},
          {"generator_loss", log.generator_loss},
          {"disc_loss", log.disc_loss},
          {"gradient_penalty", log.gradient_penalty},
          {"disc_zero", log.disc_zero},
          {"disc_current", log.disc_current}};
}

std::vector<json> read_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<json> records;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) records.push_back(json::parse(line));
  }
  return records;
}

// Metric names in first-appearance order, excluding the iteration index.
std::vector<std::string> curve_keys(const std::vector<json>& records) {
  std::vector<std::string> keys;
  for (const auto& r : records) {
    for (const auto& [key, value] : r.items()) {
      if (key == "iteration" || !value.is_number()) continue;
      if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
    }
  }
  return keys;
}

std::size_t write_run_curves(const fs::path& run_dir) {
  const auto records = read_jsonl(run_dir / "metrics.jsonl");
  const fs::path curves = run_dir / "curves";
  fs::create_directories(curves);
  std::size_t written = 0;
  for (const auto& key : curve_keys(records)) {
    auto out = open_out(curves / (key + ".csv"));
    out.precision(17);
    out << "iteration," << key << '\n';
    for (const auto& r : records) {
      if (r.contains(key)) out << r.at("iteration").get<std::size_t>() << ',' << r.at(key).get<double>() << '\n';
    }
    ++written;
  }
  return written;
}

std::string seed_dir_name(std::uint64_t seed) { return "seed_" + std::to_string(seed); }

std::string checkpoint_name(std::size_t iteration) {
  return "iter_" + std::to_string(iteration);
}

void write_dump(const fs::path& dir, const ExperimentConfig& cfg, std::uint64_t seed,
                std::size_t iteration, const std::string& what, const json& state) {
  json dump;
  dump["error"] = what;
  dump["seed"] = seed;
  dump["iteration"] = iteration;
  dump["config"] = config::to_json(cfg);
  dump["state"] = state;
  write_json(dir / "dump.json", dump);
}

json seed_report(const SeedResult& r) {
  json j;
  j["seed"] = r.seed;
  j["iterations"] = r.iterations;
  j["final_eval"] = r.final_eval.to_json();
  j["disc_updates"] = r.disc_updates;
  j["positive_samples"] = r.positive_samples;
  j["max_positive_per_update"] = r.max_positive_per_update;
  return j;
}

SeedResult run_regression_seed(const ExperimentConfig& cfg, std::uint64_t seed,
                               const fs::path& dir, const RunOptions& options) {
  regression::RegressionConfig rc = cfg.regression;
  rc.seed = seed;
  const auto task = regression::RegressionTask::sample(rc.points, rc.x_max, seed);

  JsonlWriter metrics(dir / "metrics.jsonl");
  JsonlWriter timing(dir / "timing.jsonl");
  const auto start = std::chrono::steady_clock::now();
  std::size_t last_step = 0;
  regression::RegressionResult result;
  try {
    result = regression::regression_train(task, rc, [&](const regression::RegressionLog& log) {
      json record = regression_json(log);
      check_finite(record, log.step);
      metrics.write(record);
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      timing.write({{"iteration", log.step}, {"seconds", secs}});
      last_step = log.step;
      if (options.log) {
        std::ostringstream line;
        line << "seed " << seed << " step " << log.step << " mse " << log.mse;
        options.log(line.str());
      }
    });
  } catch (const NumericError& e) {
    write_dump(dir, cfg, seed, last_step, e.what(), json::object());
    throw;
  }

  const fs::path ckpt = dir / "checkpoints" / checkpoint_name(rc.steps);
  fs::create_directories(ckpt);
  nets::save_checkpoint(ckpt / "generator.bin", result.generator);
  nets::save_checkpoint(ckpt / "disc.bin", result.disc.net());
  write_json(ckpt / "meta.json",
             {{"config", config::to_json(cfg)}, {"seed", seed}, {"iteration", rc.steps}});

  {
    auto out = open_out(dir / "gradients.csv");
    out.precision(17);
    out << "x";
    for (const auto& s : result.snapshots) out << ",step_" << s.step;
    out << '\n';
    for (std::size_t i = 0; i < task.size(); ++i) {
      out << task.x[i];
      for (const auto& s : result.snapshots) out << ',' << s.magnitude[i];
      out << '\n';
    }
  }
  write_run_curves(dir);

  SeedResult r;
  r.seed = seed;
  r.dir = dir;
  r.iterations = rc.steps;
  r.final_eval.episodes = 1;
  r.final_eval.seed = seed;
  r.final_eval.metric_names = {"mse"};
  r.final_eval.metrics = {Summary{result.final_mse, 0.0, 1}};
  write_json(dir / "report.json", seed_report(r));
  return r;
}

rl::TrainerConfig trainer_config(const ExperimentConfig& cfg, std::uint64_t seed) {
  rl::TrainerConfig t = cfg.trainer;
  t.seed = seed;
  t.reward = cfg.reward_source();
  return t;
}

}  // namespace

Summary summarize(std::span<const double> values) {
  Summary s;
  s.count = values.size();
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double sq = 0.0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(sq / static_cast<double>(values.size() - 1));
  }
  return s;
}

const Summary& EvalReport::metric(std::string_view name) const {
  for (std::size_t k = 0; k < metric_names.size(); ++k) {
    if (metric_names[k] == name) return metrics.at(k);
  }
  throw std::out_of_range("report has no metric '" + std::string(name) + "'");
}

json EvalReport::to_json() const {
  json j;
  j["episodes"] = episodes;
  j["seed"] = seed;
  json m = json::object();
  for (std::size_t k = 0; k < metric_names.size(); ++k) {
    m[metric_names[k]] = {{"mean", metrics[k].mean}, {"std", metrics[k].std}};
  }
  j["metrics"] = m;
  j["manual_return"] = {{"mean", manual_return.mean}, {"std", manual_return.std}};
  return j;
}

EvalReport evaluate_actor(const rl::Environment& env, const rl::Actor& actor,
                          std::size_t episodes, std::size_t horizon, std::uint64_t seed) {
  const auto summaries = rl::rollout_episodes(
      env, actor, episodes, horizon, seed,
      [](const rl::StepResult& s) { return s.manual_reward; });
  EvalReport report;
  report.episodes = episodes;
  report.seed = seed;
  report.metric_names = env.metric_names();
  std::vector<double> returns;
  std::vector<std::vector<double>> per_metric(report.metric_names.size());
  for (const auto& s : summaries) {
    returns.push_back(s.return_sum);
    for (std::size_t k = 0; k < per_metric.size(); ++k) per_metric[k].push_back(s.metrics[k]);
  }
  for (const auto& values : per_metric) report.metrics.push_back(summarize(values));
  report.manual_return = summarize(returns);
  return report;
}

rl::Actor mean_actor(const nets::GaussianPolicy& policy) {
  return [&policy](const rl::Environment&, std::span<const double> obs) {
    return policy.mean(obs);
  };
}

void save_checkpoint(const fs::path& dir, const ExperimentConfig& cfg, std::uint64_t seed,
                     std::size_t iteration, const rl::Learner& learner) {
  fs::create_directories(dir);
  nets::save_checkpoint(dir / "policy.bin", learner.policy.mean_net(),
                        {{"sigma", learner.policy.sigma()}});
  nets::save_checkpoint(dir / "value.bin", learner.value);
  nets::save_checkpoint(dir / "disc.bin", learner.disc.net());
  write_json(dir / "normalizer.json", learner.normalizer.to_json());
  write_json(dir / "meta.json",
             {{"config", config::to_json(cfg)}, {"seed", seed}, {"iteration", iteration}});
}

Checkpoint load_checkpoint(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw std::runtime_error("checkpoint directory " + dir.string() + " does not exist");
  }
  const json meta = read_json(dir / "meta.json");
  Checkpoint c;
  c.config = config::from_json(meta.at("config"));
  c.seed = meta.at("seed").get<std::uint64_t>();
  c.iteration = meta.at("iteration").get<std::size_t>();
  c.disc = nets::Discriminator(nets::load_checkpoint(dir / "disc.bin").net);
  if (c.config.task == TaskKind::kRegression) {
    c.generator = nets::load_checkpoint(dir / "generator.bin").net;
    return c;
  }
  auto policy = nets::load_checkpoint(dir / "policy.bin");
  c.policy = nets::GaussianPolicy(std::move(policy.net),
                                  policy.extra.at("sigma").get<std::vector<double>>());
  c.value = nets::load_checkpoint(dir / "value.bin").net;
  c.normalizer = add::DeltaNormalizer::from_json(read_json(dir / "normalizer.json"));
  return c;
}

EvalReport evaluate(const fs::path& checkpoint, std::size_t episodes, std::uint64_t seed) {
  const Checkpoint c = load_checkpoint(checkpoint);
  if (c.config.task == TaskKind::kRegression) {
    const auto& rc = c.config.regression;
    const auto task = regression::RegressionTask::sample(rc.points, rc.x_max, c.seed);
    if (c.generator.input_size() != 1 || c.generator.output_size() != 1) {
      throw ShapeError("regression checkpoint generator must map 1 -> 1");
    }
    EvalReport r;
    r.episodes = 1;
    r.seed = c.seed;
    r.metric_names = {"mse"};
    r.metrics = {Summary{task.mse(regression::predict(c.generator, task)), 0.0, 1}};
    return r;
  }
  const auto env = config::make_environment(c.config);
  if (c.policy.mean_net().input_size() != env->observation_size() ||
      c.policy.action_size() != env->action_size()) {
    throw ShapeError("checkpoint policy does not match the environment's dimensions");
  }
  return evaluate_actor(*env, mean_actor(c.policy), episodes, c.config.eval_horizon(), seed);
}

SeedResult run_seed(const ExperimentConfig& cfg, std::uint64_t seed, const fs::path& dir,
                    const RunOptions& options) {
  fs::create_directories(dir);
  if (cfg.task == TaskKind::kRegression) return run_regression_seed(cfg, seed, dir, options);

  const auto env = config::make_environment(cfg);
  rl::Trainer trainer(*env, trainer_config(cfg, seed));
  const bool adversarial = cfg.reward == config::RewardKind::kAdd;
  const auto names = env->metric_names();

  JsonlWriter metrics(dir / "metrics.jsonl");
  JsonlWriter timing(dir / "timing.jsonl");
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    json record;
    try {
      const rl::IterationRecord rec = trainer.iterate();
      record = iteration_json(rec, names, adversarial);
      check_finite(record, it);
    } catch (const NumericError& e) {
      write_dump(dir, cfg, seed, it, e.what(),
                 {{"last_record", record},
                  {"normalizer", trainer.learner().normalizer.to_json()}});
      throw;
    }
    metrics.write(record);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    timing.write({{"iteration", it}, {"seconds", secs}});
    if (cfg.checkpoint_every > 0 && (it + 1) % cfg.checkpoint_every == 0 &&
        it + 1 < cfg.iterations) {
      save_checkpoint(dir / "checkpoints" / checkpoint_name(it + 1), cfg, seed, it + 1,
                      trainer.learner());
    }
    if (options.log && (it % std::max<std::size_t>(options.log_every, 1) == 0 ||
                        it + 1 == cfg.iterations)) {
      std::ostringstream line;
      line << "seed " << seed << " iter " << it << " return " << record["mean_return"].get<double>();
      if (!names.empty()) line << ' ' << names[0] << ' ' << record[names[0]].get<double>();
      options.log(line.str());
    }
  }
  save_checkpoint(dir / "checkpoints" / checkpoint_name(cfg.iterations), cfg, seed,
                  cfg.iterations, trainer.learner());
  write_run_curves(dir);

  SeedResult r;
  r.seed = seed;
  r.dir = dir;
  r.iterations = cfg.iterations;
  r.final_eval = evaluate_actor(*env, mean_actor(trainer.learner().policy), cfg.eval.episodes,
                                cfg.eval_horizon(), cfg.eval.seed);
  r.disc_updates = trainer.disc_updates();
  r.positive_samples = trainer.positive_samples();
  r.max_positive_per_update = trainer.max_positive_per_update();
  write_json(dir / "report.json", seed_report(r));
  return r;
}

RunResult run(const ExperimentConfig& cfg, const RunOptions& options) {
  cfg.validate();
  RunResult result;
  result.dir = cfg.output_dir;
  fs::create_directories(result.dir);
  config::save(result.dir / "config.json", cfg);
  for (std::uint64_t seed : cfg.seeds) {
    result.seeds.push_back(run_seed(cfg, seed, result.dir / seed_dir_name(seed), options));
  }

  json report;
  report["task"] = std::string(config::to_string(cfg.task));
  report["reward"] = std::string(config::to_string(cfg.reward));
  report["seeds"] = json::array();
  for (const auto& s : result.seeds) report["seeds"].push_back(seed_report(s));
  const auto& names = result.seeds.front().final_eval.metric_names;
  json across = json::object();
  for (std::size_t k = 0; k < names.size(); ++k) {
    std::vector<double> values;
    for (const auto& s : result.seeds) values.push_back(s.final_eval.metrics[k].mean);
    const Summary sm = summarize(values);
    across[names[k]] = {{"mean", sm.mean}, {"std", sm.std}};
  }
  report["across_seeds"] = across;
  write_json(result.dir / "report.json", report);
  return result;
}

AblationAxis parse_axis(std::string_view name) {
  for (AblationAxis a :
       {AblationAxis::kGpMode, AblationAxis::kExpWeights, AblationAxis::kRewardSource}) {
    if (to_string(a) == name) return a;
  }
  throw ConfigError("unknown ablation axis '" + std::string(name) +
                    "' (expected gp_mode, exp_weights or reward_source)");
}

std::string_view to_string(AblationAxis axis) {
  switch (axis) {
    case AblationAxis::kGpMode: return "gp_mode";
    case AblationAxis::kExpWeights: return "exp_weights";
    case AblationAxis::kRewardSource: return "reward_source";
  }
  return "unknown";
}

std::vector<GridPoint> ablation_grid(const ExperimentConfig& base, AblationAxis axis) {
  base.validate();
  std::vector<GridPoint> grid;
  auto add_point = [&](std::string setting, ExperimentConfig c) {
    c.output_dir = (fs::path(base.output_dir) / setting).string();
    grid.push_back({std::move(setting), std::move(c)});
  };
  switch (axis) {
    case AblationAxis::kGpMode:
      if (base.task != TaskKind::kRegression && base.reward != config::RewardKind::kAdd) {
        throw ConfigError("the gp_mode ablation needs reward 'add'");
      }
      for (add::GpMode mode : add::kAllGpModes) {
        ExperimentConfig c = base;
        c.trainer.ppo.gp_mode = mode;
        c.regression.gp_mode = mode;
        add_point(std::string(add::to_string(mode)), std::move(c));
      }
      break;
    case AblationAxis::kExpWeights:
      if (base.task != TaskKind::kPointMassTrack && base.task != TaskKind::kSteering) {
        throw ConfigError("the exp_weights ablation needs task pointmass_track or steering");
      }
      if (base.reward == config::RewardKind::kAdd) {
        throw ConfigError("the exp_weights ablation needs a manual reward");
      }
      for (std::string_view name : baselines::kExpSettingNames) {
        ExperimentConfig c = base;
        c.exp_setting = std::string(name);
        c.pointmass.exp_reward = baselines::pointmass_exp_preset(name);
        c.steering.exp_reward = c.pointmass.exp_reward;
        add_point(std::string(name), std::move(c));
      }
      break;
    case AblationAxis::kRewardSource: {
      const config::RewardKind manual = config::manual_reward_for(base.task);
      for (config::RewardKind kind : {config::RewardKind::kAdd, manual}) {
        ExperimentConfig c = base;
        c.reward = kind;
        add_point(std::string(config::to_string(kind)), std::move(c));
      }
      break;
    }
  }
  return grid;
}

AblationResult ablate(const ExperimentConfig& base, AblationAxis axis,
                      const RunOptions& options) {
  const auto grid = ablation_grid(base, axis);
  AblationResult result;
  for (const auto& point : grid) {
    if (options.log) options.log("setting " + point.setting);
    const RunResult run_result = run(point.config, options);
    result.settings.push_back(point.setting);
    for (const auto& s : run_result.seeds) {
      result.rows.push_back({point.setting, s.seed, s.final_eval});
    }
  }

  const fs::path dir = base.output_dir;
  fs::create_directories(dir);
  const auto& names = result.rows.front().eval.metric_names;
  {
    auto out = open_out(dir / "ablation.csv");
    out.precision(17);
    out << "setting,seed";
    for (const auto& n : names) out << ',' << n;
    out << ",manual_return\n";
    for (const auto& row : result.rows) {
      out << row.setting << ',' << row.seed;
      for (const auto& m : row.eval.metrics) out << ',' << m.mean;
      out << ',' << row.eval.manual_return.mean << '\n';
    }
  }
  {
    auto out = open_out(dir / "ablation_summary.csv");
    out.precision(17);
    out << "setting,seeds";
    for (const auto& n : names) out << ',' << n << "_mean," << n << "_std";
    out << ",manual_return_mean,manual_return_std\n";
    for (const auto& setting : result.settings) {
      std::vector<std::vector<double>> values(names.size() + 1);
      for (const auto& row : result.rows) {
        if (row.setting != setting) continue;
        for (std::size_t k = 0; k < names.size(); ++k) values[k].push_back(row.eval.metrics[k].mean);
        values.back().push_back(row.eval.manual_return.mean);
      }
      out << setting << ',' << values.front().size();
      for (const auto& v : values) {
        const Summary s = summarize(v);
        out << ',' << s.mean << ',' << s.std;
      }
      out << '\n';
    }
  }
  return result;
}

std::size_t export_curves(const fs::path& dir) {
  if (fs::exists(dir / "metrics.jsonl")) return write_run_curves(dir);

  std::vector<fs::path> seed_dirs;
  if (fs::is_directory(dir)) {
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_directory() && entry.path().filename().string().rfind("seed_", 0) == 0 &&
          fs::exists(entry.path() / "metrics.jsonl")) {
        seed_dirs.push_back(entry.path());
      }
    }
  }
  if (seed_dirs.empty()) {
    throw std::runtime_error("no metrics.jsonl found under " + dir.string());
  }
  std::sort(seed_dirs.begin(), seed_dirs.end());

  std::size_t written = 0;
  std::vector<std::vector<json>> runs;
  for (const auto& d : seed_dirs) {
    written += write_run_curves(d);
    runs.push_back(read_jsonl(d / "metrics.jsonl"));
  }

  // iteration -> per-seed values, for each key.
  const fs::path curves = dir / "curves";
  fs::create_directories(curves);
  for (const auto& key : curve_keys(runs.front())) {
    std::map<std::size_t, std::vector<double>> by_iter;
    for (const auto& records : runs) {
      for (const auto& r : records) {
        if (r.contains(key)) {
          by_iter[r.at("iteration").get<std::size_t>()].push_back(r.at(key).get<double>());
        }
      }
    }
    auto out = open_out(curves / (key + ".csv"));
    out.precision(17);
    out << "iteration,mean,std,seeds\n";
    for (const auto& [iteration, values] : by_iter) {
      const Summary s = summarize(values);
      out << iteration << ',' << s.mean << ',' << s.std << ',' << s.count << '\n';
    }
    ++written;
  }
  return written;
}

}  // namespace advdiff::experiment

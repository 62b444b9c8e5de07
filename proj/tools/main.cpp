// Command line front end: run, evaluate, ablate, export-curves,
// export-reference.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "advdiff/config.hpp"
#include "advdiff/envs.hpp"
#include "advdiff/error.hpp"
#include "advdiff/experiment.hpp"

namespace {

namespace fs = std::filesystem;
using namespace advdiff;

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

experiment::RunOptions run_options(bool quiet, std::size_t log_every) {
  experiment::RunOptions options;
  options.log_every = log_every;
  if (!quiet) options.log = [](const std::string& line) { std::cerr << line << '\n'; };
  return options;
}

config::ExperimentConfig load_config(const std::string& path,
                                     const std::vector<std::string>& overrides) {
  return config::with_overrides(config::load(path), overrides);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial differential discriminator experiments"};
  app.require_subcommand(1);

  bool quiet = false;
  std::size_t log_every = 10;
  app.add_flag("-q,--quiet", quiet, "Suppress progress output");
  app.add_option("--log-every", log_every, "Iterations between progress lines")
      ->check(CLI::PositiveNumber);

  std::string config_path;
  std::vector<std::string> overrides;

  auto* run = app.add_subcommand("run", "Train every seed of a config");
  run->add_option("config", config_path, "Experiment config (JSON)")->required();
  run->add_option("--set", overrides, "Override a config key, e.g. ppo.clip=0.2");

  std::string checkpoint;
  std::size_t episodes = 128;
  std::uint64_t eval_seed = 0;
  std::string report_path;
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a checkpoint directory");
  evaluate->add_option("checkpoint", checkpoint, "checkpoints/iter_<n> directory")->required();
  evaluate->add_option("--episodes", episodes, "Number of episodes")
      ->check(CLI::PositiveNumber);
  evaluate->add_option("--seed", eval_seed, "Evaluation seed");
  evaluate->add_option("-o,--output", report_path, "Also write the report to this file");

  std::string axis;
  auto* ablate = app.add_subcommand("ablate", "Run an ablation grid over one axis");
  ablate->add_option("config", config_path, "Base experiment config (JSON)")->required();
  ablate->add_option("--axis", axis, "gp_mode, exp_weights or reward_source")->required();
  ablate->add_option("--set", overrides, "Override a config key");

  std::string run_dir;
  auto* curves = app.add_subcommand("export-curves", "Rebuild curves/*.csv from metrics.jsonl");
  curves->add_option("run-dir", run_dir, "Run or seed directory")->required();

  std::string kind = "circle";
  double period = 5.0;
  double amplitude = 1.0;
  std::size_t samples = 200;
  std::string csv_path;
  auto* reference = app.add_subcommand("export-reference", "Write a reference trajectory as CSV");
  reference->add_option("--kind", kind, "circle, lissajous or sine");
  reference->add_option("--period", period, "Period in seconds");
  reference->add_option("--amplitude", amplitude, "Amplitude in meters");
  reference->add_option("--samples", samples, "Rows over one period")
      ->check(CLI::PositiveNumber);
  reference->add_option("-o,--output", csv_path, "Output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) {
      const auto cfg = load_config(config_path, overrides);
      const auto result = experiment::run(cfg, run_options(quiet, log_every));
      std::cout << (result.dir / "report.json").string() << '\n';
    } else if (*evaluate) {
      const auto report = experiment::evaluate(checkpoint, episodes, eval_seed);
      const std::string text = report.to_json().dump(2);
      std::cout << text << '\n';
      if (!report_path.empty()) {
        std::ofstream out(report_path);
        if (!out) throw std::runtime_error("cannot write " + report_path);
        out << text << '\n';
      }
    } else if (*ablate) {
      const auto cfg = load_config(config_path, overrides);
      experiment::ablate(cfg, experiment::parse_axis(axis), run_options(quiet, log_every));
      std::cout << (fs::path(cfg.output_dir) / "ablation_summary.csv").string() << '\n';
    } else if (*curves) {
      const std::size_t n = experiment::export_curves(run_dir);
      std::cout << n << " curve files written\n";
    } else if (*reference) {
      envs::ReferenceKind ref_kind;
      try {
        ref_kind = envs::parse_reference_kind(kind);
        const auto ref = envs::make_reference(ref_kind, period, amplitude);
        if (csv_path.empty()) {
          ref.write_csv(std::cout, samples);
        } else {
          std::ofstream out(csv_path);
          if (!out) throw std::runtime_error("cannot write " + csv_path);
          ref.write_csv(out, samples);
        }
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric divergence: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

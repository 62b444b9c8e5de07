#ifndef ADVDIFF_RL_HPP_
#define ADVDIFF_RL_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "advdiff/add_core.hpp"
#include "advdiff/nets.hpp"
#include "advdiff/normalizer.hpp"
#include "advdiff/optim.hpp"

namespace advdiff::rl {

struct StepResult {
  std::vector<double> observation;
  std::vector<double> delta;      // raw differential after the step
  double manual_reward = 0.0;     // the environment's hand-designed reward
  bool failed = false;
  std::vector<double> metrics;    // aligned with Environment::metric_names()
};

class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::size_t observation_size() const = 0;
  virtual std::size_t action_size() const = 0;
  virtual std::vector<std::string> delta_labels() const = 0;
  std::size_t delta_size() const { return delta_labels().size(); }
  // Per-entry amplification applied after normalization; default all 1.
  virtual std::vector<double> delta_amplification() const;
  // Per-step quantities averaged into training and evaluation metrics.
  virtual std::vector<std::string> metric_names() const = 0;

  virtual std::vector<double> reset(Rng& rng) = 0;
  virtual StepResult step(std::span<const double> action) = 0;
  virtual std::unique_ptr<Environment> clone() const = 0;
};

enum class RewardSource { kAdd, kManual };

struct Transition {
  std::vector<double> observation;
  std::vector<double> action;
  double log_prob = 0.0;
  double value = 0.0;
  double reward = 0.0;
  bool done = false;         // environment failure: no bootstrap past this step
  bool segment_end = false;  // last step of its trajectory slot
  std::vector<double> delta;
  std::size_t iteration = 0;
};

// m trajectory slots of T steps each, stored slot-major. A failed episode is
// reset in place so every slot holds exactly T transitions.
class TrajectoryBuffer {
 public:
  TrajectoryBuffer() = default;
  TrajectoryBuffer(std::size_t trajectories, std::size_t horizon);

  std::size_t trajectories() const noexcept { return trajectories_; }
  std::size_t horizon() const noexcept { return horizon_; }
  std::size_t size() const noexcept { return transitions_.size(); }
  bool empty() const noexcept { return transitions_.empty(); }
  bool full() const noexcept { return size() == trajectories_ * horizon_; }

  std::vector<Transition>& transitions() noexcept { return transitions_; }
  const std::vector<Transition>& transitions() const noexcept { return transitions_; }
  std::span<const Transition> slot(std::size_t i) const;
  std::vector<double>& bootstrap_values() noexcept { return bootstrap_; }
  const std::vector<double>& bootstrap_values() const noexcept { return bootstrap_; }

  // Number of episode ends: failures plus trajectory-slot ends.
  std::size_t episode_count() const;

  void clear();

 private:
  std::size_t trajectories_ = 0;
  std::size_t horizon_ = 0;
  std::vector<Transition> transitions_;
  std::vector<double> bootstrap_;
};

// delta_t = r_t + gamma V_{t+1} (1 - done_t) - V_t with V_T = bootstrap_value,
// A_t = delta_t + gamma lambda (1 - done_t) A_{t+1}.
std::vector<double> gae(std::span<const double> rewards, std::span<const double> values,
                        double bootstrap_value, std::span<const bool> dones,
                        double gamma, double lambda);

// Forward-view lambda-returns G_t = r_t + gamma (1 - done_t)
// [(1 - lambda) V_{t+1} + lambda G_{t+1}], with G_T = V_T = bootstrap_value.
std::vector<double> td_lambda_targets(std::span<const double> rewards,
                                      std::span<const double> values,
                                      double bootstrap_value, std::span<const bool> dones,
                                      double gamma, double lambda);

struct PpoConfig {
  double clip = 0.2;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double td_lambda = 0.95;
  std::size_t minibatch_size = 256;
  std::size_t epochs = 2;
  double policy_lr = 5e-4;
  double value_lr = 5e-4;
  double disc_lr = 5e-5;
  double momentum = 0.9;
  double max_grad_norm = 0.0;  // 0 disables clipping
  add::GpMode gp_mode = add::GpMode::kNeg;
  double lambda_gp = 1e-3;

  void validate() const;
};

struct PpoLosses {
  double policy = 0.0;
  double value = 0.0;
  double clip_fraction = 0.0;
};

// Clipped surrogate and value regression on one minibatch; returns the loss
// values and fills per-parameter gradients.
struct MinibatchGradients {
  PpoLosses losses;
  std::vector<ad::Tensor> policy;
  std::vector<ad::Tensor> value;
};

// `advantages` must already be normalized. Every argument is row-aligned.
MinibatchGradients ppo_gradients(const nets::GaussianPolicy& policy,
                                 const nets::Mlp& value_net, const ad::Tensor& observations,
                                 const ad::Tensor& actions, std::span<const double> old_log_probs,
                                 std::span<const double> advantages,
                                 std::span<const double> value_targets, double clip);

// Per-sample gradient of the clipped surrogate with respect to log pi:
// ratio * A on the unclipped branch, 0 when the ratio is clipped.
double surrogate_log_prob_gradient(double ratio, double advantage, double clip);

// Zero mean, unit variance (std floored at 1e-8).
std::vector<double> normalize_advantages(std::span<const double> advantages);

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double disc_loss = 0.0;
  double gradient_penalty = 0.0;
  double clip_fraction = 0.0;
  std::size_t minibatches = 0;
  std::size_t disc_updates = 0;
  std::size_t positive_samples = 0;  // summed over discriminator updates
  std::size_t max_positive = 0;      // largest count seen in a single update
};

struct Learner {
  nets::GaussianPolicy policy;
  nets::Mlp value;
  nets::Discriminator disc;
  add::DeltaNormalizer normalizer;
  std::unique_ptr<optim::Optimizer> policy_opt;
  std::unique_ptr<optim::Optimizer> value_opt;
  std::unique_ptr<optim::Optimizer> disc_opt;
};

// Fills advantages and value targets for every transition of `buffer`.
void compute_targets(const TrajectoryBuffer& buffer, const PpoConfig& cfg,
                     std::vector<double>& advantages, std::vector<double>& targets);

// D, then V, then pi on each shuffled minibatch for cfg.epochs passes. The
// discriminator is trained only when `train_disc` is set.
UpdateStats ppo_update(Learner& learner, const TrajectoryBuffer& buffer,
                       const PpoConfig& cfg, bool train_disc, Rng& rng);

struct CollectStats {
  double mean_return = 0.0;            // sum of rewards per episode
  double mean_manual_reward = 0.0;
  double mean_disc_negative = 0.0;     // mean D over collected differentials
  std::vector<double> metrics;         // per-step means, Environment::metric_names()
};

// Runs `envs.size()` environments in lockstep for `horizon` steps.
// Observations and differentials are batched through the networks.
// `deterministic` replaces sampling by the policy mean.
TrajectoryBuffer collect(std::vector<std::unique_ptr<Environment>>& envs,
                         const nets::GaussianPolicy& policy, const nets::Mlp& value_net,
                         const nets::Discriminator& disc,
                         const add::DeltaNormalizer& normalizer, RewardSource source,
                         std::size_t horizon, std::size_t iteration, Rng& rng,
                         CollectStats* stats = nullptr, bool deterministic = false);

struct TrainerConfig {
  PpoConfig ppo;
  RewardSource reward = RewardSource::kAdd;
  std::size_t trajectories = 64;
  std::size_t horizon = 150;
  std::vector<std::size_t> policy_hidden{256, 128};
  std::vector<std::size_t> value_hidden{256, 128};
  std::vector<std::size_t> disc_hidden{256, 128};
  nets::Activation activation = nets::Activation::kRelu;
  double action_std = 0.1;
  double policy_output_gain = 0.01;
  std::size_t normalizer_warmup = 100;
  bool normalize_delta = true;
  std::uint64_t seed = 1;
};

struct IterationRecord {
  std::size_t iteration = 0;
  std::size_t samples = 0;
  CollectStats collect;
  UpdateStats update;
  double disc_zero_score = 0.0;  // D(0) after the update
};

class Trainer {
 public:
  Trainer(const Environment& prototype, TrainerConfig config);

  IterationRecord iterate();

  const TrainerConfig& config() const noexcept { return cfg_; }
  Learner& learner() noexcept { return learner_; }
  const Learner& learner() const noexcept { return learner_; }
  std::size_t iteration() const noexcept { return iteration_; }
  std::size_t samples() const noexcept { return samples_; }
  const TrajectoryBuffer& last_buffer() const noexcept { return buffer_; }
  // Totals over the whole run.
  std::size_t disc_updates() const noexcept { return disc_updates_; }
  std::size_t positive_samples() const noexcept { return positive_samples_; }
  std::size_t max_positive_per_update() const noexcept { return max_positive_; }

 private:
  TrainerConfig cfg_;
  std::vector<std::unique_ptr<Environment>> envs_;
  Learner learner_;
  Rng rng_;
  TrajectoryBuffer buffer_;
  std::size_t iteration_ = 0;
  std::size_t samples_ = 0;
  std::size_t disc_updates_ = 0;
  std::size_t positive_samples_ = 0;
  std::size_t max_positive_ = 0;
};

using Actor = std::function<std::vector<double>(const Environment&, std::span<const double>)>;

struct EpisodeSummary {
  double return_sum = 0.0;
  std::vector<double> metrics;  // per-step means over the episode
};

// One deterministic episode per entry; each starts from reset(rng) with a
// fresh rng seeded from `seed` and the episode index.
std::vector<EpisodeSummary> rollout_episodes(const Environment& prototype,
                                             const Actor& actor, std::size_t episodes,
                                             std::size_t horizon, std::uint64_t seed,
                                             const std::function<double(const StepResult&)>&
                                                 reward_fn);

}  // namespace advdiff::rl

#endif  // ADVDIFF_RL_HPP_

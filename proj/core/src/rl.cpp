#include "advdiff/rl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "advdiff/error.hpp"

namespace advdiff::rl {
namespace {

void check_lengths(std::size_t rewards, std::size_t values, std::size_t dones) {
  if (rewards != values || rewards != dones) {
    throw ShapeError("rewards, values and dones must have equal lengths");
  }
}

void check_unit(double x, const char* what) {
  if (!(x >= 0.0 && x <= 1.0)) {
    throw std::invalid_argument(std::string(what) + " must lie in [0, 1]");
  }
}

ad::Tensor stack_rows(const std::vector<const std::vector<double>*>& rows,
                      std::size_t width) {
  ad::Tensor out({rows.size(), width});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r]->size() != width) throw ShapeError("ragged batch");
    std::copy(rows[r]->begin(), rows[r]->end(), out.row_span(r).begin());
  }
  return out;
}

std::vector<ad::Tensor> values_of(const std::vector<ad::Var>& vars) {
  std::vector<ad::Tensor> out;
  out.reserve(vars.size());
  for (const auto& v : vars) out.push_back(v.value());
  return out;
}

void apply_step(optim::Optimizer& opt, nets::Mlp& net, std::vector<ad::Tensor> grads,
                double max_norm) {
  if (max_norm > 0.0) optim::clip_global_norm(grads, max_norm);
  std::vector<ad::Tensor*> params = net.parameters();
  opt.step(params, grads);
}

std::uint64_t episode_seed(std::uint64_t seed, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

}  // namespace

std::vector<double> Environment::delta_amplification() const {
  return std::vector<double>(delta_size(), 1.0);
}

TrajectoryBuffer::TrajectoryBuffer(std::size_t trajectories, std::size_t horizon)
    : trajectories_(trajectories), horizon_(horizon) {
  transitions_.reserve(trajectories * horizon);
  bootstrap_.assign(trajectories, 0.0);
}

std::span<const Transition> TrajectoryBuffer::slot(std::size_t i) const {
  if (i >= trajectories_ || !full()) throw std::out_of_range("buffer slot");
  return std::span<const Transition>(transitions_).subspan(i * horizon_, horizon_);
}

std::size_t TrajectoryBuffer::episode_count() const {
  std::size_t n = 0;
  for (const auto& t : transitions_) n += (t.done || t.segment_end) ? 1 : 0;
  return n;
}

void TrajectoryBuffer::clear() {
  transitions_.clear();
  std::fill(bootstrap_.begin(), bootstrap_.end(), 0.0);
}

std::vector<double> gae(std::span<const double> rewards, std::span<const double> values,
                        double bootstrap_value, std::span<const bool> dones,
                        double gamma, double lambda) {
  check_lengths(rewards.size(), values.size(), dones.size());
  check_unit(gamma, "gamma");
  check_unit(lambda, "lambda");
  const std::size_t n = rewards.size();
  std::vector<double> adv(n);
  double next_value = bootstrap_value;
  double running = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const double live = dones[k] ? 0.0 : 1.0;
    const double delta = rewards[k] + gamma * next_value * live - values[k];
    running = delta + gamma * lambda * live * running;
    adv[k] = running;
    next_value = values[k];
  }
  return adv;
}

std::vector<double> td_lambda_targets(std::span<const double> rewards,
                                      std::span<const double> values,
                                      double bootstrap_value, std::span<const bool> dones,
                                      double gamma, double lambda) {
  check_lengths(rewards.size(), values.size(), dones.size());
  check_unit(gamma, "gamma");
  check_unit(lambda, "lambda");
  const std::size_t n = rewards.size();
  std::vector<double> g(n);
  double next_value = bootstrap_value;
  double next_return = bootstrap_value;
  for (std::size_t k = n; k-- > 0;) {
    const double live = dones[k] ? 0.0 : 1.0;
    g[k] = rewards[k] +
           gamma * live * ((1.0 - lambda) * next_value + lambda * next_return);
    next_value = values[k];
    next_return = g[k];
  }
  return g;
}

void PpoConfig::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("ppo.gamma must lie in (0, 1]");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) {
    throw ConfigError("ppo.gae_lambda must lie in [0, 1]");
  }
  if (!(td_lambda >= 0.0 && td_lambda <= 1.0)) {
    throw ConfigError("ppo.td_lambda must lie in [0, 1]");
  }
  if (!(clip > 0.0)) throw ConfigError("ppo.clip must be > 0");
  if (minibatch_size == 0) throw ConfigError("ppo.minibatch_size must be > 0");
  if (!(policy_lr > 0.0 && value_lr > 0.0 && disc_lr > 0.0)) {
    throw ConfigError("learning rates must be > 0");
  }
  if (!(lambda_gp >= 0.0)) throw ConfigError("lambda_gp must be >= 0");
}

double surrogate_log_prob_gradient(double ratio, double advantage, double clip) {
  const bool clipped = (advantage > 0.0 && ratio > 1.0 + clip) ||
                       (advantage < 0.0 && ratio < 1.0 - clip);
  return clipped ? 0.0 : advantage * ratio;
}

std::vector<double> normalize_advantages(std::span<const double> advantages) {
  const auto n = static_cast<double>(advantages.size());
  if (advantages.empty()) return {};
  const double mean = std::accumulate(advantages.begin(), advantages.end(), 0.0) / n;
  double var = 0.0;
  for (double a : advantages) var += (a - mean) * (a - mean);
  const double sd = std::max(std::sqrt(var / n), 1e-8);
  std::vector<double> out(advantages.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (advantages[i] - mean) / sd;
  return out;
}

MinibatchGradients ppo_gradients(const nets::GaussianPolicy& policy,
                                 const nets::Mlp& value_net, const ad::Tensor& observations,
                                 const ad::Tensor& actions, std::span<const double> old_log_probs,
                                 std::span<const double> advantages,
                                 std::span<const double> value_targets, double clip) {
  const std::size_t b = observations.rows();
  if (actions.rows() != b || old_log_probs.size() != b || advantages.size() != b ||
      value_targets.size() != b) {
    throw ShapeError("ppo minibatch arrays are not row-aligned");
  }
  MinibatchGradients out;
  {
    ad::Graph g;
    const nets::BoundMlp bound = policy.mean_net().bind(g);
    const ad::Var x = g.input(observations);
    const ad::Var lp = policy.log_prob(bound, x, actions);
    const ad::Var old = g.constant(ad::Tensor({b, 1}, {old_log_probs.begin(), old_log_probs.end()}));
    const ad::Var adv = g.constant(ad::Tensor({b, 1}, {advantages.begin(), advantages.end()}));
    const ad::Var ratio = ad::exp(lp - old);
    const ad::Var unclipped = ratio * adv;
    const ad::Var clipped = ad::clamp(ratio, 1.0 - clip, 1.0 + clip) * adv;
    // min(a, b) = a - relu(a - b); ties keep the unclipped branch.
    const ad::Var surrogate = unclipped - ad::relu(unclipped - clipped);
    const ad::Var loss = -ad::mean(surrogate);
    out.policy = values_of(g.gradient(loss, bound.params()));
    out.losses.policy = loss.value().item();
    std::size_t n_clipped = 0;
    for (double r : ratio.value().data()) n_clipped += std::abs(r - 1.0) > clip ? 1 : 0;
    out.losses.clip_fraction = static_cast<double>(n_clipped) / static_cast<double>(b);
  }
  {
    ad::Graph g;
    const nets::BoundMlp bound = value_net.bind(g);
    const ad::Var pred = bound.apply(g.input(observations));
    const ad::Var target =
        g.constant(ad::Tensor({b, 1}, {value_targets.begin(), value_targets.end()}));
    const ad::Var loss = ad::mean(ad::square(pred - target));
    out.value = values_of(g.gradient(loss, bound.params()));
    out.losses.value = loss.value().item();
  }
  return out;
}

void compute_targets(const TrajectoryBuffer& buffer, const PpoConfig& cfg,
                     std::vector<double>& advantages, std::vector<double>& targets) {
  advantages.assign(buffer.size(), 0.0);
  targets.assign(buffer.size(), 0.0);
  const std::size_t t_len = buffer.horizon();
  std::vector<double> r(t_len), v(t_len);
  std::unique_ptr<bool[]> d(new bool[t_len]);
  for (std::size_t i = 0; i < buffer.trajectories(); ++i) {
    const auto slot = buffer.slot(i);
    for (std::size_t t = 0; t < t_len; ++t) {
      r[t] = slot[t].reward;
      v[t] = slot[t].value;
      d[t] = slot[t].done;
    }
    const std::span<const bool> dones(d.get(), t_len);
    const double boot = buffer.bootstrap_values()[i];
    const auto a = gae(r, v, boot, dones, cfg.gamma, cfg.gae_lambda);
    const auto g = td_lambda_targets(r, v, boot, dones, cfg.gamma, cfg.td_lambda);
    std::copy(a.begin(), a.end(), advantages.begin() + static_cast<std::ptrdiff_t>(i * t_len));
    std::copy(g.begin(), g.end(), targets.begin() + static_cast<std::ptrdiff_t>(i * t_len));
  }
}

UpdateStats ppo_update(Learner& learner, const TrajectoryBuffer& buffer,
                       const PpoConfig& cfg, bool train_disc, Rng& rng) {
  if (buffer.empty()) throw std::invalid_argument("ppo_update: empty buffer");
  std::vector<double> advantages, targets;
  compute_targets(buffer, cfg, advantages, targets);

  const auto& tr = buffer.transitions();
  const std::size_t obs_dim = tr.front().observation.size();
  const std::size_t act_dim = tr.front().action.size();
  const std::size_t delta_dim = tr.front().delta.size();
  std::vector<std::size_t> order(tr.size());
  std::iota(order.begin(), order.end(), 0);

  UpdateStats stats;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.minibatch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.minibatch_size);
      std::vector<const std::vector<double>*> obs, act, del;
      std::vector<double> old_lp, adv, tgt;
      for (std::size_t k = start; k < end; ++k) {
        const Transition& t = tr[order[k]];
        obs.push_back(&t.observation);
        act.push_back(&t.action);
        del.push_back(&t.delta);
        old_lp.push_back(t.log_prob);
        adv.push_back(advantages[order[k]]);
        tgt.push_back(targets[order[k]]);
      }
      const ad::Tensor obs_t = stack_rows(obs, obs_dim);
      const ad::Tensor act_t = stack_rows(act, act_dim);

      if (train_disc) {
        const ad::Tensor negatives = learner.normalizer.normalize(stack_rows(del, delta_dim));
        ad::Graph g;
        const nets::BoundMlp bound = learner.disc.net().bind(g);
        const add::DiscLossTerms terms = add::disc_loss(g, learner.disc, bound, negatives,
                                                        cfg.gp_mode, cfg.lambda_gp, rng);
        const double loss = terms.loss.value().item();
        apply_step(*learner.disc_opt, learner.disc.net(),
                   values_of(g.gradient(terms.loss, bound.params())), cfg.max_grad_norm);
        stats.disc_loss += loss;
        stats.gradient_penalty += terms.penalty.value().item();
        stats.disc_updates += 1;
        stats.positive_samples += terms.positive_samples;
        stats.max_positive = std::max(stats.max_positive, terms.positive_samples);
      }

      MinibatchGradients grads =
          ppo_gradients(learner.policy, learner.value, obs_t, act_t, old_lp,
                        normalize_advantages(adv), tgt, cfg.clip);
      if (!std::isfinite(grads.losses.policy) || !std::isfinite(grads.losses.value)) {
        throw NumericError("non-finite PPO loss");
      }
      apply_step(*learner.value_opt, learner.value, std::move(grads.value),
                 cfg.max_grad_norm);
      apply_step(*learner.policy_opt, learner.policy.mean_net(), std::move(grads.policy),
                 cfg.max_grad_norm);
      stats.policy_loss += grads.losses.policy;
      stats.value_loss += grads.losses.value;
      stats.clip_fraction += grads.losses.clip_fraction;
      stats.minibatches += 1;
    }
  }
  if (stats.minibatches > 0) {
    const auto n = static_cast<double>(stats.minibatches);
    stats.policy_loss /= n;
    stats.value_loss /= n;
    stats.clip_fraction /= n;
  }
  if (stats.disc_updates > 0) {
    const auto n = static_cast<double>(stats.disc_updates);
    stats.disc_loss /= n;
    stats.gradient_penalty /= n;
  }
  return stats;
}

TrajectoryBuffer collect(std::vector<std::unique_ptr<Environment>>& envs,
                         const nets::GaussianPolicy& policy, const nets::Mlp& value_net,
                         const nets::Discriminator& disc,
                         const add::DeltaNormalizer& normalizer, RewardSource source,
                         std::size_t horizon, std::size_t iteration, Rng& rng,
                         CollectStats* stats, bool deterministic) {
  const std::size_t m = envs.size();
  if (m == 0 || horizon == 0) throw std::invalid_argument("collect: nothing to collect");
  const std::size_t obs_dim = envs.front()->observation_size();
  const std::size_t act_dim = envs.front()->action_size();
  const std::size_t delta_dim = envs.front()->delta_size();
  const std::size_t n_metrics = envs.front()->metric_names().size();

  TrajectoryBuffer buffer(m, horizon);
  auto& tr = buffer.transitions();
  tr.resize(m * horizon);

  std::vector<std::vector<double>> obs(m);
  for (std::size_t i = 0; i < m; ++i) obs[i] = envs[i]->reset(rng);

  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> z(act_dim, 0.0);
  double reward_sum = 0.0, manual_sum = 0.0, disc_sum = 0.0;
  std::vector<double> metric_sum(n_metrics, 0.0);
  ad::Tensor obs_batch({m, obs_dim});
  ad::Tensor delta_batch({m, delta_dim});
  std::vector<StepResult> results(m);

  for (std::size_t t = 0; t < horizon; ++t) {
    for (std::size_t i = 0; i < m; ++i) {
      if (obs[i].size() != obs_dim) throw ShapeError("observation size changed");
      std::copy(obs[i].begin(), obs[i].end(), obs_batch.row_span(i).begin());
    }
    const ad::Tensor means = policy.mean_net().evaluate(obs_batch);
    const ad::Tensor values = value_net.evaluate(obs_batch);
    for (std::size_t i = 0; i < m; ++i) {
      Transition& cur = tr[i * horizon + t];
      if (!deterministic) {
        for (double& v : z) v = normal(rng);
      }
      cur.action.resize(act_dim);
      for (std::size_t k = 0; k < act_dim; ++k) {
        cur.action[k] = means.at(i, k) + policy.sigma()[k] * z[k];
      }
      cur.log_prob = policy.log_prob(means.row_span(i), cur.action);
      cur.value = values.at(i, 0);
      cur.observation = obs[i];
      cur.iteration = iteration;
      cur.segment_end = t + 1 == horizon;
      results[i] = envs[i]->step(cur.action);
      if (results[i].delta.size() != delta_dim) throw ShapeError("delta size changed");
      std::copy(results[i].delta.begin(), results[i].delta.end(),
                delta_batch.row_span(i).begin());
    }
    ad::Tensor scores;
    if (source == RewardSource::kAdd) {
      scores = disc.score_batch(normalizer.normalize(delta_batch));
    }
    for (std::size_t i = 0; i < m; ++i) {
      Transition& cur = tr[i * horizon + t];
      StepResult& res = results[i];
      cur.reward = source == RewardSource::kAdd ? add::add_reward(scores.at(i, 0))
                                                : res.manual_reward;
      if (!std::isfinite(cur.reward)) throw NumericError("non-finite reward");
      cur.done = res.failed;
      cur.delta = std::move(res.delta);
      reward_sum += cur.reward;
      manual_sum += res.manual_reward;
      if (source == RewardSource::kAdd) disc_sum += scores.at(i, 0);
      for (std::size_t k = 0; k < n_metrics; ++k) metric_sum[k] += res.metrics.at(k);
      obs[i] = res.failed ? envs[i]->reset(rng) : std::move(res.observation);
    }
  }
  for (std::size_t i = 0; i < m; ++i) {
    std::copy(obs[i].begin(), obs[i].end(), obs_batch.row_span(i).begin());
  }
  const ad::Tensor last_values = value_net.evaluate(obs_batch);
  for (std::size_t i = 0; i < m; ++i) buffer.bootstrap_values()[i] = last_values.at(i, 0);

  if (stats != nullptr) {
    const auto steps = static_cast<double>(m * horizon);
    stats->mean_return = reward_sum / static_cast<double>(buffer.episode_count());
    stats->mean_manual_reward = manual_sum / steps;
    stats->mean_disc_negative = disc_sum / steps;
    stats->metrics.assign(n_metrics, 0.0);
    for (std::size_t k = 0; k < n_metrics; ++k) stats->metrics[k] = metric_sum[k] / steps;
  }
  return buffer;
}

Trainer::Trainer(const Environment& prototype, TrainerConfig config)
    : cfg_(std::move(config)), rng_(cfg_.seed) {
  cfg_.ppo.validate();
  if (cfg_.trajectories == 0 || cfg_.horizon == 0) {
    throw ConfigError("trajectories and horizon must be > 0");
  }
  if (!(cfg_.action_std > 0.0)) throw ConfigError("action_std must be > 0");
  for (std::size_t i = 0; i < cfg_.trajectories; ++i) envs_.push_back(prototype.clone());

  const std::size_t obs = prototype.observation_size();
  const std::size_t act = prototype.action_size();
  const std::size_t del = prototype.delta_size();
  auto sizes = [](std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
    std::vector<std::size_t> s{in};
    s.insert(s.end(), hidden.begin(), hidden.end());
    s.push_back(out);
    return s;
  };
  const std::uint64_t policy_seed = rng_();
  const std::uint64_t value_seed = rng_();
  const std::uint64_t disc_seed = rng_();
  learner_.policy = nets::GaussianPolicy(
      nets::Mlp::init(sizes(obs, cfg_.policy_hidden, act), cfg_.activation, policy_seed,
                      cfg_.policy_output_gain),
      std::vector<double>(act, cfg_.action_std));
  learner_.value = nets::Mlp::init(sizes(obs, cfg_.value_hidden, 1), cfg_.activation,
                                   value_seed);
  learner_.disc = nets::Discriminator(
      nets::Mlp::init(sizes(del, cfg_.disc_hidden, 1), cfg_.activation, disc_seed));
  learner_.normalizer = cfg_.normalize_delta
                            ? add::DeltaNormalizer(del, cfg_.normalizer_warmup)
                            : add::DeltaNormalizer::identity(del);
  const auto amp = prototype.delta_amplification();
  for (std::size_t k = 0; k < amp.size(); ++k) learner_.normalizer.set_amplification(k, amp[k]);
  learner_.policy_opt = std::make_unique<optim::SgdMomentum>(cfg_.ppo.policy_lr, cfg_.ppo.momentum);
  learner_.value_opt = std::make_unique<optim::SgdMomentum>(cfg_.ppo.value_lr, cfg_.ppo.momentum);
  learner_.disc_opt = std::make_unique<optim::SgdMomentum>(cfg_.ppo.disc_lr, cfg_.ppo.momentum);
}

IterationRecord Trainer::iterate() {
  IterationRecord rec;
  rec.iteration = iteration_;
  buffer_ = collect(envs_, learner_.policy, learner_.value, learner_.disc,
                    learner_.normalizer, cfg_.reward, cfg_.horizon, iteration_, rng_,
                    &rec.collect);
  const bool adversarial = cfg_.reward == RewardSource::kAdd;
  if (adversarial && !learner_.normalizer.frozen()) {
    ad::Tensor deltas({buffer_.size(), learner_.normalizer.dim()});
    for (std::size_t r = 0; r < buffer_.size(); ++r) {
      const auto& d = buffer_.transitions()[r].delta;
      std::copy(d.begin(), d.end(), deltas.row_span(r).begin());
    }
    learner_.normalizer.update(deltas);
  }
  rec.update = ppo_update(learner_, buffer_, cfg_.ppo, adversarial, rng_);
  disc_updates_ += rec.update.disc_updates;
  positive_samples_ += rec.update.positive_samples;
  max_positive_ = std::max(max_positive_, rec.update.max_positive);
  if (adversarial) {
    rec.disc_zero_score =
        learner_.disc.score(std::vector<double>(learner_.normalizer.dim(), 0.0));
  }
  samples_ += buffer_.size();
  rec.samples = samples_;
  ++iteration_;
  return rec;
}

std::vector<EpisodeSummary> rollout_episodes(const Environment& prototype,
                                             const Actor& actor, std::size_t episodes,
                                             std::size_t horizon, std::uint64_t seed,
                                             const std::function<double(const StepResult&)>&
                                                 reward_fn) {
  std::vector<EpisodeSummary> out;
  out.reserve(episodes);
  const std::size_t n_metrics = prototype.metric_names().size();
  for (std::size_t e = 0; e < episodes; ++e) {
    std::unique_ptr<Environment> env = prototype.clone();
    Rng rng(episode_seed(seed, e));
    std::vector<double> obs = env->reset(rng);
    EpisodeSummary summary;
    summary.metrics.assign(n_metrics, 0.0);
    std::size_t steps = 0;
    for (; steps < horizon; ++steps) {
      const std::vector<double> action = actor(*env, obs);
      StepResult res = env->step(action);
      summary.return_sum += reward_fn(res);
      for (std::size_t k = 0; k < n_metrics; ++k) summary.metrics[k] += res.metrics.at(k);
      if (res.failed) {
        ++steps;
        break;
      }
      obs = std::move(res.observation);
    }
    for (double& v : summary.metrics) v /= static_cast<double>(std::max<std::size_t>(steps, 1));
    out.push_back(std::move(summary));
  }
  return out;
}

}  // namespace advdiff::rl

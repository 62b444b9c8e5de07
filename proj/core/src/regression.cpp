#include "advdiff/regression.hpp"

#include <cmath>
#include <stdexcept>

#include "advdiff/error.hpp"

namespace advdiff::regression {
namespace {

std::vector<ad::Tensor> values_of(const std::vector<ad::Var>& vars) {
  std::vector<ad::Tensor> out;
  out.reserve(vars.size());
  for (const auto& v : vars) out.push_back(v.value());
  return out;
}

void step(optim::Optimizer& opt, nets::Mlp& net, const std::vector<ad::Tensor>& grads) {
  std::vector<ad::Tensor*> params = net.parameters();
  opt.step(params, grads);
}

std::vector<std::size_t> layer_sizes(std::size_t in, const std::vector<std::size_t>& hidden,
                                     std::size_t out) {
  std::vector<std::size_t> s{in};
  s.insert(s.end(), hidden.begin(), hidden.end());
  s.push_back(out);
  return s;
}

void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericError(std::string("non-finite ") + what);
}

}  // namespace

double target_function(double x) { return std::cos(std::pow(x, 2.5)); }

RegressionTask RegressionTask::sample(std::size_t points, double x_max, std::uint64_t seed) {
  if (points == 0 || !(x_max > 0.0)) throw ConfigError("invalid regression dataset size");
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, x_max);
  RegressionTask task;
  task.x.resize(points);
  task.target.resize(points);
  for (std::size_t i = 0; i < points; ++i) {
    task.x[i] = unif(rng);
    task.target[i] = target_function(task.x[i]);
  }
  return task;
}

ad::Tensor RegressionTask::inputs() const { return ad::Tensor({x.size(), 1}, x); }

std::vector<double> RegressionTask::delta(std::span<const double> prediction) const {
  if (prediction.size() != size()) throw ShapeError("prediction size mismatch");
  std::vector<double> d(size());
  for (std::size_t i = 0; i < size(); ++i) d[i] = target[i] - prediction[i];
  return d;
}

double RegressionTask::mse(std::span<const double> prediction) const {
  const auto d = delta(prediction);
  double s = 0.0;
  for (double v : d) s += v * v;
  return s / static_cast<double>(d.size());
}

void RegressionConfig::validate() const {
  if (points == 0) throw ConfigError("regression.points must be > 0");
  if (!(x_max > 0.0)) throw ConfigError("regression.x_max must be > 0");
  if (!(lambda_gp >= 0.0)) throw ConfigError("regression.lambda_gp must be >= 0");
  if (!(generator_lr > 0.0 && disc_lr > 0.0)) {
    throw ConfigError("regression learning rates must be > 0");
  }
  if (disc_steps == 0) throw ConfigError("regression.disc_steps must be > 0");
  if (log_every == 0 || snapshot_every == 0) {
    throw ConfigError("regression log/snapshot intervals must be > 0");
  }
}

nets::Mlp make_generator(const RegressionConfig& cfg) {
  return nets::Mlp::init(layer_sizes(1, cfg.generator_hidden, 1), cfg.activation, cfg.seed);
}

nets::Discriminator make_discriminator(const RegressionConfig& cfg) {
  return nets::Discriminator(nets::Mlp::init(layer_sizes(cfg.points, cfg.disc_hidden, 1),
                                             cfg.activation, cfg.seed + 1,
                                             cfg.disc_output_gain));
}

std::vector<double> predict(const nets::Mlp& generator, const RegressionTask& task) {
  return generator.evaluate(task.inputs()).storage();
}

std::vector<double> gradient_magnitudes(const nets::Discriminator& disc,
                                        std::span<const double> delta) {
  const ad::Tensor g = add::score_input_gradient(disc, ad::Tensor::row(delta));
  std::vector<double> out(g.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::abs(g[i]);
  return out;
}

double region_mean(std::span<const double> values, std::span<const double> x, double lo,
                   double hi) {
  if (values.size() != x.size()) throw ShapeError("region_mean: size mismatch");
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] >= lo && x[i] < hi) {
      s += values[i];
      ++n;
    }
  }
  if (n == 0) throw std::invalid_argument("region_mean: empty region");
  return s / static_cast<double>(n);
}

RegressionResult regression_train(const RegressionTask& task, const RegressionConfig& cfg,
                                  const std::function<void(const RegressionLog&)>& on_log) {
  cfg.validate();
  if (task.size() != cfg.points) throw ShapeError("task size differs from config.points");
  RegressionResult res;
  res.generator = make_generator(cfg);
  res.disc = make_discriminator(cfg);
  auto g_opt = optim::make_optimizer(cfg.optimizer, cfg.generator_lr);
  auto d_opt = optim::make_optimizer(cfg.optimizer, cfg.disc_lr);
  Rng rng(cfg.seed + 2);
  const ad::Tensor inputs = task.inputs();
  const std::size_t n = task.size();
  const std::vector<double> zero(n, 0.0);

  auto snapshot = [&](std::size_t at) {
    const auto delta = task.delta(predict(res.generator, task));
    res.snapshots.push_back({at, gradient_magnitudes(res.disc, delta)});
  };
  snapshot(0);

  for (std::size_t it = 0; it < cfg.steps; ++it) {
    RegressionLog entry;
    entry.step = it + 1;
    ad::Tensor delta_row;
    {
      ad::Graph g;
      const nets::BoundMlp gen = res.generator.bind(g);
      const nets::BoundMlp dis = res.disc.net().bind(g);
      const ad::Var pred = gen.apply(g.input(inputs));
      const ad::Var target = g.constant(ad::Tensor({n, 1}, task.target));
      const ad::Var delta = ad::transpose(target - pred);
      const ad::Var loss = -res.disc.log_score(dis, delta);
      entry.generator_loss = loss.value().item();
      check_finite(entry.generator_loss, "generator loss");
      step(*g_opt, res.generator, values_of(g.gradient(loss, gen.params())));
    }
    delta_row = ad::Tensor::row(task.delta(predict(res.generator, task)));
    for (std::size_t k = 0; k < cfg.disc_steps; ++k) {
      ad::Graph g;
      const nets::BoundMlp dis = res.disc.net().bind(g);
      const add::DiscLossTerms terms =
          add::disc_loss(g, res.disc, dis, delta_row, cfg.gp_mode, cfg.lambda_gp, rng);
      entry.disc_loss = terms.loss.value().item();
      entry.gradient_penalty = terms.penalty.value().item();
      check_finite(entry.disc_loss, "discriminator loss");
      step(*d_opt, res.disc.net(), values_of(g.gradient(terms.loss, dis.params())));
    }
    if (entry.step % cfg.log_every == 0 || entry.step == cfg.steps) {
      entry.mse = task.mse(predict(res.generator, task));
      entry.disc_zero = res.disc.score(zero);
      entry.disc_current = res.disc.score(delta_row.data());
      res.log.push_back(entry);
      if (on_log) on_log(entry);
    }
    if (entry.step % cfg.snapshot_every == 0 && entry.step != cfg.steps) snapshot(entry.step);
  }
  if (cfg.steps > 0) snapshot(cfg.steps);
  res.final_mse = task.mse(predict(res.generator, task));
  return res;
}

RegressionResult l2_reference_train(const RegressionTask& task, const RegressionConfig& cfg) {
  cfg.validate();
  RegressionResult res;
  res.generator = make_generator(cfg);
  auto opt = optim::make_optimizer(cfg.optimizer, cfg.generator_lr);
  const ad::Tensor inputs = task.inputs();
  const ad::Tensor targets({task.size(), 1}, task.target);
  for (std::size_t it = 0; it < cfg.steps; ++it) {
    ad::Graph g;
    const nets::BoundMlp gen = res.generator.bind(g);
    const ad::Var loss = ad::mean(ad::square(g.constant(targets) - gen.apply(g.input(inputs))));
    check_finite(loss.value().item(), "reference loss");
    step(*opt, res.generator, values_of(g.gradient(loss, gen.params())));
    if ((it + 1) % cfg.log_every == 0 || it + 1 == cfg.steps) {
      RegressionLog entry;
      entry.step = it + 1;
      entry.mse = task.mse(predict(res.generator, task));
      res.log.push_back(entry);
    }
  }
  res.final_mse = task.mse(predict(res.generator, task));
  return res;
}

}  // namespace advdiff::regression

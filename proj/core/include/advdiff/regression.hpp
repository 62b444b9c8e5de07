#ifndef ADVDIFF_REGRESSION_HPP_
#define ADVDIFF_REGRESSION_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "advdiff/add_core.hpp"
#include "advdiff/nets.hpp"
#include "advdiff/optim.hpp"

namespace advdiff::regression {

// cos(x^2.5).
double target_function(double x);

// N inputs drawn uniformly from [0, x_max] and their targets.
struct RegressionTask {
  std::vector<double> x;
  std::vector<double> target;

  static RegressionTask sample(std::size_t points, double x_max, std::uint64_t seed);
  std::size_t size() const noexcept { return x.size(); }
  ad::Tensor inputs() const;  // (N x 1)

  // target - prediction, entrywise.
  std::vector<double> delta(std::span<const double> prediction) const;
  double mse(std::span<const double> prediction) const;
};

struct RegressionConfig {
  std::size_t points = 512;
  double x_max = 4.3;
  std::vector<std::size_t> generator_hidden{256, 128};
  std::vector<std::size_t> disc_hidden{256, 128};
  nets::Activation activation = nets::Activation::kRelu;
  double disc_output_gain = 0.01;  // scale of the discriminator's last-layer init
  std::size_t steps = 4000;
  std::size_t disc_steps = 1;  // discriminator updates per generator update
  double lambda_gp = 0.1;
  double generator_lr = 1e-4;
  double disc_lr = 1e-5;
  optim::OptimizerKind optimizer = optim::OptimizerKind::kSgdMomentum;
  add::GpMode gp_mode = add::GpMode::kNeg;
  std::size_t log_every = 100;
  std::size_t snapshot_every = 1000;
  std::uint64_t seed = 1;

  void validate() const;
};

// Per-sample |dD/dDelta_i| at one step.
struct GradientSnapshot {
  std::size_t step = 0;
  std::vector<double> magnitude;
};

struct RegressionLog {
  std::size_t step = 0;
  double mse = 0.0;
  double generator_loss = 0.0;
  double disc_loss = 0.0;
  double gradient_penalty = 0.0;
  double disc_zero = 0.0;     // D(0)
  double disc_current = 0.0;  // D(Delta) of the current generator
};

struct RegressionResult {
  nets::Mlp generator;
  nets::Discriminator disc;
  std::vector<GradientSnapshot> snapshots;  // step 0 and every snapshot_every, plus final
  std::vector<RegressionLog> log;
  double final_mse = 0.0;
};

nets::Mlp make_generator(const RegressionConfig& cfg);
nets::Discriminator make_discriminator(const RegressionConfig& cfg);

std::vector<double> predict(const nets::Mlp& generator, const RegressionTask& task);

// Alternating updates: G minimizes -log D(Delta(theta)) through the full
// N-entry differential, then D takes one step on the adversarial objective
// disc_steps times with the current Delta as its negative.
RegressionResult regression_train(const RegressionTask& task, const RegressionConfig& cfg,
                                  const std::function<void(const RegressionLog&)>& on_log = {});

// Same generator, optimizer and step budget trained on the mean squared error.
RegressionResult l2_reference_train(const RegressionTask& task, const RegressionConfig& cfg);

std::vector<double> gradient_magnitudes(const nets::Discriminator& disc,
                                        std::span<const double> delta);

// Mean of values[i] over samples with lo <= x[i] < hi.
double region_mean(std::span<const double> values, std::span<const double> x, double lo,
                   double hi);

}  // namespace advdiff::regression

#endif  // ADVDIFF_REGRESSION_HPP_

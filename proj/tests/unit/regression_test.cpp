#include "advdiff/regression.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "advdiff/error.hpp"
#include "test_util.hpp"

namespace advdiff::regression {
namespace {

RegressionConfig tiny(std::size_t steps = 5) {
  RegressionConfig cfg;
  cfg.points = 16;
  cfg.generator_hidden = {8};
  cfg.disc_hidden = {8};
  cfg.steps = steps;
  cfg.log_every = 1;
  cfg.snapshot_every = 2;
  return cfg;
}

TEST(Target, CosineOfPower) {
  EXPECT_EQ(target_function(0.0), 1.0);
  EXPECT_NEAR(target_function(1.0), std::cos(1.0), 1e-15);
  EXPECT_NEAR(target_function(2.0), std::cos(std::pow(2.0, 2.5)), 1e-15);
}

TEST(Task, SampledOnTheIntervalAndSeeded) {
  const auto a = RegressionTask::sample(512, 4.3, 7);
  const auto b = RegressionTask::sample(512, 4.3, 7);
  const auto c = RegressionTask::sample(512, 4.3, 8);
  ASSERT_EQ(a.size(), 512u);
  EXPECT_EQ(a.x, b.x);
  EXPECT_NE(a.x, c.x);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_GE(a.x[i], 0.0);
    EXPECT_LE(a.x[i], 4.3);
    EXPECT_EQ(a.target[i], target_function(a.x[i]));
  }
  EXPECT_EQ(a.inputs().rows(), 512u);
}

TEST(Task, DeltaAndMse) {
  const auto task = RegressionTask::sample(8, 4.3, 1);
  EXPECT_EQ(task.delta(task.target), std::vector<double>(8, 0.0));
  EXPECT_EQ(task.mse(task.target), 0.0);
  std::vector<double> shifted = task.target;
  for (double& v : shifted) v -= 0.5;
  for (double d : task.delta(shifted)) EXPECT_NEAR(d, 0.5, 1e-15);
  EXPECT_NEAR(task.mse(shifted), 0.25, 1e-15);
  EXPECT_THROW(task.mse(std::vector<double>(3, 0.0)), ShapeError);
}

TEST(Train, PerfectPredictionLossIsMinusLogDAtZero) {
  const auto cfg = tiny();
  const auto disc = make_discriminator(cfg);
  ad::Graph g;
  const auto bound = disc.net().bind(g);
  const auto x = g.input(ad::Tensor({1, cfg.points}, 0.0));
  const double loss = -disc.log_score(bound, x).value().item();
  EXPECT_NEAR(loss, -std::log(disc.score(std::vector<double>(cfg.points, 0.0))), 1e-12);
}

TEST(Train, FirstGeneratorLossUsesInitialNetworks) {
  const auto cfg = tiny(1);
  const auto task = RegressionTask::sample(cfg.points, cfg.x_max, 3);
  const auto gen = make_generator(cfg);
  const auto disc = make_discriminator(cfg);
  const auto delta = task.delta(predict(gen, task));
  const auto res = regression_train(task, cfg);
  ASSERT_EQ(res.log.size(), 1u);
  EXPECT_NEAR(res.log[0].generator_loss, -std::log(disc.score(delta)), 1e-12);
  EXPECT_EQ(res.snapshots.front().magnitude, gradient_magnitudes(disc, delta));
}

TEST(Train, LogsAndSnapshotsFollowTheSchedule) {
  const auto cfg = tiny(5);
  const auto task = RegressionTask::sample(cfg.points, cfg.x_max, 4);
  std::size_t callbacks = 0;
  const auto res = regression_train(task, cfg, [&](const RegressionLog&) { ++callbacks; });
  EXPECT_EQ(res.log.size(), 5u);
  EXPECT_EQ(callbacks, 5u);
  std::vector<std::size_t> steps;
  for (const auto& s : res.snapshots) steps.push_back(s.step);
  EXPECT_EQ(steps, (std::vector<std::size_t>{0, 2, 4, 5}));
  for (const auto& s : res.snapshots) EXPECT_EQ(s.magnitude.size(), cfg.points);
  EXPECT_EQ(res.final_mse, res.log.back().mse);
}

TEST(Train, SameSeedSameResult) {
  const auto cfg = tiny(4);
  const auto task = RegressionTask::sample(cfg.points, cfg.x_max, 5);
  const auto a = regression_train(task, cfg);
  const auto b = regression_train(task, cfg);
  EXPECT_EQ(a.generator.flatten(), b.generator.flatten());
  EXPECT_EQ(a.disc.net().flatten(), b.disc.net().flatten());
}

TEST(Train, RejectsSizeMismatch) {
  const auto cfg = tiny();
  EXPECT_THROW(regression_train(RegressionTask::sample(4, 4.3, 1), cfg), ShapeError);
  auto bad = cfg;
  bad.points = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Reference, L2TrainingReducesError) {
  auto cfg = tiny(300);
  cfg.generator_lr = 1e-2;
  cfg.log_every = 100;
  const auto task = RegressionTask::sample(cfg.points, cfg.x_max, 6);
  const double before = task.mse(predict(make_generator(cfg), task));
  const auto res = l2_reference_train(task, cfg);
  EXPECT_LT(res.final_mse, before);
  EXPECT_EQ(res.log.size(), 3u);
}

TEST(Gradients, MagnitudesMatchFiniteDifferences) {
  const auto cfg = tiny();
  auto disc = make_discriminator(cfg);
  std::mt19937_64 rng(2);
  // A larger last layer keeps the finite differences well above round-off.
  auto& last = disc.net().layers().back().weight;
  last = testing::random_tensor(last.shape(), rng);
  const auto delta = testing::random_tensor({cfg.points}, rng).storage();
  const auto fd = testing::central_difference(
      [&](const std::vector<double>& d) { return disc.score(d); }, delta, 1e-6);
  const auto mags = gradient_magnitudes(disc, delta);
  for (std::size_t i = 0; i < cfg.points; ++i) {
    EXPECT_NEAR(mags[i], std::abs(fd[i]), 1e-7 + 1e-4 * std::abs(fd[i]));
  }
}

TEST(Gradients, RegionMean) {
  const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
  const std::vector<double> x{0.1, 0.5, 1.5, 2.5};
  EXPECT_DOUBLE_EQ(region_mean(v, x, 0.0, 1.0), 1.5);
  EXPECT_DOUBLE_EQ(region_mean(v, x, 1.0, 3.0), 3.5);
}

}  // namespace
}  // namespace advdiff::regression

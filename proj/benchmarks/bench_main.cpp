#include <benchmark/benchmark.h>

#include <memory>
#include <random>
#include <vector>

#include "advdiff/add_core.hpp"
#include "advdiff/autodiff.hpp"
#include "advdiff/envs.hpp"
#include "advdiff/nets.hpp"
#include "advdiff/rl.hpp"

namespace {

using namespace advdiff;

ad::Tensor random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  ad::Tensor t({rows, cols});
  for (double& v : t.data()) v = n(rng);
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const ad::Tensor a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
  for (auto _ : state) {
    ad::Graph g;
    benchmark::DoNotOptimize(ad::matmul(g.input(a), g.input(b)).value());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

void BM_MlpForward(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  const nets::Mlp net = nets::mlp_init({8, 256, 128, 2}, nets::Activation::kRelu, 3);
  const ad::Tensor x = random_matrix(batch, 8, 4);
  for (auto _ : state) benchmark::DoNotOptimize(net.evaluate(x));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(batch));
}
BENCHMARK(BM_MlpForward)->Arg(1)->Arg(64)->Arg(256);

void BM_MlpBackward(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  const nets::Mlp net = nets::mlp_init({8, 256, 128, 2}, nets::Activation::kRelu, 5);
  const ad::Tensor x = random_matrix(batch, 8, 6);
  for (auto _ : state) {
    ad::Graph g;
    const auto bound = net.bind(g);
    const ad::Var loss = ad::mean(ad::square(bound.apply(g.input(x))));
    benchmark::DoNotOptimize(g.gradient(loss, bound.params()));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(batch));
}
BENCHMARK(BM_MlpBackward)->Arg(64)->Arg(256);

void BM_DiscLossWithPenalty(benchmark::State& state) {
  const auto mode = static_cast<add::GpMode>(state.range(0));
  const nets::Discriminator disc(nets::mlp_init({4, 256, 128, 1}, nets::Activation::kRelu, 7));
  const ad::Tensor neg = random_matrix(256, 4, 8);
  Rng rng(9);
  for (auto _ : state) {
    ad::Graph g;
    const auto bound = disc.net().bind(g);
    const auto terms = add::disc_loss(g, disc, bound, neg, mode, 1e-3, rng);
    benchmark::DoNotOptimize(g.gradient(terms.loss, bound.params()));
  }
  state.SetLabel(std::string(add::to_string(mode)));
}
BENCHMARK(BM_DiscLossWithPenalty)
    ->Arg(static_cast<int>(add::GpMode::kNone))
    ->Arg(static_cast<int>(add::GpMode::kNeg))
    ->Arg(static_cast<int>(add::GpMode::kBoth))
    ->Arg(static_cast<int>(add::GpMode::kWganGp));

void BM_Gae(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const ad::Tensor r = random_matrix(1, n, 10), v = random_matrix(1, n, 11);
  std::unique_ptr<bool[]> done(new bool[n]());
  const std::span<const bool> dones(done.get(), n);
  for (auto _ : state) {
    benchmark::DoNotOptimize(rl::gae(r.data(), v.data(), 0.0, dones, 0.99, 0.95));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n));
}
BENCHMARK(BM_Gae)->Arg(150)->Arg(4800);

void BM_PointMassStep(benchmark::State& state) {
  envs::PointMassEnv env;
  Rng rng(12);
  env.reset(rng);
  const std::vector<double> action{0.1, -0.1};
  for (auto _ : state) benchmark::DoNotOptimize(env.step(action));
}
BENCHMARK(BM_PointMassStep);

}  // namespace

BENCHMARK_MAIN();

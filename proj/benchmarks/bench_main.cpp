#include <benchmark/benchmark.h>

#include "wcgan/ops.hpp"
#include "wcgan/orchestrator.hpp"
#include "wcgan/stats.hpp"

namespace wcgan {
namespace {

Tensor uniform(Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor(std::move(shape), std::move(v), true);
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = uniform({n, n}, 1), b = uniform({n, n}, 2);
  for (auto _ : state) {
    Graph g;
    benchmark::DoNotOptimize(matmul(g, a, b).data().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(32, 256);

// Forward and backward of one stride-2 critic block on a 32×32 batch.
void BM_Conv2dForwardBackward(benchmark::State& state) {
  const auto channels = static_cast<std::size_t>(state.range(0));
  const auto x = uniform({16, channels, 32, 32}, 3);
  const auto w = uniform({2 * channels, channels, 3, 3}, 4);
  const auto bias = uniform({2 * channels}, 5);
  for (auto _ : state) {
    Graph g;
    const auto loss = sum(g, conv2d(g, x, w, bias, 2, 1));
    g.backward(loss);
    benchmark::ClobberMemory();
  }
}
BENCHMARK(BM_Conv2dForwardBackward)->Arg(3)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

// One epoch of 16 minibatches for a 2-D mixture pair: 16 critic and
// 3 generator updates.
void BM_TrainEpoch(benchmark::State& state) {
  const auto spec = ring_mixture(1, 2, 0.5, 0.3, 0.1, 0);
  const auto shards = synth_conditional_mixture(spec, 1024);
  const auto pair = default_vector_pair(2, 8, CriticVariant::wasserstein);
  LoopConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 64;
  for (auto _ : state) {
    auto st = TrainingState::create(pair.gen, pair.disc, cfg, 1, 2);
    benchmark::DoNotOptimize(train_pair(std::move(st), shards[0]).metrics.size());
  }
}
BENCHMARK(BM_TrainEpoch)->Unit(benchmark::kMillisecond);

void BM_FrechetDistance(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  const auto a = feature_summary(uniform({4 * d, d}, 6)), b = feature_summary(uniform({4 * d, d}, 7));
  for (auto _ : state) benchmark::DoNotOptimize(frechet_distance(a, b));
}
BENCHMARK(BM_FrechetDistance)->Arg(2)->Arg(64)->Arg(256);

}  // namespace
}  // namespace wcgan

BENCHMARK_MAIN();

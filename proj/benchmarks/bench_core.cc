#include <benchmark/benchmark.h>

#include <random>

#include "finegrain/aggregator.h"
#include "finegrain/evaluation.h"
#include "finegrain/mlp.h"

using namespace finegrain;

static void BM_RocAuc(benchmark::State& state) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> noise;
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<double> scores(n);
  std::vector<bool> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = rng() & 1;
    scores[i] = noise(rng) + (labels[i] ? 0.5 : 0.0);
  }
  for (auto _ : state) benchmark::DoNotOptimize(roc_auc(scores, labels));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_RocAuc)->Arg(1000)->Arg(100000);

static void BM_MlpEpoch(benchmark::State& state) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> noise;
  const std::size_t n = 1024, dim = 64, heads = static_cast<std::size_t>(state.range(0));
  std::vector<std::vector<double>> x(n, std::vector<double>(dim));
  std::vector<std::vector<double>> y(n, std::vector<double>(heads));
  for (std::size_t i = 0; i < n; ++i) {
    for (double& v : x[i]) v = noise(rng);
    for (double& v : y[i]) v = static_cast<double>(rng() & 1);
  }
  MlpConfig config;
  config.input_dim = dim;
  config.n_heads = heads;
  config.epochs = 1;
  for (auto _ : state) benchmark::DoNotOptimize(mlp_train(config, x, y));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_MlpEpoch)->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);

static void BM_AggregatorTrain(benchmark::State& state) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<std::vector<double>> x(n, std::vector<double>(8));
  std::vector<bool> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (double& v : x[i]) s += v = unit(rng);
    y[i] = s + unit(rng) > 4.5;
  }
  for (auto _ : state) benchmark::DoNotOptimize(aggregator_train(x, y));
}
BENCHMARK(BM_AggregatorTrain)->Arg(500)->Arg(5000)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();

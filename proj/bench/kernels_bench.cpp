// Serial reference kernels against their OpenMP counterparts.
#include <benchmark/benchmark.h>

#include <random>

#include "oaflow/costvol.hpp"
#include "oaflow/sgm.hpp"
#include "oaflow/tensor.hpp"

using namespace oaflow;

namespace {

FeatureMap random_features(int w, int h, int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  FeatureMap f;
  f.width = w;
  f.height = h;
  f.dim = dim;
  f.values.resize(static_cast<size_t>(w) * h * dim);
  for (auto& v : f.values) v = n(rng);
  return f;
}

const SearchWindow kWindow{-24, 24, -12, 12};

void BM_CostVolumeReference(benchmark::State& st) {
  const auto f1 = random_features(64, 48, 8, 1), f2 = random_features(64, 48, 8, 2);
  for (auto _ : st) benchmark::DoNotOptimize(reference::build_cost_volume(f1, f2, kWindow, 30));
}
void BM_CostVolumeParallel(benchmark::State& st) {
  const auto f1 = random_features(64, 48, 8, 1), f2 = random_features(64, 48, 8, 2);
  for (auto _ : st) benchmark::DoNotOptimize(build_cost_volume(f1, f2, kWindow, 30));
}
void BM_AggregateReference(benchmark::State& st) {
  const auto cv = build_cost_volume(random_features(64, 48, 8, 1), random_features(64, 48, 8, 2), kWindow, 30);
  for (auto _ : st) benchmark::DoNotOptimize(reference::aggregate(cv, 4, 5));
}
void BM_AggregateParallel(benchmark::State& st) {
  const auto cv = build_cost_volume(random_features(64, 48, 8, 1), random_features(64, 48, 8, 2), kWindow, 30);
  for (auto _ : st) benchmark::DoNotOptimize(aggregate(cv, 4, 5));
}

Tensor random_tensor(int n, int c, int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  Tensor t(n, c, h, w);
  for (auto& v : t.data) v = u(rng);
  return t;
}
ConvWeights random_conv(int cin, int cout) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  ConvWeights c{cin, cout, std::vector<double>(static_cast<size_t>(cin) * cout * 9), std::vector<double>(cout)};
  for (auto& v : c.weight) v = u(rng);
  for (auto& v : c.bias) v = u(rng);
  return c;
}

void BM_ConvReference(benchmark::State& st) {
  const Tensor in = random_tensor(4, 32, 66, 130, 4);
  const ConvWeights c = random_conv(32, 32);
  for (auto _ : st) benchmark::DoNotOptimize(reference::conv3x3_forward(in, c));
}
void BM_ConvParallel(benchmark::State& st) {
  const Tensor in = random_tensor(4, 32, 66, 130, 4);
  const ConvWeights c = random_conv(32, 32);
  for (auto _ : st) benchmark::DoNotOptimize(conv3x3_forward(in, c));
}

void BM_SgmFourDirections(benchmark::State& st) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 100);
  CostGrid g(256, 128, 96);
  for (auto& v : g.costs) v = u(rng);
  const Mask all(256, 128, 1);
  for (auto _ : st) benchmark::DoNotOptimize(sgm_aggregate(g, all, SgmPenalties{}, SgmDirections::four));
}

}  // namespace

BENCHMARK(BM_CostVolumeReference)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CostVolumeParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AggregateReference)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AggregateParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvReference)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SgmFourDirections)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();

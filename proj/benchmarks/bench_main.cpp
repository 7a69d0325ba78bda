#include <benchmark/benchmark.h>

#include "sflab/attacks.hpp"
#include "sflab/data.hpp"
#include "sflab/ops.hpp"
#include "sflab/spectral.hpp"

using namespace sflab;

namespace {

Tensor uniform(std::uint64_t seed, Shape shape) {
  Rng rng(seed);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform01();
  return t;
}

void BM_Conv2d3x3(benchmark::State& state) {
  const auto n = state.range(0);
  const Tensor x = uniform(1, Shape{n, 128, 4, 4});
  const Tensor k = uniform(2, Shape{128, 128, 3, 3});
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, k, 1, 1));
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_Conv2d3x3)->Arg(1)->Arg(64);

void BM_SfStem(benchmark::State& state) {
  const auto n = state.range(0);
  const Tensor x = uniform(3, Shape{n, 3, 32, 32});
  const Tensor& bank = spectral::sf_kernel_bank().weights;
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, bank, 8, 0));
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_SfStem)->Arg(64);

void BM_BlockDctForward(benchmark::State& state) {
  const auto n = state.range(0);
  const Tensor x = uniform(4, Shape{n, 3, 32, 32});
  for (auto _ : state) benchmark::DoNotOptimize(spectral::block_dct_forward(x));
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_BlockDctForward)->Arg(64);

void BM_BlockDctInverse(benchmark::State& state) {
  const auto n = state.range(0);
  const Tensor f = spectral::block_dct_forward(uniform(5, Shape{n, 3, 32, 32}));
  for (auto _ : state) benchmark::DoNotOptimize(spectral::block_dct_inverse(f));
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_BlockDctInverse)->Arg(64);

// One PGD iteration is one input-gradient evaluation plus the projection.
void BM_PgdStep(benchmark::State& state) {
  const auto n = state.range(0);
  SyntheticConfig cfg;
  cfg.count = n;
  const Dataset d = make_synthetic(cfg);
  const auto model = build_model(ModelSpec::sf(10, 0));
  for (auto _ : state) benchmark::DoNotOptimize(pgd_pixel_images(model, d.images, d.labels, 0.01f, 0.003f, 1));
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_PgdStep)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_FrequencyPgdStep(benchmark::State& state) {
  const auto n = state.range(0);
  SyntheticConfig cfg;
  cfg.count = n;
  const Dataset d = make_synthetic(cfg);
  const auto model = build_model(ModelSpec::sf(10, 0));
  const AttackConfig attack{AttackDomain::kFrequency, 0.01f, 0.003f, 1};
  for (auto _ : state) benchmark::DoNotOptimize(pgd_frequency(model, d.images, d.labels, attack));
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_FrequencyPgdStep)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();

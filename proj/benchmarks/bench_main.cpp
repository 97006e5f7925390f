#include <benchmark/benchmark.h>

#include "freegauss/freeloss.hpp"
#include "freegauss/gaussmetrics.hpp"
#include "freegauss/matcore.hpp"
#include "freegauss/neural.hpp"
#include "freegauss/rmt.hpp"

using freegauss::Matrix;
using freegauss::Rng;

// Every benchmark takes (d, b) as its arguments; codes are d x b.
static void ShapeArgs(benchmark::internal::Benchmark* b) {
  b->Args({4, 32})->Args({32, 256})->Args({64, 512})->Unit(benchmark::kMicrosecond);
}

static void BM_Svd(benchmark::State& state) {
  Rng rng(1);
  const Matrix y = freegauss::sample_gaussian(rng, state.range(0), state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(freegauss::svd(y));
}
BENCHMARK(BM_Svd)->Apply(ShapeArgs);

static void BM_FreeLossWithGrad(benchmark::State& state) {
  Rng rng(2);
  const Matrix y = freegauss::sample_gaussian(rng, state.range(0), state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(freegauss::freeloss::free_loss_with_grad(y));
}
BENCHMARK(BM_FreeLossWithGrad)->Apply(ShapeArgs);

static void BM_OtCost(benchmark::State& state) {
  Rng rng(3);
  const Matrix a = freegauss::sample_gaussian(rng, state.range(0), state.range(1));
  const Matrix c = freegauss::sample_gaussian(rng, state.range(0), state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(freegauss::gaussmetrics::ot_cost(a, c));
}
BENCHMARK(BM_OtCost)->Apply(ShapeArgs);

static void BM_EncoderForwardBackward(benchmark::State& state) {
  namespace nn = freegauss::neural;
  Rng rng(4);
  const auto d = static_cast<int>(state.range(0));
  const nn::Mlp net = nn::init_params(nn::encoder_shape(d), rng);
  const Matrix x = freegauss::sample_gaussian(rng, 2, state.range(1));
  const Matrix dy = Matrix::Ones(d, state.range(1));
  for (auto _ : state) {
    auto fwd = nn::forward(net, x);
    benchmark::DoNotOptimize(nn::backward(net, std::move(fwd.tape), dy));
  }
}
BENCHMARK(BM_EncoderForwardBackward)->Apply(ShapeArgs);

static void BM_MpSupDistance(benchmark::State& state) {
  Rng rng(5);
  const Matrix y = freegauss::sample_gaussian(rng, state.range(0), state.range(1));
  const auto m = freegauss::rmt::esd_from_matrix(y, true);
  const auto p = freegauss::rmt::MpParams::from_shape(static_cast<double>(state.range(0)) /
                                                      static_cast<double>(state.range(1)));
  for (auto _ : state) benchmark::DoNotOptimize(freegauss::rmt::mp_sup_distance(m, p));
}
BENCHMARK(BM_MpSupDistance)->Apply(ShapeArgs);

BENCHMARK_MAIN();

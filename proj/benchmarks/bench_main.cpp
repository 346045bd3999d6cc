#include <random>

#include <benchmark/benchmark.h>

#include "cwsynth/cramer_wold.hpp"
#include "cwsynth/data.hpp"
#include "cwsynth/metrics.hpp"
#include "cwsynth/model.hpp"
#include "cwsynth/random.hpp"
#include "cwsynth/trainer.hpp"

using namespace cwsynth;

namespace {

Matrix gaussian(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (double& v : m.values()) v = normal(rng);
  return m;
}

void BM_CwDistance(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto p = static_cast<std::size_t>(state.range(1));
  const Matrix x = gaussian(n, p, 1);
  const Matrix y = gaussian(n, p, 2);
  for (auto _ : state) benchmark::DoNotOptimize(cw_distance(x, y));
}
BENCHMARK(BM_CwDistance)->Args({64, 20})->Args({256, 20})->Args({256, 231})->Args({1024, 231})->Unit(benchmark::kMillisecond);

void BM_CwDistanceMc(benchmark::State& state) {
  const auto p = static_cast<std::size_t>(state.range(0));
  const Matrix x = gaussian(100, p, 1);
  const Matrix y = gaussian(100, p, 2);
  CwConfig cfg;
  cfg.mc_projections = 1000;
  for (auto _ : state) benchmark::DoNotOptimize(cw_distance_mc(x, y, cfg));
}
BENCHMARK(BM_CwDistanceMc)->Arg(20)->Arg(231)->Unit(benchmark::kMillisecond);

void BM_EntropyRegEstimate(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix mean = gaussian(n, 2, 1);
  Matrix variance(n, 2, 0.1);
  const Matrix z = gaussian(n, 2, 3);
  for (auto _ : state) benchmark::DoNotOptimize(entropy_reg_estimate(mean, variance, z));
}
BENCHMARK(BM_EntropyRegEstimate)->Arg(64)->Arg(256)->Arg(1024);

void BM_TrainingStep(benchmark::State& state) {
  const CategoricalDataset ds = make_toy_bayes_net(256, 7);
  const Matrix onehot = to_onehot(ds);
  Step1Config cfg;
  cfg.lambda = state.range(0) != 0 ? 100.0 : 0.0;
  const EncoderDecoder model(ds.schema_ptr(), cfg.model, 11);
  const Matrix noise = gaussian(ds.rows(), cfg.model.latent_dim, 5);
  for (auto _ : state) {
    Tape tape;
    const Step1Loss loss = build_step1_loss(tape, model, model.params(), onehot, noise, nullptr, cfg);
    benchmark::DoNotOptimize(tape.backward(loss.total, model.params()));
  }
}
BENCHMARK(BM_TrainingStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_AdversarialAccuracy(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const CategoricalDataset a = make_toy_bayes_net(n, 1);
  const CategoricalDataset b = make_toy_bayes_net(n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(adversarial_accuracy_pair(a, b));
}
BENCHMARK(BM_AdversarialAccuracy)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();

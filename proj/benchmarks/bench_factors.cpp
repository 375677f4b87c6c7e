#include <benchmark/benchmark.h>

#include <random>

#include "factorkit/cost.hpp"
#include "factorkit/engine.hpp"
#include "factorkit/parallel.hpp"
#include "factorkit/zoo.hpp"

namespace fk = factorkit;

namespace {

fk::Tensor random_input(const fk::Shape& s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(0.0f, 1.0f);
  fk::Tensor t({1, s.channels, s.height, s.width});
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

// 3x3 same-padded conv, square input of side range(0), range(1) channels in and out.
void BM_Conv3x3(benchmark::State& state) {
  const std::int64_t side = state.range(0), ch = state.range(1);
  const auto spec = fk::make_conv("c", "@input", {3, 3}, {1, 1}, {1, 1}, ch);
  fk::GraphSpec g{"conv", {ch, side, side}, {spec}};
  const auto params = fk::init_params(g, 1);
  const auto x = random_input({ch, side, side}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(fk::conv2d_forward(x, params.at("c"), spec));
  const auto macs = fk::count_macs(spec, {ch, side, side});
  state.counters["MAC/s"] = benchmark::Counter(double(macs), benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_Conv3x3)->Args({56, 32})->Args({112, 16})->Args({28, 64})->Unit(benchmark::kMillisecond);

void BM_Model(benchmark::State& state, fk::ZooModel model, bool parallel) {
  const fk::CompiledGraph cg(fk::build_model({model, {1, 4}, {3, 270, 480}}));
  const auto params = fk::init_params(cg, 1);
  const auto x = random_input(cg.spec().input_shape, 2);
  const std::size_t lanes = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    if (parallel)
      benchmark::DoNotOptimize(fk::run_parallel(cg, params, x, lanes));
    else
      benchmark::DoNotOptimize(fk::forward(cg, params, x));
  }
  state.counters["MAC/s"] =
      benchmark::Counter(double(fk::analyze(cg.spec()).total_macs), benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK_CAPTURE(BM_Model, googlenet4e_seq, fk::ZooModel::GoogleNet4e, false)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Model, factornet_v1_seq, fk::ZooModel::FactorNetV1, false)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Model, factornet_v1_par, fk::ZooModel::FactorNetV1, true)
    ->Arg(2)->Arg(4)->UseRealTime()->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Model, factornet_v2_seq, fk::ZooModel::FactorNetV2, false)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Model, factornet_v2_par, fk::ZooModel::FactorNetV2, true)
    ->Arg(2)->Arg(4)->UseRealTime()->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();

/*
   Copyright 2026 The erwsim Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#include <benchmark/benchmark.h>

#include <vector>

#include "erw/branching.hpp"
#include "erw/diffusion.hpp"
#include "erw/sample.hpp"
#include "erw/stats.hpp"
#include "erw/walk.hpp"

using namespace erw;

static void BM_StreamDerivation(benchmark::State& state) {
  const rng::Streams streams(1, "bench");
  std::uint64_t r = 0;
  for (auto _ : state) benchmark::DoNotOptimize(streams.at(r++));
}
BENCHMARK(BM_StreamDerivation);

static void BM_Xoshiro(benchmark::State& state) {
  auto rng = rng::Streams(1, "bench").at(0);
  for (auto _ : state) benchmark::DoNotOptimize(rng());
}
BENCHMARK(BM_Xoshiro);

static void BM_Normal(benchmark::State& state) {
  auto rng = rng::Streams(1, "bench").at(0);
  for (auto _ : state) benchmark::DoNotOptimize(sample::normal(rng));
}
BENCHMARK(BM_Normal);

static void BM_NegativeBinomial(benchmark::State& state) {
  auto rng = rng::Streams(1, "bench").at(0);
  const auto r = static_cast<std::uint64_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(sample::negative_binomial_half(rng, r));
}
BENCHMARK(BM_NegativeBinomial)->RangeMultiplier(100)->Range(1, 100'000'000);

static void BM_StepV(benchmark::State& state) {
  auto rng = rng::Streams(1, "bench").at(0);
  const CookieStack stack({0.875, 0.875});
  const auto v = static_cast<std::uint64_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(branching::step_V(v, stack, rng));
}
BENCHMARK(BM_StepV)->Arg(10)->Arg(1'000'000);

static void BM_ExtinctionRun(benchmark::State& state) {
  const auto law = EnvironmentLaw::single({0.875, 0.875});
  const rng::Streams streams(1, "bench.run");
  std::uint64_t r = 0, generations = 0;
  for (auto _ : state) {
    auto rng = streams.at(r++);
    const auto run = branching::run_to_extinction(law, 0, {}, rng);
    generations += run.generations;
    benchmark::DoNotOptimize(run.progeny);
  }
  state.counters["generations/s"] =
      benchmark::Counter(double(generations), benchmark::Counter::kIsRate);
}
BENCHMARK(BM_ExtinctionRun);

static void BM_WalkSteps(benchmark::State& state) {
  const auto law = EnvironmentLaw::single({0.875, 0.875});
  const auto stop = walk::StopRule::for_steps(static_cast<std::uint64_t>(state.range(0)));
  const rng::Streams streams(1, "bench.walk");
  std::uint64_t r = 0;
  for (auto _ : state) {
    auto rng = streams.at(r++);
    benchmark::DoNotOptimize(walk::simulate_walk(law, stop, rng).final_position);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_WalkSteps)->Arg(100'000);

static void BM_PassageViaBranching(benchmark::State& state) {
  const auto law = EnvironmentLaw::single({0.9, 0.9, 0.9});
  const auto n = static_cast<std::uint64_t>(state.range(0));
  const rng::Streams streams(1, "bench.passage");
  std::uint64_t r = 0;
  for (auto _ : state) {
    auto rng = streams.at(r++);
    benchmark::DoNotOptimize(branching::passage_time_via_branching(law, n, rng));
  }
}
BENCHMARK(BM_PassageViaBranching)->Arg(10'000);

static void BM_DiffusionSteps(benchmark::State& state) {
  auto config = diffusion::DiffusionConfig::defaults(1.5, 1.0);
  config.t_max = 1.0;
  config.y0 = 1e6; // keeps the path away from 0 so every step is simulated
  config.dt = 1e-4;
  auto rng = rng::Streams(1, "bench.sde").at(0);
  for (auto _ : state) benchmark::DoNotOptimize(diffusion::simulate_Y(config, rng).area);
  state.SetItemsProcessed(state.iterations() * 10'000);
}
BENCHMARK(BM_DiffusionSteps);

static void BM_KsTwoSample(benchmark::State& state) {
  auto rng = rng::Streams(1, "bench.ks").at(0);
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<double> a(n), b(n);
  for (auto& v : a) v = sample::normal(rng);
  for (auto& v : b) v = sample::normal(rng);
  for (auto _ : state) benchmark::DoNotOptimize(stats::ks_two_sample(a, b).distance);
}
BENCHMARK(BM_KsTwoSample)->Arg(100'000);

BENCHMARK_MAIN();

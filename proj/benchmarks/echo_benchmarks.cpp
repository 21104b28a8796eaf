// SPDX-License-Identifier: Apache-2.0
//
// Microbenchmarks for the hot paths: per-token signal math, a full tree
// rollout, batch gradient assembly, and the vote.
#include <benchmark/benchmark.h>

#include <vector>

#include "echo/config.hpp"
#include "echo/engine.hpp"
#include "echo/optimizer.hpp"
#include "echo/policy.hpp"
#include "echo/rewards.hpp"
#include "echo/rollout.hpp"
#include "echo/signals.hpp"

namespace {

echo::EchoConfig bench_config() {
  echo::EchoConfig cfg;
  cfg.group_size = 32;
  cfg.train_size = 16;
  cfg.max_length = 24;
  cfg.warmup_steps = 0;
  return cfg;
}

void BM_TokenSignals(benchmark::State& state) {
  const auto policy = echo::policy::make_random_policy(16, 1, 11, 1.0);
  const std::vector<int> prefix{3};
  const auto dist = echo::policy::next_distribution(policy, prefix);
  for (auto _ : state) {
    benchmark::DoNotOptimize(echo::signals::token_entropy(dist));
    benchmark::DoNotOptimize(echo::signals::topk_confidence(dist, 1));
  }
}
BENCHMARK(BM_TokenSignals);

void BM_TreeRollout(benchmark::State& state) {
  const auto cfg = bench_config();
  const auto policy = echo::policy::make_random_policy(16, 1, 11, 1.0);
  const std::vector<int> prompt{0};
  std::uint64_t rollout_id = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        echo::rollout::rollout(policy, prompt, cfg, rollout_id++));
  }
}
BENCHMARK(BM_TreeRollout);

void BM_BatchGradient(benchmark::State& state) {
  const auto cfg = bench_config();
  auto engine_state = echo::engine::init_state(cfg);
  const auto task = echo::engine::default_tasks().front();
  const auto step = echo::engine::run_step(engine_state, task, 1);
  if (!step.batch) {
    state.SkipWithError("no training batch produced");
    return;
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(echo::optim::echo_gradient(
        *step.batch, engine_state.policy, engine_state.reference,
        cfg.optimizer));
  }
}
BENCHMARK(BM_BatchGradient);

void BM_MajorityVote(benchmark::State& state) {
  std::vector<echo::rewards::Answer> answers;
  for (int i = 0; i < 64; ++i) {
    answers.emplace_back(std::vector<int>{i % 7});
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(echo::rewards::majority_vote(answers));
  }
}
BENCHMARK(BM_MajorityVote);

}  // namespace

BENCHMARK_MAIN();

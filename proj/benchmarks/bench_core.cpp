#include <benchmark/benchmark.h>

#include "divgrpo/metrics.hpp"
#include "divgrpo/objective.hpp"
#include "divgrpo/rng.hpp"

using namespace divgrpo;

namespace {

GroupBatch make_group(const Policy& policy, int G, int max_len, uint64_t seed) {
  GroupBatch group;
  for (int i = 0; i < G; ++i) {
    SampleResult s = sample_completion_ex(policy, {}, 1.0, max_len, mix_seed(seed, i));
    Trajectory t;
    t.tokens = std::move(s.tokens);
    t.old_log_probs = std::move(s.log_probs);
    const int acc = i % 2;
    t.reward = RewardRecord::make(acc, acc);
    group.trajectories.push_back(std::move(t));
  }
  finalize_advantages(group);
  return group;
}

void BM_SampleCompletion(benchmark::State& state) {
  Vocabulary v = Vocabulary::micro_math();
  NeuralPolicy p(v, {.embed = 16, .window = 8, .hidden = 64}, 1);
  uint64_t seed = 0;
  for (auto _ : state) {
    auto r = sample_completion(p, {}, 0.9, static_cast<int>(state.range(0)), seed++);
    benchmark::DoNotOptimize(r);
  }
}
BENCHMARK(BM_SampleCompletion)->Arg(12)->Arg(32);

void BM_CombinedObjectiveBackward(benchmark::State& state) {
  Vocabulary v = Vocabulary::micro_math();
  NeuralPolicy p(v, {.embed = 16, .window = 8, .hidden = 64}, 1);
  PolicySnapshot ref(p, SnapshotRole::reference);
  std::vector<GroupBatch> groups;
  for (int g = 0; g < state.range(0); ++g) groups.push_back(make_group(p, 6, 12, g));
  ObjectiveConfig cfg;
  for (auto _ : state) {
    BatchObjective out = batch_objective_gradients(p, ref, groups, cfg);
    benchmark::DoNotOptimize(out);
  }
}
BENCHMARK(BM_CombinedObjectiveBackward)->Arg(1)->Arg(8);

void BM_EnumerateSequences(benchmark::State& state) {
  Vocabulary v = Vocabulary::generic(2);
  TabularPolicy p = TabularPolicy::random(v, 1, 5, 1.0);
  for (auto _ : state) {
    auto seqs = enumerate_all_sequences(p, {}, static_cast<int>(state.range(0)));
    benchmark::DoNotOptimize(seqs);
  }
}
BENCHMARK(BM_EnumerateSequences)->Arg(4)->Arg(6);

void BM_SelfBleu(benchmark::State& state) {
  Rng rng(7);
  EvalSample s;
  for (int i = 0; i < state.range(0); ++i) {
    EvalResponse r;
    for (int t = 0; t < 16; ++t) r.tokens.push_back(rng.below(19));
    s.samples.push_back(std::move(r));
  }
  std::vector<EvalSample> samples{s};
  for (auto _ : state) {
    double d = div_selfbleu(samples);
    benchmark::DoNotOptimize(d);
  }
}
BENCHMARK(BM_SelfBleu)->Arg(6)->Arg(16);

void BM_VerifyIdentity(benchmark::State& state) {
  Vocabulary v = Vocabulary::generic(2);
  TabularPolicy theta = TabularPolicy::random(v, 1, 1, 1.5);
  TabularPolicy old_p = TabularPolicy::random(v, 1, 2, 1.5);
  for (auto _ : state) {
    IdentityReport rep = verify_identity(theta, old_p, {}, static_cast<int>(state.range(0)));
    benchmark::DoNotOptimize(rep);
  }
}
BENCHMARK(BM_VerifyIdentity)->Arg(3)->Arg(4);

}  // namespace

BENCHMARK_MAIN();

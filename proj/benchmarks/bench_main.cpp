#include <benchmark/benchmark.h>

#include "bmssl/bilevel.hpp"
#include "bmssl/rng.hpp"
#include "bmssl/spectral.hpp"
#include "bmssl/training.hpp"

using namespace bmssl;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t({r, c});
  for (auto& v : t.data()) v = rng.uniform(-1.0, 1.0);
  return t;
}

// Shared fixture: default config, one batch of K episodes.
struct Batch {
  RunConfig config;
  DataBundle data;
  std::vector<std::unique_ptr<InnerObjective>> owned;
  std::vector<const InnerObjective*> tasks;
  ParamSet theta;

  Batch() : data(prepare_data(config)) {
    const auto pool = resample_pool(data.train_pool, config.n, 1);
    owned = episode_objectives(construct_tasks(pool, config.task_params(2)), config.loss_weights());
    tasks = raw_pointers(owned);
    theta = init_params(config.model_dims(), 3);
  }
};

const Batch& batch() {
  static const Batch b;
  return b;
}

}  // namespace

static void BM_MatmulForwardBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
  for (auto _ : state) {
    ExprGraph g;
    const NodeId x = g.leaf("a", a);
    const NodeId y = g.constant(b);
    const NodeId loss = g.sum(g.tanh(g.matmul(x, y)));
    const std::string wrt[] = {"a"};
    benchmark::DoNotOptimize(g.gradient(loss, wrt));
  }
}
BENCHMARK(BM_MatmulForwardBackward)->Arg(16)->Arg(64)->Arg(128);

static void BM_SecondDerivative(benchmark::State& state) {
  const Tensor a = random_matrix(32, 32, 3);
  for (auto _ : state) {
    ExprGraph g;
    const NodeId x = g.leaf("a", a);
    const NodeId loss = g.sum(g.mul(g.tanh(x), g.tanh(x)));
    const std::string wrt[] = {"a"};
    const NodeId grad = g.backward(loss, wrt).at("a");
    benchmark::DoNotOptimize(g.gradient(g.sum(g.mul(grad, grad)), wrt));
  }
}
BENCHMARK(BM_SecondDerivative);

static void BM_ConstructTasks(benchmark::State& state) {
  const Batch& b = batch();
  const auto pool = resample_pool(b.data.train_pool, b.config.n, 4);
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(construct_tasks(pool, b.config.task_params(seed++)));
}
BENCHMARK(BM_ConstructTasks);

static void BM_MetaStepStandard(benchmark::State& state) {
  const Batch& b = batch();
  BilevelConfig cfg = b.config.bilevel();
  cfg.first_order = state.range(0) != 0;
  for (auto _ : state) benchmark::DoNotOptimize(meta_step_standard(b.theta, b.tasks, cfg));
}
BENCHMARK(BM_MetaStepStandard)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

static void BM_MetaStepBootstrapped(benchmark::State& state) {
  const Batch& b = batch();
  BilevelConfig cfg = b.config.bilevel();
  cfg.delta = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(meta_step_bootstrapped(b.theta, b.tasks, cfg));
}
BENCHMARK(BM_MetaStepBootstrapped)->Arg(1)->Arg(5)->Arg(20)->Unit(benchmark::kMillisecond);

static void BM_FewShotEpisode(benchmark::State& state) {
  const Batch& b = batch();
  FewShotSettings s = fewshot_settings(b.config);
  s.episodes = 1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(evaluate_fewshot(b.theta, b.data.eval_classes, s));
    ++s.seed;
  }
}
BENCHMARK(BM_FewShotEpisode)->Unit(benchmark::kMillisecond);

static void BM_MinimaxGap(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const PositivePairChain chain = build_chain(random_view_space(m, m, 5));
  const Tensor s = random_subspace(chain, 3, 6);
  for (auto _ : state) benchmark::DoNotOptimize(minimax_gap(chain, s, 0.2));
}
BENCHMARK(BM_MinimaxGap)->Arg(6)->Arg(12);
BENCHMARK_MAIN();

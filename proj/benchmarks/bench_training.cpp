#include <benchmark/benchmark.h>

#include "catgcn/dataset.hpp"
#include "catgcn/parallel.hpp"
#include "catgcn/synthetic.hpp"
#include "catgcn/trainer.hpp"

namespace {

using namespace catgcn;

// One full-batch epoch (forward, backward, Adam step, validation pass)
// at the given node count and worker count.
void BM_TrainEpoch(benchmark::State& state) {
  SyntheticSpec spec;
  spec.kind = SyntheticKind::kHomophily;
  spec.n_nodes = static_cast<std::size_t>(state.range(0));
  spec.n_feats = 1000;
  spec.p_in = 20.0 / static_cast<double>(spec.n_nodes);
  spec.p_out = 2.0 / static_cast<double>(spec.n_nodes);
  const Dataset data = prepare_dataset(generate_synthetic(spec), spec.n_f, 1);

  TrainConfig config;
  config.max_epochs = 1;
  set_worker_count(static_cast<std::size_t>(state.range(1)));
  for (auto _ : state) benchmark::DoNotOptimize(train(config, data));
  set_worker_count(1);
}
BENCHMARK(BM_TrainEpoch)->Args({2000, 1})->Args({10000, 1})->Args({10000, 2})->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();

// Kernel-level benchmarks: sparse propagation and the fused pooled kernels.
// Graphs come from the homophily generator so degree distributions match
// what training sees.

#include <benchmark/benchmark.h>

#include "catgcn/dataset.hpp"
#include "catgcn/graph.hpp"
#include "catgcn/interaction.hpp"
#include "catgcn/rng.hpp"
#include "catgcn/synthetic.hpp"

namespace {

using namespace catgcn;

Dataset make_graph(std::size_t nodes, std::size_t n_f) {
  SyntheticSpec spec;
  spec.kind = SyntheticKind::kHomophily;
  spec.n_nodes = nodes;
  spec.n_feats = 1000;
  spec.n_classes = 4;
  spec.n_f = n_f;
  spec.p_in = 20.0 / static_cast<double>(nodes);
  spec.p_out = 2.0 / static_cast<double>(nodes);
  spec.seed = 1;
  return prepare_dataset(generate_synthetic(spec), n_f, 1);
}

DenseMatrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  CounterRng rng(seed);
  DenseMatrix m(rows, cols);
  for (double& v : m.values()) v = rng.uniform(-1.0, 1.0);
  return m;
}

SlotRows slots_of(const FeatureSample& sample) {
  SlotRows s;
  s.group = sample.n_f;
  for (const FeatureEntry& e : sample.entries) {
    s.ids.push_back(e.id);
    s.weights.push_back(e.weight);
  }
  return s;
}

void BM_Spmm(benchmark::State& state) {
  const Dataset data = make_graph(static_cast<std::size_t>(state.range(0)), 10);
  const DenseMatrix h = random_matrix(data.num_nodes(), 64, 2);
  for (auto _ : state) benchmark::DoNotOptimize(spmm(data.norm_adj, h));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(data.norm_adj.values.size()) * 64);
}
BENCHMARK(BM_Spmm)->Arg(1000)->Arg(10000);

void BM_Propagate(benchmark::State& state) {
  const Dataset data = make_graph(10000, 10);
  const DenseMatrix h = random_matrix(data.num_nodes(), 4, 3);
  const auto hops = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(propagate(data.norm_adj, h, hops));
}
BENCHMARK(BM_Propagate)->DenseRange(0, 4);

void BM_NormalizeSym(benchmark::State& state) {
  const Dataset data = make_graph(10000, 10);
  const CsrMatrix adj = build_adjacency(data.raw.edges, data.num_nodes());
  for (auto _ : state) benchmark::DoNotOptimize(normalize_sym(adj));
}
BENCHMARK(BM_NormalizeSym);

void BM_PooledBiinteraction(benchmark::State& state) {
  const Dataset data = make_graph(10000, static_cast<std::size_t>(state.range(0)));
  const SlotRows slots = slots_of(data.sample);
  const DenseMatrix table = random_matrix(1000, 64, 4);
  for (auto _ : state) benchmark::DoNotOptimize(pooled_biinteraction(table, slots));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(slots.ids.size()));
}
BENCHMARK(BM_PooledBiinteraction)->Arg(5)->Arg(10)->Arg(40);

void BM_PooledBiinteractionBackward(benchmark::State& state) {
  const Dataset data = make_graph(10000, 10);
  const SlotRows slots = slots_of(data.sample);
  const DenseMatrix table = random_matrix(1000, 64, 4);
  const DenseMatrix upstream = random_matrix(slots.nodes(), 64, 5);
  DenseMatrix grad(1000, 64);
  for (auto _ : state) {
    pooled_biinteraction_backward(table, slots, upstream, grad);
    benchmark::ClobberMemory();
  }
}
BENCHMARK(BM_PooledBiinteractionBackward);

// The global kernel's cost grows with the slot count squared per node.
void BM_PooledGlobal(benchmark::State& state) {
  const Dataset data = make_graph(10000, static_cast<std::size_t>(state.range(0)));
  const SlotRows slots = slots_of(data.sample);
  const DenseMatrix table_w = random_matrix(1000, 64, 6);
  for (auto _ : state) benchmark::DoNotOptimize(pooled_global(table_w, slots, 21.0));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(slots.ids.size()));
}
BENCHMARK(BM_PooledGlobal)->Arg(5)->Arg(10)->Arg(40);

void BM_PooledGlobalBackward(benchmark::State& state) {
  const Dataset data = make_graph(10000, 10);
  const SlotRows slots = slots_of(data.sample);
  const DenseMatrix table_w = random_matrix(1000, 64, 6);
  const DenseMatrix upstream = random_matrix(slots.nodes(), 64, 7);
  DenseMatrix grad(1000, 64);
  for (auto _ : state) {
    pooled_global_backward(table_w, slots, 21.0, upstream, grad);
    benchmark::ClobberMemory();
  }
}
BENCHMARK(BM_PooledGlobalBackward);

}  // namespace

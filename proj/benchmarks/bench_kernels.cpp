#include <benchmark/benchmark.h>

#include <set>
#include <utility>

#include "grnn/gradients.hpp"
#include "grnn/graph.hpp"
#include "grnn/layers.hpp"
#include "grnn/sparse.hpp"

using namespace grnn;

namespace {

SparseMatrix random_graph(std::size_t n, std::size_t edges, Rng& rng) {
  std::set<std::pair<std::size_t, std::size_t>> seen;
  std::vector<Triplet> t;
  while (t.size() < edges) {
    const std::size_t r = rng.below(n), c = rng.below(n);
    if (seen.insert({r, c}).second) t.push_back({r, c, 1.0});
  }
  return SparseMatrix::from_triplets(n, n, std::move(t));
}

DenseTensor random_dense(Shape shape, Rng& rng) {
  DenseTensor t(std::move(shape));
  for (double& v : t.values()) v = rng.normal();
  return t;
}

struct Problem {
  DenseTensor x, y;
  std::vector<std::size_t> ids;
  MultiRelationalGraph g;
  ModelParams params;
};

Problem make_problem(std::size_t n, std::size_t f, std::size_t rel) {
  Rng rng(1);
  std::vector<SparseMatrix> slices;
  for (std::size_t i = 0; i < rel; ++i) slices.push_back(random_graph(n, 5 * n, rng));
  Problem p{random_dense({n, f}, rng), DenseTensor({n, 4}), {}, {n, std::move(slices)}, {}};
  for (std::size_t r = 0; r < n; ++r) p.y(r, r % 4) = 1.0;
  for (std::size_t r = 0; r < n; r += 10) p.ids.push_back(r);
  p.params = init_params({n, f, {64}, 4, rel, WeightSharing::shared}, rng);
  return p;
}

void BM_Spmm(benchmark::State& state) {
  Rng rng(2);
  const std::size_t n = 5000, width = 64;
  const auto s = random_graph(n, static_cast<std::size_t>(state.range(0)), rng);
  const DenseTensor d = random_dense({n, width}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(spmm(s, d));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * s.nnz() * width));
}
BENCHMARK(BM_Spmm)->Arg(20000)->Arg(40000)->Arg(80000);

void BM_Forward(benchmark::State& state) {
  const Problem p = make_problem(2000, 200, static_cast<std::size_t>(state.range(0)));
  const InputCache inputs(p.x, p.g, p.params, {});
  for (auto _ : state) benchmark::DoNotOptimize(forward(inputs, p.g, p.params));
}
BENCHMARK(BM_Forward)->Arg(1)->Arg(2)->Arg(3)->Unit(benchmark::kMillisecond);

void BM_Backward(benchmark::State& state) {
  const Problem p = make_problem(2000, 200, static_cast<std::size_t>(state.range(0)));
  const Objective obj(p.x, p.y, p.ids, p.g, p.params, {1e-4, 1e-4, 1e-4});
  for (auto _ : state) benchmark::DoNotOptimize(obj.backward(p.params));
}
BENCHMARK(BM_Backward)->Arg(1)->Arg(2)->Arg(3)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();

#include <benchmark/benchmark.h>

#include <random>

#include "spanlab/label_model.h"

namespace spanlab {
namespace {

// n tokens in documents of 20, l functions firing 30% of the time.
LabelMatrix Matrix(std::size_t n, std::size_t l) {
  std::mt19937_64 rng(1);
  std::vector<int> votes(l);
  for (std::size_t j = 0; j < l; ++j) votes[j] = static_cast<int>(j % 3);
  std::vector<int> entries(n * l, kAbstain);
  std::bernoulli_distribution fire(0.3);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < l; ++j) {
      if (fire(rng)) entries[i * l + j] = votes[j];
    }
  }
  std::vector<Segment> segments;
  for (std::size_t off = 0; off < n; off += 20) {
    segments.push_back({"d" + std::to_string(off), off, std::min<std::size_t>(20, n - off)});
  }
  return LabelMatrix(2, votes, n, std::move(entries), std::move(segments));
}

void BM_FitMajority(benchmark::State& state) {
  const auto m = Matrix(state.range(0), 12);
  for (auto _ : state) benchmark::DoNotOptimize(FitMajority(m));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_FitMajority)->Arg(10000)->Arg(100000);

void BM_FitGenerative(benchmark::State& state) {
  const auto m = Matrix(state.range(0), 12);
  for (auto _ : state) benchmark::DoNotOptimize(FitGenerative(m));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_FitGenerative)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);

void BM_FitHmm(benchmark::State& state) {
  const auto m = Matrix(state.range(0), 12);
  for (auto _ : state) benchmark::DoNotOptimize(FitHmm(m));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_FitHmm)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace spanlab

BENCHMARK_MAIN();

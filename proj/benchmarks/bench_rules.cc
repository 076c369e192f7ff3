#include <benchmark/benchmark.h>

#include "spanlab/label_model.h"
#include "spanlab/planted_corpus.h"
#include "spanlab/rules.h"

namespace spanlab {
namespace {

const Corpus& Planted() {
  static const Corpus corpus = ToCorpus(GeneratePlantedCorpus());
  return corpus;
}

// First entity token of the first train document, as a one-token span.
SpanAnnotation FirstEntity(const Corpus& corpus) {
  const auto& doc = corpus.document(corpus.split(Split::kTrain)[0]);
  for (std::size_t t = 0; t < doc.size(); ++t) {
    if (doc.gold[t] != corpus.labels().background()) {
      return {doc.id, t, t + 1, corpus.labels().name(doc.gold[t])};
    }
  }
  return {doc.id, 0, 1, corpus.labels().name(0)};
}

void BM_Synthesize(benchmark::State& state) {
  const Corpus& corpus = Planted();
  const auto ann = FirstEntity(corpus);
  for (auto _ : state) benchmark::DoNotOptimize(Synthesize(ann, corpus));
}
BENCHMARK(BM_Synthesize)->Unit(benchmark::kMillisecond);

void BM_BuildMatrix(benchmark::State& state) {
  const Corpus& corpus = Planted();
  const auto lfs = Synthesize(FirstEntity(corpus), corpus).candidates;
  for (auto _ : state) benchmark::DoNotOptimize(BuildMatrix(corpus, lfs, Split::kTrain));
  state.counters["functions"] = static_cast<double>(lfs.size());
}
BENCHMARK(BM_BuildMatrix)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace spanlab

BENCHMARK_MAIN();

#ifndef SPANLAB_PLANTED_CORPUS_H_
#define SPANLAB_PLANTED_CORPUS_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "spanlab/corpus.h"

namespace spanlab {

// Synthetic corpus whose entity tokens are generated by six known rules:
//
//   0  Chemical  ner == "CHEM"                 (entity-type tag)
//   1  Chemical  emb_a close to a centroid     (similarity, channel A)
//   2  Chemical  one of four drug names        (lexical)
//   3  Disease   pos == "PROPN"                (part-of-speech tag)
//   4  Disease   emb_b close to a centroid     (similarity, channel B)
//   5  Disease   dep == "nmod:dis"             (dependency tag)
//
// An entity token satisfies each rule of its class independently with
// probability rule_rate (lexical_rate for the lexical rule), redrawn until at
// least one holds. Filler tokens carry a rule's tag with probability
// spurious_rate. Entity surface forms otherwise come from a large
// vocabulary, so a dictionary of seen strings generalizes poorly while the
// rules do. A fraction `noise` of entity tokens is labeled "O" in gold.
// Every split, train included, carries gold so scripted annotators can read
// it.
struct PlantedCorpusOptions {
  std::size_t train_docs = 800;
  std::size_t dev_docs = 100;
  std::size_t test_docs = 100;
  std::uint64_t seed = 7;
  double noise = 0.1;
  double rule_rate = 0.8;
  double lexical_rate = 0.5;
  double spurious_rate = 0.001;
  std::size_t vocabulary = 20000;
  std::size_t min_tokens = 12;
  std::size_t max_tokens = 24;
  std::size_t min_entities = 2;
  std::size_t max_entities = 4;
  std::size_t dim = 16;
};

inline constexpr int kPlantedRuleCount = 6;

struct PlantedCorpus {
  LabelSet labels;
  std::vector<Document> documents;
  std::size_t dim = 0;
  std::vector<float> emb_a;
  std::vector<float> emb_b;
  std::vector<float> sent;
  // Per token in corpus order, bit r set when rule r holds.
  std::vector<unsigned> token_rules;
};

PlantedCorpus GeneratePlantedCorpus(const PlantedCorpusOptions& options = {});
// Writes corpus.jsonl, emb_a.bin, emb_b.bin, sent.bin and labels.json.
CorpusPaths WritePlantedCorpus(const PlantedCorpus& planted, const std::filesystem::path& dir);
Corpus ToCorpus(const PlantedCorpus& planted);

}  // namespace spanlab

#endif  // SPANLAB_PLANTED_CORPUS_H_

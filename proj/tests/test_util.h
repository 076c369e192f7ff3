#ifndef SPANLAB_TESTS_TEST_UTIL_H_
#define SPANLAB_TESTS_TEST_UTIL_H_

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "spanlab/corpus.h"
#include "spanlab/label_model.h"

namespace spanlab::testing {

// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("spanlab_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

struct RandomCorpusOptions {
  std::size_t train = 20;
  std::size_t dev = 5;
  std::size_t test = 5;
  std::size_t min_tokens = 1;
  std::size_t max_tokens = 10;
  int classes = 2;
  std::size_t vocabulary = 8;
  std::size_t dim = 4;
  // Embeddings are drawn around this many centroids so similarity
  // conditions fire on more than the anchor.
  std::size_t centroids = 3;
  std::uint64_t seed = 1;
};

inline std::vector<float> ClusteredRows(std::mt19937_64& rng, std::size_t rows, std::size_t dim,
                                        std::size_t centroids) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<std::vector<double>> centers(centroids, std::vector<double>(dim));
  for (auto& c : centers) {
    for (auto& x : c) x = n(rng);
  }
  std::uniform_int_distribution<std::size_t> pick(0, centroids - 1);
  std::vector<float> out;
  out.reserve(rows * dim);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto& c = centers[pick(rng)];
    for (std::size_t k = 0; k < dim; ++k) out.push_back(static_cast<float>(c[k] + 0.15 * n(rng)));
  }
  return out;
}

// Random corpus with gold on every split, small vocabularies, and clustered
// embeddings.
inline Corpus RandomCorpus(const RandomCorpusOptions& o) {
  std::mt19937_64 rng(o.seed);
  static const char* kPos[] = {"NOUN", "VERB", "ADJ"};
  static const char* kDep[] = {"nsubj", "dobj", "amod"};
  static const char* kNer[] = {"", "CHEM", "DIS"};
  std::vector<std::string> classes;
  for (int c = 0; c < o.classes; ++c) classes.push_back("C" + std::to_string(c));
  LabelSet labels(classes);
  std::uniform_int_distribution<std::size_t> len(o.min_tokens, o.max_tokens);
  std::uniform_int_distribution<std::size_t> word(0, o.vocabulary - 1);
  std::uniform_int_distribution<int> tag(0, 2);
  std::uniform_int_distribution<int> gold(0, o.classes);
  std::bernoulli_distribution upper(0.2);

  std::vector<Document> docs;
  std::size_t token_rows = 0;
  auto make = [&](Split split, const std::string& prefix, std::size_t count) {
    for (std::size_t d = 0; d < count; ++d) {
      Document doc;
      doc.id = prefix + std::to_string(d);
      doc.split = split;
      doc.sent_emb = docs.size();
      const std::size_t n = len(rng);
      for (std::size_t t = 0; t < n; ++t) {
        Token tok;
        tok.text = "w" + std::to_string(word(rng));
        if (upper(rng)) tok.text[0] = 'W';
        tok.pos = kPos[tag(rng)];
        tok.dep = kDep[tag(rng)];
        tok.ner = kNer[tag(rng)];
        tok.emb_a = tok.emb_b = token_rows++;
        doc.tokens.push_back(tok);
        doc.gold.push_back(gold(rng));
      }
      docs.push_back(std::move(doc));
    }
  };
  make(Split::kTrain, "tr", o.train);
  make(Split::kDev, "dv", o.dev);
  make(Split::kTest, "te", o.test);
  auto a = ClusteredRows(rng, token_rows, o.dim, o.centroids);
  auto b = ClusteredRows(rng, token_rows, o.dim, o.centroids);
  auto s = ClusteredRows(rng, docs.size(), o.dim, o.centroids);
  return Corpus(labels, std::move(docs), EmbeddingStore(Channel::kEmbA, o.dim, std::move(a)),
                EmbeddingStore(Channel::kEmbB, o.dim, std::move(b)),
                EmbeddingStore(Channel::kSent, o.dim, std::move(s)));
}

// Random label matrix whose column j only holds kAbstain or votes[j].
// Segments split the rows into random-length documents when requested.
inline LabelMatrix RandomMatrix(std::mt19937_64& rng, std::size_t n, std::size_t l, int classes,
                                double fire_rate = 0.4, std::size_t max_segment = 0) {
  std::uniform_int_distribution<int> vote(0, classes);
  std::bernoulli_distribution fire(fire_rate);
  std::vector<int> votes(l);
  for (auto& v : votes) v = vote(rng);
  std::vector<int> entries(n * l, kAbstain);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < l; ++j) {
      if (fire(rng)) entries[i * l + j] = votes[j];
    }
  }
  std::vector<Segment> segments;
  if (max_segment > 0) {
    std::uniform_int_distribution<std::size_t> seg(1, max_segment);
    std::size_t offset = 0;
    while (offset < n) {
      const std::size_t len = std::min(seg(rng), n - offset);
      segments.push_back({"d" + std::to_string(segments.size()), offset, len});
      offset += len;
    }
  }
  return LabelMatrix(classes, std::move(votes), n, std::move(entries), std::move(segments));
}

inline double RowSum(const PosteriorMatrix& p, std::size_t i) {
  double s = 0.0;
  for (double x : p.row(i)) s += x;
  return s;
}

}  // namespace spanlab::testing

#endif  // SPANLAB_TESTS_TEST_UTIL_H_

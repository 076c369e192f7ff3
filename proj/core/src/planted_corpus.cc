#include "spanlab/planted_corpus.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

namespace spanlab {

namespace {

constexpr std::array<const char*, 4> kDrugNames = {"aspirin", "ibuprofen", "heparin",
                                                   "cisplatin"};
constexpr std::array<const char*, 5> kFillerPos = {"NOUN", "VERB", "DET", "ADP", "ADJ"};
constexpr std::array<const char*, 6> kFillerDep = {"nsubj", "dobj", "det",
                                                   "prep",  "amod", "ROOT"};
constexpr std::size_t kFillerVocabulary = 300;
// Cluster members sit within this scale of their centroid; with unit-norm
// centroids in 16 dimensions pairwise cosines stay above 0.9 in practice.
constexpr double kClusterSpread = 0.04;

class Generator {
 public:
  explicit Generator(const PlantedCorpusOptions& o) : o_(o), rng_(o.seed) {
    center_a_ = UnitVector();
    center_b_ = UnitVector();
    for (auto& d : class_direction_) d = UnitVector();
  }

  PlantedCorpus Run() {
    PlantedCorpus out;
    out.labels = LabelSet({"Chemical", "Disease"});
    out.dim = o_.dim;
    const std::size_t total = o_.train_docs + o_.dev_docs + o_.test_docs;
    for (std::size_t d = 0; d < total; ++d) {
      Split split = Split::kTrain;
      std::string prefix = "train";
      std::size_t local = d;
      if (d >= o_.train_docs + o_.dev_docs) {
        split = Split::kTest;
        prefix = "test";
        local = d - o_.train_docs - o_.dev_docs;
      } else if (d >= o_.train_docs) {
        split = Split::kDev;
        prefix = "dev";
        local = d - o_.train_docs;
      }
      char id[32];
      std::snprintf(id, sizeof(id), "%s-%04zu", prefix.c_str(), local);
      out.documents.push_back(MakeDocument(id, split, out));
    }
    return out;
  }

 private:
  std::vector<float> Gaussian() {
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<float> v(o_.dim);
    for (auto& x : v) x = static_cast<float>(n(rng_));
    return v;
  }

  std::vector<float> UnitVector() {
    auto v = Gaussian();
    double norm = 0.0;
    for (float x : v) norm += static_cast<double>(x) * x;
    norm = std::sqrt(norm);
    for (auto& x : v) x = static_cast<float>(x / norm);
    return v;
  }

  std::vector<float> NearCenter(const std::vector<float>& center) {
    auto v = Gaussian();
    for (std::size_t k = 0; k < v.size(); ++k) {
      v[k] = static_cast<float>(center[k] + kClusterSpread * v[k]);
    }
    return v;
  }

  std::size_t Uniform(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_);
  }

  bool Chance(double p) { return std::bernoulli_distribution(p)(rng_); }

  // Bitmask of the rules an entity of class c satisfies; never empty.
  unsigned DrawRules(int c) {
    const int first = 3 * c;
    while (true) {
      unsigned mask = 0;
      for (int r = first; r < first + 3; ++r) {
        const double rate = r == 2 ? o_.lexical_rate : o_.rule_rate;
        if (Chance(rate)) mask |= 1u << r;
      }
      if (mask) return mask;
    }
  }

  Document MakeDocument(const std::string& id, Split split, PlantedCorpus& out) {
    const std::size_t length = Uniform(o_.min_tokens, o_.max_tokens);
    std::size_t entities = Uniform(o_.min_entities, o_.max_entities);
    // Entities never touch, so each gold span is a single token.
    entities = std::min(entities, (length + 1) / 2);
    std::vector<std::size_t> slots((length + 1) / 2);
    for (std::size_t i = 0; i < slots.size(); ++i) slots[i] = 2 * i;
    std::shuffle(slots.begin(), slots.end(), rng_);
    slots.resize(entities);
    std::vector<int> cls(length, -1);
    for (std::size_t s : slots) cls[s] = static_cast<int>(Uniform(0, 1));

    Document doc;
    doc.id = id;
    doc.split = split;
    doc.sent_emb = out.documents.size();
    std::vector<double> sent(o_.dim, 0.0);
    for (std::size_t t = 0; t < length; ++t) {
      Token token;
      token.emb_a = token.emb_b = out.token_rules.size();
      std::vector<float> a = Gaussian(), b = Gaussian();
      int gold = 2;  // O
      unsigned rules = 0;
      const int c = cls[t];
      if (c < 0) {
        token.text = "w" + std::to_string(Uniform(0, kFillerVocabulary - 1));
        token.pos = kFillerPos[Uniform(0, kFillerPos.size() - 1)];
        token.dep = kFillerDep[Uniform(0, kFillerDep.size() - 1)];
        if (Chance(o_.spurious_rate)) token.ner = "CHEM";
        if (Chance(o_.spurious_rate)) token.pos = "PROPN";
        if (Chance(o_.spurious_rate)) token.dep = "nmod:dis";
      } else {
        gold = c;
        rules = DrawRules(c);
        const std::string word = std::to_string(Uniform(0, o_.vocabulary - 1));
        if (c == 0) {
          token.text = "chem_" + word;
          token.pos = "NOUN";
          token.dep = "dobj";
          if (rules & 1u) token.ner = "CHEM";
          if (rules & 2u) a = NearCenter(center_a_);
          if (rules & 4u) {
            std::string name = kDrugNames[Uniform(0, kDrugNames.size() - 1)];
            if (Chance(0.25)) name[0] = static_cast<char>(std::toupper(name[0]));
            token.text = name;
          }
        } else {
          token.text = "dis_" + word;
          token.pos = (rules & 8u) ? "PROPN" : "NOUN";
          token.dep = (rules & 32u) ? "nmod:dis" : "nsubj";
          if (rules & 16u) b = NearCenter(center_b_);
        }
        if (Chance(o_.noise)) gold = 2;
        for (std::size_t k = 0; k < o_.dim; ++k) sent[k] += class_direction_[c][k];
      }
      out.emb_a.insert(out.emb_a.end(), a.begin(), a.end());
      out.emb_b.insert(out.emb_b.end(), b.begin(), b.end());
      out.token_rules.push_back(rules);
      doc.tokens.push_back(std::move(token));
      doc.gold.push_back(gold);
    }
    const auto noise = Gaussian();
    for (std::size_t k = 0; k < o_.dim; ++k) {
      out.sent.push_back(static_cast<float>(sent[k] + 0.5 * noise[k]));
    }
    return doc;
  }

  PlantedCorpusOptions o_;
  std::mt19937_64 rng_;
  std::vector<float> center_a_;
  std::vector<float> center_b_;
  std::array<std::vector<float>, 2> class_direction_;
};

}  // namespace

PlantedCorpus GeneratePlantedCorpus(const PlantedCorpusOptions& options) {
  return Generator(options).Run();
}

CorpusPaths WritePlantedCorpus(const PlantedCorpus& planted, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  CorpusPaths paths{dir / "corpus.jsonl", dir / "emb_a.bin", dir / "emb_b.bin",
                    dir / "sent.bin", dir / "labels.json"};
  WriteCorpusJsonl(paths.corpus, planted.documents, planted.labels);
  WriteEmbeddings(paths.emb_a, Channel::kEmbA, planted.dim, planted.emb_a);
  WriteEmbeddings(paths.emb_b, Channel::kEmbB, planted.dim, planted.emb_b);
  WriteEmbeddings(paths.sent, Channel::kSent, planted.dim, planted.sent);
  WriteLabelSet(paths.labels, planted.labels);
  return paths;
}

Corpus ToCorpus(const PlantedCorpus& planted) {
  return Corpus(planted.labels, planted.documents,
                EmbeddingStore(Channel::kEmbA, planted.dim, planted.emb_a),
                EmbeddingStore(Channel::kEmbB, planted.dim, planted.emb_b),
                EmbeddingStore(Channel::kSent, planted.dim, planted.sent));
}

}  // namespace spanlab

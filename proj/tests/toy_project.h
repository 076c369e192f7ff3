#ifndef SPANLAB_TESTS_TOY_PROJECT_H_
#define SPANLAB_TESTS_TOY_PROJECT_H_

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "spanlab/corpus.h"

namespace spanlab::testing {

// A small drug/disease corpus written to disk. Drug tokens carry ner=CHEM and
// sit near one embedding direction, disease tokens ner=DIS near another.
//
// dev gold marks "aspirin" as Chemical except in dv2, where it is O.
inline CorpusPaths WriteToyCorpus(const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const LabelSet labels({"Chemical", "Disease"});
  struct Spec {
    const char* id;
    Split split;
    std::vector<std::string> words;
    std::vector<int> gold;
  };
  constexpr int C = 0, D = 1, O = 2;
  const std::vector<Spec> specs{
      {"tr0", Split::kTrain, {"took", "aspirin", "today"}, {}},
      {"tr1", Split::kTrain, {"Aspirin", "helps"}, {}},
      {"tr2", Split::kTrain, {"no", "drugs", "here"}, {}},
      {"tr3", Split::kTrain, {"fever", "and", "aspirin"}, {}},
      {"tr4", Split::kTrain, {"patients", "with", "fever"}, {}},
      {"tr5", Split::kTrain, {"ibuprofen", "for", "fever"}, {}},
      {"tr6", Split::kTrain, {"heparin", "caused", "bleeding"}, {}},
      {"tr7", Split::kTrain, {"nothing", "happened"}, {}},
      {"dv0", Split::kDev, {"took", "aspirin", "today"}, {O, C, O}},
      {"dv1", Split::kDev, {"aspirin", "and", "ibuprofen"}, {C, O, C}},
      {"dv2", Split::kDev, {"patient", "had", "aspirin", "fever"}, {O, O, O, D}},
      {"te0", Split::kTest, {"heparin", "eased", "fever"}, {C, O, D}},
      {"te1", Split::kTest, {"aspirin", "for", "bleeding"}, {C, O, D}},
  };
  auto kind = [](const std::string& w) {
    static const std::vector<std::string> drugs{"aspirin", "ibuprofen", "heparin"};
    static const std::vector<std::string> disease{"fever", "bleeding"};
    const std::string f = CaseFold(w);
    for (const auto& d : drugs) {
      if (f == d) return 0;
    }
    for (const auto& d : disease) {
      if (f == d) return 1;
    }
    return 2;
  };
  std::mt19937_64 rng(13);
  std::normal_distribution<float> noise(0.0f, 0.05f);
  std::vector<Document> docs;
  std::vector<float> a, b, sent;
  for (const auto& s : specs) {
    Document doc;
    doc.id = s.id;
    doc.split = s.split;
    doc.gold = s.gold;
    for (const auto& w : s.words) {
      const int k = kind(w);
      Token t;
      t.text = w;
      t.pos = k == 2 ? "VERB" : "NOUN";
      t.dep = k == 0 ? "dobj" : "nsubj";
      t.ner = k == 0 ? "CHEM" : k == 1 ? "DIS" : "";
      doc.tokens.push_back(t);
      for (int d = 0; d < 3; ++d) {
        a.push_back((d == k ? 1.0f : 0.0f) + noise(rng));
        b.push_back((d == k ? 1.0f : 0.0f) + noise(rng));
      }
    }
    for (int d = 0; d < 3; ++d) sent.push_back(0.3f + std::abs(noise(rng)) * 10.0f);
    docs.push_back(std::move(doc));
  }
  CorpusPaths paths{dir / "corpus.jsonl", dir / "emb_a.bin", dir / "emb_b.bin", dir / "sent.bin",
                    dir / "labels.json"};
  WriteCorpusJsonl(paths.corpus, docs, labels);
  WriteEmbeddings(paths.emb_a, Channel::kEmbA, 3, a);
  WriteEmbeddings(paths.emb_b, Channel::kEmbB, 3, b);
  WriteEmbeddings(paths.sent, Channel::kSent, 3, sent);
  WriteLabelSet(paths.labels, labels);
  return paths;
}

}  // namespace spanlab::testing

#endif  // SPANLAB_TESTS_TOY_PROJECT_H_

#include "spanlab/sampler.h"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_util.h"

namespace spanlab {
namespace {

// Random posteriors over the documents of one split.
SplitPosteriors RandomPosteriors(const Corpus& corpus, Split split, std::mt19937_64& rng) {
  std::vector<Segment> segments;
  std::size_t rows = 0;
  for (auto d : corpus.split(split)) {
    segments.push_back({corpus.document(d).id, rows, corpus.document(d).size()});
    rows += corpus.document(d).size();
  }
  const int width = corpus.labels().num_outputs();
  PosteriorMatrix p(rows, width);
  std::gamma_distribution<double> g(0.5, 1.0);
  for (std::size_t i = 0; i < rows; ++i) {
    double s = 0.0;
    for (int k = 0; k < width; ++k) s += (p.at(i, k) = g(rng) + 1e-9);
    for (int k = 0; k < width; ++k) p.at(i, k) /= s;
  }
  return SplitPosteriors(std::move(segments), std::move(p));
}

double OracleEntropy(const PosteriorMatrix& p, std::size_t offset, std::size_t len) {
  double h = 0.0;
  for (std::size_t t = offset; t < offset + len; ++t) {
    for (int k = 0; k < p.width(); ++k) {
      const double q = p.at(t, k);
      if (q > 0) h += -q * std::log(q);
    }
  }
  return h / len;
}

// Step-by-step reference for the alternating sampler with a fitted model.
std::vector<std::string> ReferenceTrace(const Corpus& corpus, const SplitPosteriors& train,
                                        const SplitPosteriors& dev, std::size_t calls) {
  // Worst dev document: lowest mean gold posterior, ties by id.
  std::string worst;
  double worst_score = 2.0;
  for (const auto& seg : dev.segments()) {
    const auto& gold = corpus.find(seg.doc_id)->gold;
    double s = 0.0;
    for (std::size_t t = 0; t < seg.length; ++t) s += dev.matrix().at(seg.offset + t, gold[t]);
    s /= seg.length;
    if (s < worst_score || (s == worst_score && seg.doc_id < worst)) {
      worst = seg.doc_id;
      worst_score = s;
    }
  }
  const auto& sent = corpus.store(Channel::kSent);
  const auto anchor = sent.row(corpus.find(worst)->sent_emb);

  std::set<std::string> served;
  std::vector<std::string> out;
  for (std::size_t call = 0; call < calls; ++call) {
    std::string best;
    double best_v = -1e300;
    for (const auto& seg : train.segments()) {
      if (served.count(seg.doc_id)) continue;
      const double v =
          call % 2 == 0
              ? Cosine(sent.row(corpus.find(seg.doc_id)->sent_emb), anchor)
              : OracleEntropy(train.matrix(), seg.offset, seg.length);
      if (v > best_v + 1e-12 || (std::abs(v - best_v) <= 1e-12 && seg.doc_id < best)) {
        best = seg.doc_id;
        best_v = v;
      }
    }
    served.insert(best);
    out.push_back(best);
  }
  return out;
}

TEST(DevErrorScoreTest, Examples) {
  PosteriorMatrix p(3, 3);
  for (int i = 0; i < 3; ++i) p.at(i, i) = 1.0;
  const std::vector<int> gold{0, 1, 2};
  EXPECT_DOUBLE_EQ(DevErrorScore(p, {"d", 0, 3}, gold), 1.0);
  PosteriorMatrix u(3, 3);
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) u.at(i, k) = 1.0 / 3.0;
  }
  EXPECT_NEAR(DevErrorScore(u, {"d", 0, 3}, gold), 1.0 / 3.0, 1e-12);
}

TEST(DevErrorScoreTest, ArgminOnTwoDocuments) {
  // Doc "a" scores 0.2, doc "b" 0.9.
  LabelSet labels({"C"});
  std::vector<Document> docs;
  for (std::string id : {"a", "b", "t"}) {
    Document d;
    d.id = id;
    d.split = id == "t" ? Split::kTrain : Split::kDev;
    d.tokens = {{"x", "", "", "", 0, 0}};
    d.sent_emb = docs.size();
    if (d.split == Split::kDev) d.gold = {0};
    docs.push_back(d);
  }
  const Corpus corpus(labels, docs, EmbeddingStore(Channel::kEmbA, 1, {1}),
                      EmbeddingStore(Channel::kEmbB, 1, {1}),
                      EmbeddingStore(Channel::kSent, 1, {1, 1, 1}));
  PosteriorMatrix p(2, 2);
  p.at(0, 0) = 0.2;
  p.at(0, 1) = 0.8;
  p.at(1, 0) = 0.9;
  p.at(1, 1) = 0.1;
  const SplitPosteriors dev({{"a", 0, 1}, {"b", 1, 1}}, p);
  EXPECT_EQ(WorstDevDocument({nullptr, &dev}, corpus), "a");
  EXPECT_FALSE(WorstDevDocument({nullptr, nullptr}, corpus).has_value());
}

// Two-dimensional sentence embeddings for the cosine ordering example.
Corpus SentCorpus(const std::vector<std::vector<float>>& train_sent,
                  const std::vector<float>& dev_sent) {
  LabelSet labels({"C"});
  std::vector<Document> docs;
  std::vector<float> sent;
  for (std::size_t i = 0; i <= train_sent.size(); ++i) {
    Document d;
    const bool dev = i == train_sent.size();
    d.id = dev ? "x" : "t" + std::to_string(i + 1);
    d.split = dev ? Split::kDev : Split::kTrain;
    d.tokens = {{"w", "", "", "", 0, 0}};
    d.sent_emb = i;
    if (dev) d.gold = {1};
    const auto& v = dev ? dev_sent : train_sent[i];
    sent.insert(sent.end(), v.begin(), v.end());
    docs.push_back(d);
  }
  return Corpus(labels, docs, EmbeddingStore(Channel::kEmbA, 1, {1}),
                EmbeddingStore(Channel::kEmbB, 1, {1}), EmbeddingStore(Channel::kSent, 2, sent));
}

TEST(FalsePositivePickTest, CosineOrdering) {
  const Corpus corpus = SentCorpus({{0.995f, 0.1f}, {0.0f, 1.0f}}, {1.0f, 0.0f});
  PosteriorMatrix dp(1, 2);
  dp.at(0, 0) = 1.0;
  const SplitPosteriors dev({{"x", 0, 1}}, dp);
  PosteriorMatrix tp(2, 2);
  tp.at(0, 1) = tp.at(1, 1) = 1.0;
  const SplitPosteriors train({{"t1", 0, 1}, {"t2", 1, 1}}, tp);
  SamplerState state;
  EXPECT_EQ(FalsePositiveGuidedPick(state, {&train, &dev}, corpus), "t1");
  EXPECT_TRUE(state.served.contains("t1"));
  // Single unserved document regardless of similarity.
  EXPECT_EQ(FalsePositiveGuidedPick(state, {&train, &dev}, corpus), "t2");
  EXPECT_THROW(FalsePositiveGuidedPick(state, {&train, &dev}, corpus), SessionComplete);
}

TEST(FalsePositivePickTest, MatchesFullSimilarityScan) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    testing::RandomCorpusOptions o;
    o.seed = seed;
    o.train = 50;
    o.centroids = 50;
    const Corpus corpus = testing::RandomCorpus(o);
    std::mt19937_64 rng(seed);
    const auto train = RandomPosteriors(corpus, Split::kTrain, rng);
    const auto dev = RandomPosteriors(corpus, Split::kDev, rng);
    SamplerState state;
    const auto got = FalsePositiveGuidedPick(state, {&train, &dev}, corpus);
    EXPECT_EQ(got, ReferenceTrace(corpus, train, dev, 1).front());
  }
}

TEST(UncertaintyPickTest, EntropyOrdering) {
  const Corpus corpus = SentCorpus({{1, 0}, {0, 1}}, {1, 0});
  PosteriorMatrix tp(2, 2);
  tp.at(0, 0) = 1.0;
  tp.at(1, 0) = tp.at(1, 1) = 0.5;
  const SplitPosteriors train({{"t1", 0, 1}, {"t2", 1, 1}}, tp);
  SamplerState state;
  const auto pick = UncertaintyPick(state, {&train, nullptr}, corpus);
  EXPECT_EQ(pick.doc_id, "t2");
  EXPECT_EQ(pick.strategy, Strategy::kUncertainty);
  EXPECT_NEAR(MeanEntropy(tp, {"t2", 1, 1}), std::log(2.0), 1e-12);
  EXPECT_DOUBLE_EQ(MeanEntropy(tp, {"t1", 0, 1}), 0.0);
}

TEST(UncertaintyPickTest, MatchesBruteForceEntropyScan) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    testing::RandomCorpusOptions o;
    o.seed = seed;
    const Corpus corpus = testing::RandomCorpus(o);
    std::mt19937_64 rng(seed + 100);
    const auto train = RandomPosteriors(corpus, Split::kTrain, rng);
    SamplerState state;
    const auto got = UncertaintyPick(state, {&train, nullptr}, corpus).doc_id;
    std::string best;
    double best_h = -1.0;
    for (const auto& seg : train.segments()) {
      const double h = OracleEntropy(train.matrix(), seg.offset, seg.length);
      if (h > best_h) {
        best = seg.doc_id;
        best_h = h;
      }
    }
    EXPECT_EQ(got, best);
  }
}

TEST(UncertaintyPickTest, ColdStartIsSeededAndDeterministic) {
  testing::RandomCorpusOptions o;
  o.train = 40;
  const Corpus corpus = testing::RandomCorpus(o);
  std::vector<std::string> first;
  for (int run = 0; run < 3; ++run) {
    SamplerState state;
    state.seed = 99;
    std::vector<std::string> picks;
    for (int i = 0; i < 10; ++i) {
      const auto p = NextDocument(state, {}, corpus);
      EXPECT_EQ(p.strategy, Strategy::kColdStart);
      picks.push_back(p.doc_id);
    }
    EXPECT_EQ(state.parity, 10u);
    if (run == 0) {
      first = picks;
    } else {
      EXPECT_EQ(picks, first);
    }
  }
  EXPECT_STREQ(StrategyName(Strategy::kColdStart), "uncertainty-cold-start");
}

TEST(NextDocumentTest, FreshStateFallsBackAndAdvancesParity) {
  const Corpus corpus = testing::RandomCorpus({});
  SamplerState state;
  const auto p = NextDocument(state, {}, corpus);
  EXPECT_EQ(p.strategy, Strategy::kColdStart);
  EXPECT_EQ(state.parity, 1u);
}

TEST(NextDocumentTest, AlternatesAndMatchesReferenceTrace) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    testing::RandomCorpusOptions o;
    o.seed = seed;
    o.train = 30;
    o.centroids = 30;
    const Corpus corpus = testing::RandomCorpus(o);
    std::mt19937_64 rng(seed);
    const auto train = RandomPosteriors(corpus, Split::kTrain, rng);
    const auto dev = RandomPosteriors(corpus, Split::kDev, rng);
    SamplerState state;
    std::vector<std::string> picks;
    std::size_t fp = 0;
    for (int call = 0; call < 20; ++call) {
      const auto p = NextDocument(state, {&train, &dev}, corpus);
      EXPECT_EQ(p.strategy,
                call % 2 == 0 ? Strategy::kFalsePositiveGuided : Strategy::kUncertainty);
      fp += p.strategy == Strategy::kFalsePositiveGuided;
      picks.push_back(p.doc_id);
    }
    EXPECT_EQ(fp, 10u);
    EXPECT_EQ(picks, ReferenceTrace(corpus, train, dev, 20));
    EXPECT_EQ(std::set<std::string>(picks.begin(), picks.end()).size(), picks.size());
  }
}

TEST(NextDocumentTest, OddParityUsesUncertainty) {
  const Corpus corpus = testing::RandomCorpus({});
  std::mt19937_64 rng(1);
  const auto train = RandomPosteriors(corpus, Split::kTrain, rng);
  const auto dev = RandomPosteriors(corpus, Split::kDev, rng);
  SamplerState state;
  state.parity = 1;
  EXPECT_EQ(NextDocument(state, {&train, &dev}, corpus).strategy, Strategy::kUncertainty);
  EXPECT_EQ(NextDocument(state, {&train, &dev}, corpus).strategy,
            Strategy::kFalsePositiveGuided);
}

TEST(NextDocumentTest, NoRepeatsUntilExhausted) {
  const Corpus corpus = testing::RandomCorpus({});
  std::mt19937_64 rng(2);
  const auto train = RandomPosteriors(corpus, Split::kTrain, rng);
  const auto dev = RandomPosteriors(corpus, Split::kDev, rng);
  for (bool fitted : {false, true}) {
    SamplerState state;
    state.seed = 5;
    std::set<std::string> seen;
    const SamplerModel model = fitted ? SamplerModel{&train, &dev} : SamplerModel{};
    for (std::size_t i = 0; i < corpus.split(Split::kTrain).size(); ++i) {
      const std::size_t before = state.served.size();
      EXPECT_TRUE(seen.insert(NextDocument(state, model, corpus).doc_id).second);
      EXPECT_EQ(state.served.size(), before + 1);
    }
    const auto parity = state.parity;
    EXPECT_THROW(NextDocument(state, model, corpus), SessionComplete);
    EXPECT_EQ(state.parity, parity);
  }
}

}  // namespace
}  // namespace spanlab

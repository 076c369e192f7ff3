#include "spanlab/sampler.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace spanlab {

SplitPosteriors::SplitPosteriors(std::vector<Segment> segments, PosteriorMatrix p)
    : segments_(std::move(segments)), p_(std::move(p)) {
  for (std::size_t i = 0; i < segments_.size(); ++i) index_.emplace(segments_[i].doc_id, i);
}

const Segment* SplitPosteriors::find(std::string_view doc_id) const {
  auto it = index_.find(std::string(doc_id));
  return it == index_.end() ? nullptr : &segments_[it->second];
}

const char* StrategyName(Strategy strategy) {
  switch (strategy) {
    case Strategy::kFalsePositiveGuided: return "similar-to-error";
    case Strategy::kUncertainty: return "uncertain";
    case Strategy::kColdStart: return "uncertainty-cold-start";
  }
  return "uncertain";
}

double DevErrorScore(const PosteriorMatrix& p, const Segment& segment,
                     std::span<const int> gold) {
  if (gold.size() != segment.length) {
    throw std::invalid_argument("gold does not align with the document");
  }
  double sum = 0.0;
  for (std::size_t t = 0; t < segment.length; ++t) sum += p.at(segment.offset + t, gold[t]);
  return sum / static_cast<double>(segment.length);
}

double MeanEntropy(const PosteriorMatrix& p, const Segment& segment) {
  double sum = 0.0;
  for (std::size_t t = 0; t < segment.length; ++t) {
    for (double q : p.row(segment.offset + t)) {
      if (q > 0.0) sum -= q * std::log(q);
    }
  }
  return sum / static_cast<double>(segment.length);
}

namespace {

// Unserved train document ids in lexicographic order.
std::vector<std::string> Unserved(const SamplerState& state, const Corpus& corpus) {
  std::vector<std::string> ids;
  for (std::size_t index : corpus.split(Split::kTrain)) {
    const auto& id = corpus.document(index).id;
    if (!state.served.contains(id)) ids.push_back(id);
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace

std::optional<std::string> WorstDevDocument(const SamplerModel& model, const Corpus& corpus) {
  if (!model.dev || model.dev->segments().empty()) return std::nullopt;
  std::optional<std::string> best;
  double best_score = 0.0;
  for (const auto& seg : model.dev->segments()) {
    const Document* doc = corpus.find(seg.doc_id);
    if (!doc || !doc->has_gold()) continue;
    const double score = DevErrorScore(model.dev->matrix(), seg, doc->gold);
    if (!best || score < best_score || (score == best_score && seg.doc_id < *best)) {
      best = seg.doc_id;
      best_score = score;
    }
  }
  return best;
}

std::string FalsePositiveGuidedPick(SamplerState& state, const SamplerModel& model,
                                    const Corpus& corpus) {
  const auto candidates = Unserved(state, corpus);
  if (candidates.empty()) throw SessionComplete();
  const auto worst = WorstDevDocument(model, corpus);
  if (!worst) throw std::logic_error("false-positive sampling needs a fitted model and dev gold");
  const auto& sent = corpus.store(Channel::kSent);
  const std::size_t anchor = corpus.find(*worst)->sent_emb;

  const std::string* best = nullptr;
  double best_sim = 0.0;
  for (const auto& id : candidates) {
    const double sim = sent.similarity(corpus.find(id)->sent_emb, anchor);
    // Candidates are sorted, so strict > keeps the smallest id on ties.
    if (!best || sim > best_sim) {
      best = &id;
      best_sim = sim;
    }
  }
  state.served.insert(*best);
  return *best;
}

Pick UncertaintyPick(SamplerState& state, const SamplerModel& model, const Corpus& corpus) {
  const auto candidates = Unserved(state, corpus);
  if (candidates.empty()) throw SessionComplete();
  Pick pick;
  if (!model.train) {
    // Seeded from the state alone so a reloaded session repeats the pick.
    std::mt19937_64 rng(state.seed ^ (0x9e3779b97f4a7c15ull * (state.served.size() + 1)));
    pick.doc_id = candidates[rng() % candidates.size()];
    pick.strategy = Strategy::kColdStart;
  } else {
    const std::string* best = nullptr;
    double best_h = 0.0;
    for (const auto& id : candidates) {
      const Segment* seg = model.train->find(id);
      if (!seg) throw std::logic_error("train posterior is missing document " + id);
      const double h = MeanEntropy(model.train->matrix(), *seg);
      if (!best || h > best_h) {
        best = &id;
        best_h = h;
      }
    }
    pick.doc_id = *best;
    pick.strategy = Strategy::kUncertainty;
  }
  state.served.insert(pick.doc_id);
  return pick;
}

Pick NextDocument(SamplerState& state, const SamplerModel& model, const Corpus& corpus) {
  Pick pick;
  const bool fp_available = model.train && WorstDevDocument(model, corpus).has_value();
  if (state.parity % 2 == 0 && fp_available) {
    pick.doc_id = FalsePositiveGuidedPick(state, model, corpus);
    pick.strategy = Strategy::kFalsePositiveGuided;
  } else {
    pick = UncertaintyPick(state, model, corpus);
  }
  ++state.parity;
  return pick;
}

}  // namespace spanlab

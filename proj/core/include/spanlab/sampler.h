#ifndef SPANLAB_SAMPLER_H_
#define SPANLAB_SAMPLER_H_

#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include "spanlab/corpus.h"
#include "spanlab/label_model.h"

namespace spanlab {

// Posteriors of one split, addressable by document id.
class SplitPosteriors {
 public:
  SplitPosteriors() = default;
  SplitPosteriors(std::vector<Segment> segments, PosteriorMatrix p);

  const std::vector<Segment>& segments() const { return segments_; }
  const PosteriorMatrix& matrix() const { return p_; }
  // Nullptr when the document is not part of this split.
  const Segment* find(std::string_view doc_id) const;

 private:
  std::vector<Segment> segments_;
  PosteriorMatrix p_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Read-only view of a fitted model as the sampler needs it.
struct SamplerModel {
  const SplitPosteriors* train = nullptr;
  const SplitPosteriors* dev = nullptr;
};

struct SamplerState {
  std::uint64_t parity = 0;
  std::set<std::string> served;
  std::uint64_t seed = 0;
  bool operator==(const SamplerState&) const = default;
};

enum class Strategy { kFalsePositiveGuided, kUncertainty, kColdStart };

const char* StrategyName(Strategy strategy);

struct Pick {
  std::string doc_id;
  Strategy strategy = Strategy::kColdStart;
};

// Thrown when every train document has already been served.
class SessionComplete : public std::runtime_error {
 public:
  SessionComplete() : std::runtime_error("all train documents have been served") {}
};

// Mean over tokens of the posterior mass on the gold label.
double DevErrorScore(const PosteriorMatrix& p, const Segment& segment,
                     std::span<const int> gold);

// The dev document with the lowest DevErrorScore (ties by id), or nullopt
// when there is no dev posterior.
std::optional<std::string> WorstDevDocument(const SamplerModel& model, const Corpus& corpus);

// Mean natural-log entropy of the document's token posteriors.
double MeanEntropy(const PosteriorMatrix& p, const Segment& segment);

// Each pick marks the returned document as served. They throw
// SessionComplete when nothing is left and std::logic_error when their own
// preconditions fail.
std::string FalsePositiveGuidedPick(SamplerState& state, const SamplerModel& model,
                                    const Corpus& corpus);
Pick UncertaintyPick(SamplerState& state, const SamplerModel& model, const Corpus& corpus);

// Alternates FP-guided (even parity) and uncertainty (odd parity) picks,
// falling back to uncertainty when FP-guided is unavailable. Parity advances
// on every successful call.
Pick NextDocument(SamplerState& state, const SamplerModel& model, const Corpus& corpus);

}  // namespace spanlab

#endif  // SPANLAB_SAMPLER_H_

#ifndef SPANLAB_RULES_H_
#define SPANLAB_RULES_H_

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "spanlab/corpus.h"

namespace spanlab {

enum class ConditionKind {
  kTokenExact,
  kSimilarA,
  kSimilarB,
  kPosMatch,
  kDepMatch,
  kNerMatch,
};

const char* ConditionKindName(ConditionKind kind);
std::optional<ConditionKind> ParseConditionKind(std::string_view name);
bool IsSimilarity(ConditionKind kind);
bool IsTagMatch(ConditionKind kind);

struct VecRef {
  Channel channel = Channel::kEmbA;
  std::size_t row = 0;
  bool operator==(const VecRef&) const = default;
};

// One test on one token. Lexical and tag conditions compare against
// `anchor`; similarity conditions compare the token's embedding with the
// stored row `vec` against `tau`.
struct AtomicCondition {
  ConditionKind kind = ConditionKind::kTokenExact;
  std::string anchor;
  VecRef vec;
  double tau = 0.0;
  bool negated = false;
  // Surface text of the demonstration token, used only for rendering
  // similarity conditions. Not part of the identity.
  std::string display;

  static AtomicCondition TokenExact(std::string text);
  static AtomicCondition Tag(ConditionKind kind, std::string tag);
  static AtomicCondition Similar(ConditionKind kind, std::size_t row, double tau,
                                 std::string display = {});

  AtomicCondition Negated() const;
  // Throws std::invalid_argument if payload and kind disagree.
  void Validate() const;
};

enum class Polarity { kPositive, kNegative };

const char* PolarityName(Polarity polarity);
std::optional<Polarity> ParsePolarity(std::string_view name);

// A conjunction of one or two conditions that must hold on one token.
using ConditionSet = std::vector<AtomicCondition>;

struct LabelingFunction {
  std::string id;
  std::vector<ConditionSet> pattern;
  std::string target;
  Polarity polarity = Polarity::kPositive;
  // Index of the annotation that produced this function, if any.
  std::optional<std::size_t> provenance;
  std::string name;

  std::size_t span_length() const { return pattern.size(); }
  // The label code this function emits when it fires.
  int vote(const LabelSet& labels) const;
};

// Builds a function, validating the pattern and filling id and name.
// Throws std::invalid_argument.
LabelingFunction MakeLabelingFunction(std::vector<ConditionSet> pattern,
                                      std::string target, Polarity polarity,
                                      std::optional<std::size_t> provenance = {});

// Sorted-key, whitespace-free JSON that defines a function's identity.
std::string CanonicalJson(const LabelingFunction& lf);
// Lowercase hex SHA-256 of CanonicalJson.
std::string FunctionId(const LabelingFunction& lf);
std::string Sha256Hex(std::string_view data);

std::string Describe(const LabelingFunction& lf);

struct SpanAnnotation {
  std::string doc_id;
  std::size_t start = 0;
  std::size_t end = 0;
  std::string label;
  Polarity polarity = Polarity::kPositive;
};

struct MatchSpan {
  std::string doc_id;
  std::size_t start = 0;
  std::size_t end = 0;
  std::string lf_id;
  int vote = kAbstain;
  bool operator==(const MatchSpan&) const = default;
};

inline constexpr double kDefaultTau = 0.85;
inline constexpr std::size_t kMaxSpanLength = 5;
inline constexpr std::size_t kMaxCandidates = 24;

class AnnotationError : public std::invalid_argument {
 public:
  enum class Code { kInvalidSpan, kUnknownLabel, kUnknownDocument, kSpanTooLong };
  AnnotationError(Code code, const std::string& what)
      : std::invalid_argument(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

const char* AnnotationErrorCode(AnnotationError::Code code);

// Throws AnnotationError when the annotation does not fit the corpus.
void ValidateAnnotation(const SpanAnnotation& ann, const Corpus& corpus);

bool EvalCondition(const AtomicCondition& cond, const Token& token,
                   const Corpus& corpus);
bool EvalConditionSet(const ConditionSet& set, const Token& token,
                      const Corpus& corpus);

std::vector<MatchSpan> ApplyFunction(const LabelingFunction& lf,
                                     const Document& doc, const Corpus& corpus);

// Number of train documents with at least one match.
std::size_t TrainDocumentCoverage(const LabelingFunction& lf,
                                  const Corpus& corpus);

struct SynthesisResult {
  std::vector<LabelingFunction> candidates;
  // Coverage (train documents with a match), aligned with candidates.
  std::vector<std::size_t> doc_coverage;
  // True when the demonstration was made on a dev or test document.
  bool off_train = false;
};

struct SynthesisOptions {
  double tau = kDefaultTau;
};

// Turns a span demonstration into a ranked list of candidate functions.
// Throws AnnotationError.
SynthesisResult Synthesize(const SpanAnnotation& ann, const Corpus& corpus,
                           std::optional<std::size_t> provenance = {},
                           const SynthesisOptions& options = {});

}  // namespace spanlab

#endif  // SPANLAB_RULES_H_

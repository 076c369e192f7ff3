#include "spanlab/rules.h"

#include <openssl/evp.h>

#include <algorithm>
#include <cstdio>
#include <memory>
#include <sstream>
#include <unordered_set>

#include "json.hpp"

namespace spanlab {

using nlohmann::json;

// Absorbs float rounding so a token stays similar to itself at tau = 1.
constexpr double kSimilaritySlack = 1e-6;

const char* ConditionKindName(ConditionKind kind) {
  switch (kind) {
    case ConditionKind::kTokenExact: return "TOKEN_EXACT";
    case ConditionKind::kSimilarA: return "SIMILAR_A";
    case ConditionKind::kSimilarB: return "SIMILAR_B";
    case ConditionKind::kPosMatch: return "POS_MATCH";
    case ConditionKind::kDepMatch: return "DEP_MATCH";
    case ConditionKind::kNerMatch: return "NER_MATCH";
  }
  return "TOKEN_EXACT";
}

std::optional<ConditionKind> ParseConditionKind(std::string_view name) {
  for (auto kind : {ConditionKind::kTokenExact, ConditionKind::kSimilarA,
                    ConditionKind::kSimilarB, ConditionKind::kPosMatch,
                    ConditionKind::kDepMatch, ConditionKind::kNerMatch}) {
    if (name == ConditionKindName(kind)) return kind;
  }
  return std::nullopt;
}

bool IsSimilarity(ConditionKind kind) {
  return kind == ConditionKind::kSimilarA || kind == ConditionKind::kSimilarB;
}

bool IsTagMatch(ConditionKind kind) {
  return kind == ConditionKind::kPosMatch || kind == ConditionKind::kDepMatch ||
         kind == ConditionKind::kNerMatch;
}

AtomicCondition AtomicCondition::TokenExact(std::string text) {
  AtomicCondition c;
  c.kind = ConditionKind::kTokenExact;
  c.anchor = CaseFold(text);
  c.Validate();
  return c;
}

AtomicCondition AtomicCondition::Tag(ConditionKind kind, std::string tag) {
  AtomicCondition c;
  c.kind = kind;
  c.anchor = std::move(tag);
  c.Validate();
  return c;
}

AtomicCondition AtomicCondition::Similar(ConditionKind kind, std::size_t row,
                                         double tau, std::string display) {
  AtomicCondition c;
  c.kind = kind;
  c.vec = {kind == ConditionKind::kSimilarA ? Channel::kEmbA : Channel::kEmbB, row};
  c.tau = tau;
  c.display = std::move(display);
  c.Validate();
  return c;
}

AtomicCondition AtomicCondition::Negated() const {
  AtomicCondition c = *this;
  c.negated = !c.negated;
  return c;
}

void AtomicCondition::Validate() const {
  if (IsSimilarity(kind)) {
    if (!(tau > 0.0 && tau <= 1.0)) {
      throw std::invalid_argument("similarity threshold must lie in (0, 1]");
    }
    const Channel want = kind == ConditionKind::kSimilarA ? Channel::kEmbA : Channel::kEmbB;
    if (vec.channel != want) {
      throw std::invalid_argument("similarity condition references the wrong channel");
    }
  } else if (anchor.empty()) {
    throw std::invalid_argument(std::string(ConditionKindName(kind)) +
                                " needs a non-empty anchor");
  }
}

const char* PolarityName(Polarity polarity) {
  return polarity == Polarity::kPositive ? "positive" : "negative";
}

std::optional<Polarity> ParsePolarity(std::string_view name) {
  if (name == "positive" || name == "+") return Polarity::kPositive;
  if (name == "negative" || name == "-") return Polarity::kNegative;
  return std::nullopt;
}

int LabelingFunction::vote(const LabelSet& labels) const {
  if (polarity == Polarity::kNegative) return labels.background();
  const auto code = labels.code(target);
  if (!code || *code == labels.background()) {
    throw std::invalid_argument("labeling function targets unknown class " + target);
  }
  return *code;
}

namespace {

json ConditionJson(const AtomicCondition& c) {
  json j;
  j["kind"] = ConditionKindName(c.kind);
  j["negated"] = c.negated;
  if (IsSimilarity(c.kind)) {
    j["anchor"] = nullptr;
    j["vec_ref"] = {{"channel", ChannelName(c.vec.channel)}, {"row", c.vec.row}};
    j["tau"] = c.tau;
  } else {
    j["anchor"] = c.anchor;
    j["vec_ref"] = nullptr;
    j["tau"] = nullptr;
  }
  return j;
}

std::string FormatTau(double tau) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", tau);
  return buf;
}

std::string DescribeCondition(const AtomicCondition& c) {
  std::string out = c.negated ? "NOT " : "";
  switch (c.kind) {
    case ConditionKind::kTokenExact:
      out += "text=\"" + c.anchor + "\"";
      break;
    case ConditionKind::kPosMatch:
      out += "pos=" + c.anchor;
      break;
    case ConditionKind::kDepMatch:
      out += "dep=" + c.anchor;
      break;
    case ConditionKind::kNerMatch:
      out += "ner=" + c.anchor;
      break;
    case ConditionKind::kSimilarA:
    case ConditionKind::kSimilarB: {
      out += c.kind == ConditionKind::kSimilarA ? "sim_a(" : "sim_b(";
      out += c.display.empty() ? "#" + std::to_string(c.vec.row) : "\"" + c.display + "\"";
      out += ")>=" + FormatTau(c.tau);
      break;
    }
  }
  return out;
}

}  // namespace

std::string CanonicalJson(const LabelingFunction& lf) {
  json pattern = json::array();
  for (const auto& set : lf.pattern) {
    json position = json::array();
    for (const auto& c : set) position.push_back(ConditionJson(c));
    pattern.push_back(std::move(position));
  }
  json j;
  j["pattern"] = std::move(pattern);
  j["target"] = lf.target;
  j["polarity"] = PolarityName(lf.polarity);
  // nlohmann::json objects keep keys sorted; dump() emits no whitespace.
  return j.dump();
}

std::string Sha256Hex(std::string_view data) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(),
                                                               &EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), data.data(), data.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
    throw std::runtime_error("SHA-256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

std::string FunctionId(const LabelingFunction& lf) {
  return Sha256Hex(CanonicalJson(lf));
}

std::string Describe(const LabelingFunction& lf) {
  std::string out;
  for (std::size_t p = 0; p < lf.pattern.size(); ++p) {
    if (p) out += ' ';
    out += '[';
    for (std::size_t i = 0; i < lf.pattern[p].size(); ++i) {
      if (i) out += " AND ";
      out += DescribeCondition(lf.pattern[p][i]);
    }
    out += ']';
  }
  if (lf.polarity == Polarity::kPositive) {
    out += " → " + lf.target;
  } else {
    out += " → NOT " + lf.target + " (O)";
  }
  return out;
}

LabelingFunction MakeLabelingFunction(std::vector<ConditionSet> pattern,
                                      std::string target, Polarity polarity,
                                      std::optional<std::size_t> provenance) {
  if (pattern.empty()) throw std::invalid_argument("pattern needs at least one position");
  for (const auto& set : pattern) {
    if (set.empty() || set.size() > 2) {
      throw std::invalid_argument("each position holds one or two conditions");
    }
    for (const auto& c : set) c.Validate();
  }
  if (target.empty()) throw std::invalid_argument("labeling function needs a target");
  LabelingFunction lf;
  lf.pattern = std::move(pattern);
  lf.target = std::move(target);
  lf.polarity = polarity;
  lf.provenance = provenance;
  lf.id = FunctionId(lf);
  lf.name = Describe(lf);
  return lf;
}

const char* AnnotationErrorCode(AnnotationError::Code code) {
  switch (code) {
    case AnnotationError::Code::kInvalidSpan: return "INVALID_SPAN";
    case AnnotationError::Code::kUnknownLabel: return "UNKNOWN_LABEL";
    case AnnotationError::Code::kUnknownDocument: return "UNKNOWN_DOC";
    case AnnotationError::Code::kSpanTooLong: return "SPAN_TOO_LONG";
  }
  return "INVALID_SPAN";
}

void ValidateAnnotation(const SpanAnnotation& ann, const Corpus& corpus) {
  const Document* doc = corpus.find(ann.doc_id);
  if (!doc) {
    throw AnnotationError(AnnotationError::Code::kUnknownDocument,
                          "unknown document " + ann.doc_id);
  }
  if (ann.start >= ann.end || ann.end > doc->size()) {
    throw AnnotationError(AnnotationError::Code::kInvalidSpan,
                          "span [" + std::to_string(ann.start) + ", " +
                              std::to_string(ann.end) + ") is not inside a document of " +
                              std::to_string(doc->size()) + " tokens");
  }
  const auto code = corpus.labels().code(ann.label);
  if (!code || *code == corpus.labels().background()) {
    throw AnnotationError(AnnotationError::Code::kUnknownLabel,
                          "unknown label " + ann.label);
  }
}

bool EvalCondition(const AtomicCondition& cond, const Token& token,
                   const Corpus& corpus) {
  bool result = false;
  switch (cond.kind) {
    case ConditionKind::kTokenExact:
      result = CaseFold(token.text) == cond.anchor;
      break;
    case ConditionKind::kSimilarA:
      result = corpus.store(Channel::kEmbA).similarity(token.emb_a, cond.vec.row) >= cond.tau - kSimilaritySlack;
      break;
    case ConditionKind::kSimilarB:
      result = corpus.store(Channel::kEmbB).similarity(token.emb_b, cond.vec.row) >= cond.tau - kSimilaritySlack;
      break;
    case ConditionKind::kPosMatch:
      result = token.pos == cond.anchor;
      break;
    case ConditionKind::kDepMatch:
      result = token.dep == cond.anchor;
      break;
    case ConditionKind::kNerMatch:
      result = !token.ner.empty() && token.ner == cond.anchor;
      break;
  }
  return result != cond.negated;
}

bool EvalConditionSet(const ConditionSet& set, const Token& token,
                      const Corpus& corpus) {
  return std::all_of(set.begin(), set.end(), [&](const AtomicCondition& c) {
    return EvalCondition(c, token, corpus);
  });
}

std::vector<MatchSpan> ApplyFunction(const LabelingFunction& lf,
                                     const Document& doc, const Corpus& corpus) {
  std::vector<MatchSpan> matches;
  const std::size_t k = lf.span_length();
  if (k == 0 || k > doc.size()) return matches;
  const int vote = lf.vote(corpus.labels());
  for (std::size_t start = 0; start + k <= doc.size(); ++start) {
    bool ok = true;
    for (std::size_t p = 0; p < k && ok; ++p) {
      ok = EvalConditionSet(lf.pattern[p], doc.tokens[start + p], corpus);
    }
    if (ok) matches.push_back({doc.id, start, start + k, lf.id, vote});
  }
  return matches;
}

std::size_t TrainDocumentCoverage(const LabelingFunction& lf,
                                  const Corpus& corpus) {
  std::size_t covered = 0;
  for (std::size_t index : corpus.split(Split::kTrain)) {
    if (!ApplyFunction(lf, corpus.document(index), corpus).empty()) ++covered;
  }
  return covered;
}

namespace {

// Conditions offered for one demonstration token, in a fixed order.
std::vector<AtomicCondition> ConditionMenu(const Token& token, double tau) {
  std::vector<AtomicCondition> menu;
  menu.push_back(AtomicCondition::TokenExact(token.text));
  if (!token.pos.empty()) menu.push_back(AtomicCondition::Tag(ConditionKind::kPosMatch, token.pos));
  if (!token.dep.empty()) menu.push_back(AtomicCondition::Tag(ConditionKind::kDepMatch, token.dep));
  if (!token.ner.empty()) menu.push_back(AtomicCondition::Tag(ConditionKind::kNerMatch, token.ner));
  menu.push_back(AtomicCondition::Similar(ConditionKind::kSimilarA, token.emb_a, tau, token.text));
  menu.push_back(AtomicCondition::Similar(ConditionKind::kSimilarB, token.emb_b, tau, token.text));
  return menu;
}

}  // namespace

SynthesisResult Synthesize(const SpanAnnotation& ann, const Corpus& corpus,
                           std::optional<std::size_t> provenance,
                           const SynthesisOptions& options) {
  ValidateAnnotation(ann, corpus);
  const std::size_t k = ann.end - ann.start;
  if (k > kMaxSpanLength) {
    throw AnnotationError(AnnotationError::Code::kSpanTooLong,
                          "span of " + std::to_string(k) + " tokens exceeds the limit of " +
                              std::to_string(kMaxSpanLength) +
                              "; annotate a shorter span");
  }
  const Document& doc = *corpus.find(ann.doc_id);

  std::vector<std::vector<AtomicCondition>> menus;
  for (std::size_t i = ann.start; i < ann.end; ++i) {
    menus.push_back(ConditionMenu(doc.tokens[i], options.tau));
  }

  std::vector<std::vector<ConditionSet>> patterns;
  if (k == 1) {
    const auto& menu = menus.front();
    for (const auto& c : menu) patterns.push_back({{c}});
    for (const auto& a : menu) {
      if (IsTagMatch(a.kind)) continue;
      for (const auto& b : menu) {
        if (IsTagMatch(b.kind)) patterns.push_back({{a, b}});
      }
    }
  } else {
    for (auto kind : {ConditionKind::kTokenExact, ConditionKind::kPosMatch,
                      ConditionKind::kDepMatch, ConditionKind::kNerMatch,
                      ConditionKind::kSimilarA, ConditionKind::kSimilarB}) {
      std::vector<ConditionSet> pattern;
      for (const auto& menu : menus) {
        auto it = std::find_if(menu.begin(), menu.end(),
                               [&](const AtomicCondition& c) { return c.kind == kind; });
        if (it == menu.end()) break;
        pattern.push_back({*it});
      }
      if (pattern.size() == k) patterns.push_back(std::move(pattern));
    }
  }

  struct Ranked {
    LabelingFunction lf;
    std::size_t coverage;
  };
  std::vector<Ranked> ranked;
  std::unordered_set<std::string> seen;
  for (auto& pattern : patterns) {
    auto lf = MakeLabelingFunction(std::move(pattern), ann.label, ann.polarity, provenance);
    if (!seen.insert(lf.id).second) continue;
    const std::size_t coverage = TrainDocumentCoverage(lf, corpus);
    ranked.push_back({std::move(lf), coverage});
  }
  std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
    if (a.coverage != b.coverage) return a.coverage > b.coverage;
    if (a.lf.name != b.lf.name) return a.lf.name < b.lf.name;
    return a.lf.id < b.lf.id;
  });
  if (ranked.size() > kMaxCandidates) ranked.resize(kMaxCandidates);

  SynthesisResult result;
  result.off_train = doc.split != Split::kTrain;
  for (auto& r : ranked) {
    result.doc_coverage.push_back(r.coverage);
    result.candidates.push_back(std::move(r.lf));
  }
  return result;
}

}  // namespace spanlab

#include "json_io.h"

#include <stdexcept>

namespace spanlab::json_io {

namespace {

json ConditionToJson(const AtomicCondition& c) {
  json j;
  j["kind"] = ConditionKindName(c.kind);
  j["negated"] = c.negated;
  if (IsSimilarity(c.kind)) {
    j["anchor"] = nullptr;
    j["vec_ref"] = {{"channel", ChannelName(c.vec.channel)}, {"row", c.vec.row}};
    j["tau"] = c.tau;
    j["display"] = c.display;
  } else {
    j["anchor"] = c.anchor;
    j["vec_ref"] = nullptr;
    j["tau"] = nullptr;
  }
  return j;
}

AtomicCondition ConditionFromJson(const json& j) {
  const auto kind = ParseConditionKind(j.at("kind").get<std::string>());
  if (!kind) throw std::invalid_argument("unknown condition kind " + j.at("kind").dump());
  AtomicCondition c;
  c.kind = *kind;
  c.negated = j.value("negated", false);
  if (IsSimilarity(c.kind)) {
    const auto& ref = j.at("vec_ref");
    const auto channel = ParseChannel(ref.at("channel").get<std::string>());
    if (!channel) throw std::invalid_argument("unknown channel in vec_ref");
    c.vec = {*channel, ref.at("row").get<std::size_t>()};
    c.tau = j.at("tau").get<double>();
    c.display = j.value("display", std::string());
  } else {
    c.anchor = j.at("anchor").get<std::string>();
  }
  c.Validate();
  return c;
}

json Optional(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

}  // namespace

json ToJson(const LabelingFunction& lf) {
  json pattern = json::array();
  for (const auto& set : lf.pattern) {
    json position = json::array();
    for (const auto& c : set) position.push_back(ConditionToJson(c));
    pattern.push_back(std::move(position));
  }
  json j;
  j["id"] = lf.id;
  j["name"] = lf.name;
  j["pattern"] = std::move(pattern);
  j["target"] = lf.target;
  j["polarity"] = PolarityName(lf.polarity);
  j["provenance"] = lf.provenance ? json(*lf.provenance) : json(nullptr);
  return j;
}

LabelingFunction FunctionFromJson(const json& j) {
  try {
    std::vector<ConditionSet> pattern;
    for (const auto& position : j.at("pattern")) {
      ConditionSet set;
      for (const auto& c : position) set.push_back(ConditionFromJson(c));
      pattern.push_back(std::move(set));
    }
    const auto polarity = ParsePolarity(j.at("polarity").get<std::string>());
    if (!polarity) throw std::invalid_argument("bad polarity");
    std::optional<std::size_t> provenance;
    if (j.contains("provenance") && !j["provenance"].is_null()) {
      provenance = j["provenance"].get<std::size_t>();
    }
    auto lf = MakeLabelingFunction(std::move(pattern), j.at("target").get<std::string>(),
                                   *polarity, provenance);
    if (j.contains("id") && j["id"].get<std::string>() != lf.id) {
      throw std::invalid_argument("stored id does not match function content");
    }
    return lf;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed labeling function: ") + e.what());
  }
}

json ToJson(const SpanAnnotation& ann) {
  return {{"doc_id", ann.doc_id},
          {"start", ann.start},
          {"end", ann.end},
          {"label", ann.label},
          {"polarity", PolarityName(ann.polarity)}};
}

SpanAnnotation AnnotationFromJson(const json& j) {
  SpanAnnotation ann;
  ann.doc_id = j.at("doc_id").get<std::string>();
  ann.start = j.at("start").get<std::size_t>();
  ann.end = j.at("end").get<std::size_t>();
  ann.label = j.at("label").get<std::string>();
  const auto polarity = ParsePolarity(j.value("polarity", std::string("positive")));
  if (!polarity) throw std::invalid_argument("polarity must be positive or negative");
  ann.polarity = *polarity;
  return ann;
}

json ToJson(const LFStats& s) {
  return {{"coverage", s.coverage},
          {"dev_votes", s.dev_votes},
          {"dev_correct", s.dev_correct},
          {"dev_precision", Optional(s.dev_precision)},
          {"conflict_rate", s.conflict_rate}};
}

json ToJson(const ModelMetrics& m) {
  json classes = json::array();
  for (const auto& c : m.per_class) {
    classes.push_back({{"label", c.label},
                       {"tp", c.tp},
                       {"fp", c.fp},
                       {"fn", c.fn},
                       {"precision", c.precision},
                       {"recall", c.recall},
                       {"f1", c.f1}});
  }
  return {{"per_class", std::move(classes)},
          {"tp", m.tp},
          {"fp", m.fp},
          {"fn", m.fn},
          {"micro_precision", m.micro_precision},
          {"micro_recall", m.micro_recall},
          {"micro_f1", m.micro_f1},
          {"tokens", m.tokens}};
}

json ToJson(const ContextSpan& s) {
  return {{"doc_id", s.doc_id},
          {"start", s.start},
          {"end", s.end},
          {"context_start", s.context_start},
          {"context", s.context}};
}

json ToJson(const FPReport& r) {
  json fps = json::array();
  for (const auto& fp : r.false_positives) {
    json item = ToJson(fp.span);
    item["vote"] = fp.vote;
    item["gold"] = fp.gold;
    fps.push_back(std::move(item));
  }
  json sample = json::array();
  for (const auto& s : r.train_sample) sample.push_back(ToJson(s));
  return {{"lf_id", r.lf_id},
          {"name", r.name},
          {"false_positives", std::move(fps)},
          {"dev_precision", Optional(r.dev_precision)},
          {"dev_votes", r.dev_votes},
          {"train_coverage", r.train_coverage},
          {"train_sample", std::move(sample)}};
}

json ParamsToJson(const LabelModel& model) {
  switch (model.kind()) {
    case ModelKind::kMajority:
      return json::object();
    case ModelKind::kGenerative: {
      const auto& p = static_cast<const GenerativeModel&>(model).params();
      return {{"hit_rate", p.hit_rate},
              {"false_rate", p.false_rate},
              {"prior", p.prior},
              {"trace", p.trace},
              {"iterations", p.iterations}};
    }
    case ModelKind::kHmm: {
      const auto& p = static_cast<const HmmModel&>(model).params();
      return {{"hit_rate", p.hit_rate},     {"false_rate", p.false_rate},
              {"initial", p.initial},       {"transition", p.transition},
              {"trace", p.trace},           {"iterations", p.iterations}};
    }
  }
  return json::object();
}

std::unique_ptr<LabelModel> ModelFromJson(ModelKind kind, const json& j) {
  switch (kind) {
    case ModelKind::kMajority:
      return std::make_unique<MajorityVoter>();
    case ModelKind::kGenerative: {
      GenerativeParams p;
      p.hit_rate = j.at("hit_rate").get<std::vector<double>>();
      p.false_rate = j.at("false_rate").get<std::vector<double>>();
      p.prior = j.at("prior").get<std::vector<double>>();
      p.trace = j.value("trace", std::vector<double>{});
      p.iterations = j.value("iterations", 0);
      return std::make_unique<GenerativeModel>(std::move(p));
    }
    case ModelKind::kHmm: {
      HmmParams p;
      p.hit_rate = j.at("hit_rate").get<std::vector<double>>();
      p.false_rate = j.at("false_rate").get<std::vector<double>>();
      p.initial = j.at("initial").get<std::vector<double>>();
      p.transition = j.at("transition").get<std::vector<double>>();
      p.trace = j.value("trace", std::vector<double>{});
      p.iterations = j.value("iterations", 0);
      return std::make_unique<HmmModel>(std::move(p));
    }
  }
  return std::make_unique<MajorityVoter>();
}

}  // namespace spanlab::json_io

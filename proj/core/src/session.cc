#include "spanlab/session.h"

#include <algorithm>
#include <chrono>
#include <fstream>

#include "json_io.h"

namespace spanlab {

using nlohmann::json;

namespace {

constexpr std::size_t kContextWindow = 5;
constexpr std::size_t kTrainSampleSize = 10;

ContextSpan MakeContext(const Document& doc, std::size_t start, std::size_t end) {
  ContextSpan span;
  span.doc_id = doc.id;
  span.start = start;
  span.end = end;
  span.context_start = start > kContextWindow ? start - kContextWindow : 0;
  const std::size_t stop = std::min(doc.size(), end + kContextWindow);
  for (std::size_t t = span.context_start; t < stop; ++t) {
    span.context.push_back(doc.tokens[t].text);
  }
  return span;
}

SplitPosteriors MakeSplitPosteriors(const LabelMatrix& m, PosteriorMatrix p) {
  return SplitPosteriors(m.segments(), std::move(p));
}

}  // namespace

const char* SnapshotStatusName(SnapshotStatus status) {
  switch (status) {
    case SnapshotStatus::kNone: return "none";
    case SnapshotStatus::kFresh: return "fresh";
    case SnapshotStatus::kStale: return "stale";
  }
  return "none";
}

std::string SelectedSetHash(const std::set<std::string>& ids) {
  std::string joined;
  for (const auto& id : ids) {
    joined += id;
    joined += '\n';
  }
  return Sha256Hex(joined);
}

PosteriorMatrix ModelSnapshot::Infer(const Corpus& corpus, Split split) const {
  const auto m = BuildMatrix(corpus, functions, split);
  return model->Infer(m);
}

const LFStats* ModelSnapshot::stats_for(std::string_view lf_id) const {
  for (std::size_t j = 0; j < functions.size(); ++j) {
    if (functions[j].id == lf_id) return &lf_stats[j];
  }
  return nullptr;
}

Project::Project(std::shared_ptr<const Corpus> corpus, CorpusPaths paths, ModelKind model,
                 double tau_default, std::uint64_t seed)
    : corpus_(std::move(corpus)), paths_(std::move(paths)), model_(model), tau_(tau_default) {
  if (!corpus_) throw std::invalid_argument("project needs a corpus");
  if (!(tau_ > 0.0 && tau_ <= 1.0)) {
    throw std::invalid_argument("similarity threshold must lie in (0, 1]");
  }
  sampler_.seed = seed;
}

Project Project::Create(const CorpusPaths& paths, ModelKind model, double tau_default,
                        std::uint64_t seed) {
  CorpusPaths absolute{std::filesystem::absolute(paths.corpus),
                       std::filesystem::absolute(paths.emb_a),
                       std::filesystem::absolute(paths.emb_b),
                       std::filesystem::absolute(paths.sent),
                       std::filesystem::absolute(paths.labels)};
  auto corpus = std::make_shared<const Corpus>(Ingest(absolute));
  return Project(std::move(corpus), std::move(absolute), model, tau_default, seed);
}

void Project::set_model_kind(ModelKind kind) {
  if (kind == model_) return;
  model_ = kind;
  snapshot_.reset();
}

const LabelingFunction* Project::find_function(std::string_view id) const {
  auto it = suggested_index_.find(std::string(id));
  return it == suggested_index_.end() ? nullptr : &suggested_[it->second];
}

const LabelingFunction& Project::Require(const std::string& lf_id) const {
  const auto* lf = find_function(lf_id);
  if (!lf) throw SessionError("UNKNOWN_LF", "unknown labeling function " + lf_id);
  return *lf;
}

const LabelingFunction& Project::Register(LabelingFunction lf) {
  auto it = suggested_index_.find(lf.id);
  if (it != suggested_index_.end()) return suggested_[it->second];
  suggested_index_.emplace(lf.id, suggested_.size());
  suggested_.push_back(std::move(lf));
  return suggested_.back();
}

LFStats Project::PreviewStats(const LabelingFunction& lf) const {
  const std::span<const LabelingFunction> one(&lf, 1);
  const auto train = BuildMatrix(*corpus_, one, Split::kTrain);
  if (corpus_->split(Split::kDev).empty()) return ComputeLFStats(train, nullptr, {}).front();
  const auto dev = BuildMatrix(*corpus_, one, Split::kDev);
  const auto gold = SplitGold(*corpus_, Split::kDev);
  return ComputeLFStats(train, &dev, gold).front();
}

std::size_t Project::PreviewDocCoverage(const LabelingFunction& lf) const {
  return TrainDocumentCoverage(lf, *corpus_);
}

std::vector<Suggestion> Project::SubmitAnnotation(const SpanAnnotation& ann) {
  ValidateAnnotation(ann, *corpus_);
  const std::size_t provenance = annotations_.size();
  auto result = Synthesize(ann, *corpus_, provenance, SynthesisOptions{tau_});
  annotations_.push_back(ann);
  last_off_train_ = result.off_train;

  std::vector<Suggestion> out;
  for (std::size_t i = 0; i < result.candidates.size(); ++i) {
    const auto& lf = Register(std::move(result.candidates[i]));
    Suggestion s;
    s.lf = lf;
    s.doc_coverage = result.doc_coverage[i];
    s.preview = PreviewStats(lf);
    s.selected = selected_.contains(lf.id);
    out.push_back(std::move(s));
  }
  return out;
}

void Project::SetSelected(const std::string& lf_id, bool selected) {
  Require(lf_id);
  if (selected) {
    selected_.insert(lf_id);
  } else {
    selected_.erase(lf_id);
  }
}

const LabelingFunction& Project::DeriveNegated(const std::string& lf_id, std::size_t position,
                                               std::size_t condition) {
  const auto& base = Require(lf_id);
  if (position >= base.pattern.size() || condition >= base.pattern[position].size()) {
    throw SessionError("INVALID_CONDITION", "no condition at that position");
  }
  auto pattern = base.pattern;
  pattern[position][condition] = pattern[position][condition].Negated();
  return Register(MakeLabelingFunction(std::move(pattern), base.target, base.polarity,
                                       base.provenance));
}

void Project::PruneSuggestion(const std::string& lf_id) {
  Require(lf_id);
  if (selected_.contains(lf_id)) {
    throw SessionError("LF_SELECTED", "deselect " + lf_id + " before pruning it");
  }
  const std::size_t index = suggested_index_.at(lf_id);
  suggested_.erase(suggested_.begin() + static_cast<std::ptrdiff_t>(index));
  suggested_index_.clear();
  for (std::size_t i = 0; i < suggested_.size(); ++i) suggested_index_[suggested_[i].id] = i;
}

std::string Project::selected_hash() const { return SelectedSetHash(selected_); }

RetrainJob Project::PrepareRetrain() const {
  if (selected_.empty()) {
    throw SessionError("EMPTY_SELECTION", "select at least one labeling function to train");
  }
  RetrainJob job;
  job.corpus = corpus_;
  for (const auto& id : selected_) job.functions.push_back(Require(id));
  job.kind = model_;
  job.config = config_;
  job.selected_hash = selected_hash();
  return job;
}

std::shared_ptr<const ModelSnapshot> Project::RunRetrain(const RetrainJob& job) {
  const auto begin = std::chrono::steady_clock::now();
  const Corpus& corpus = *job.corpus;
  auto snapshot = std::make_shared<ModelSnapshot>();
  snapshot->selected_hash = job.selected_hash;
  snapshot->functions = job.functions;

  const auto train = BuildMatrix(corpus, job.functions, Split::kTrain);
  auto model = MakeLabelModel(job.kind);
  snapshot->train = MakeSplitPosteriors(train, model->Fit(train, job.config));

  std::optional<LabelMatrix> dev;
  std::vector<int> dev_gold;
  if (!corpus.split(Split::kDev).empty()) {
    dev = BuildMatrix(corpus, job.functions, Split::kDev);
    dev_gold = SplitGold(corpus, Split::kDev);
    auto p = model->Infer(*dev);
    snapshot->dev_metrics = Evaluate(HardLabels(p), dev_gold, corpus.labels());
    snapshot->dev = MakeSplitPosteriors(*dev, std::move(p));
  }
  snapshot->lf_stats = ComputeLFStats(train, dev ? &*dev : nullptr, dev_gold);
  snapshot->model = std::move(model);
  snapshot->fit_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - begin).count();
  return snapshot;
}

std::shared_ptr<const ModelSnapshot> RestoreSnapshot(const Corpus& corpus,
                                                     std::vector<LabelingFunction> functions,
                                                     std::shared_ptr<const LabelModel> model,
                                                     std::string selected_hash) {
  auto snapshot = std::make_shared<ModelSnapshot>();
  snapshot->selected_hash = std::move(selected_hash);
  snapshot->functions = std::move(functions);
  const auto train = BuildMatrix(corpus, snapshot->functions, Split::kTrain);
  snapshot->train = MakeSplitPosteriors(train, model->Infer(train));
  std::optional<LabelMatrix> dev;
  std::vector<int> dev_gold;
  if (!corpus.split(Split::kDev).empty()) {
    dev = BuildMatrix(corpus, snapshot->functions, Split::kDev);
    dev_gold = SplitGold(corpus, Split::kDev);
    auto p = model->Infer(*dev);
    snapshot->dev_metrics = Evaluate(HardLabels(p), dev_gold, corpus.labels());
    snapshot->dev = MakeSplitPosteriors(*dev, std::move(p));
  }
  snapshot->lf_stats = ComputeLFStats(train, dev ? &*dev : nullptr, dev_gold);
  snapshot->model = std::move(model);
  return snapshot;
}

void Project::Publish(std::shared_ptr<const ModelSnapshot> snapshot) {
  snapshot_ = std::move(snapshot);
}

std::shared_ptr<const ModelSnapshot> Project::Retrain() {
  auto snapshot = RunRetrain(PrepareRetrain());
  Publish(snapshot);
  return snapshot;
}

SnapshotStatus Project::status() const {
  if (!snapshot_) return SnapshotStatus::kNone;
  return snapshot_->selected_hash == selected_hash() ? SnapshotStatus::kFresh
                                                     : SnapshotStatus::kStale;
}

Pick Project::NextDocument() {
  const SamplerModel view = snapshot_ ? snapshot_->sampler_view() : SamplerModel{};
  return spanlab::NextDocument(sampler_, view, *corpus_);
}

FPReport Project::FalsePositiveFeedback(const std::string& lf_id) const {
  const auto& lf = Require(lf_id);
  const auto& labels = corpus_->labels();
  FPReport report;
  report.lf_id = lf.id;
  report.name = lf.name;

  std::vector<std::size_t> dev_docs = corpus_->split(Split::kDev);
  std::sort(dev_docs.begin(), dev_docs.end(), [&](std::size_t a, std::size_t b) {
    return corpus_->document(a).id < corpus_->document(b).id;
  });
  for (std::size_t index : dev_docs) {
    const auto& doc = corpus_->document(index);
    for (const auto& match : ApplyFunction(lf, doc, *corpus_)) {
      bool wrong = false;
      std::vector<std::string> gold;
      for (std::size_t t = match.start; t < match.end; ++t) {
        gold.push_back(labels.name(doc.gold[t]));
        wrong = wrong || doc.gold[t] != match.vote;
      }
      if (!wrong) continue;
      report.false_positives.push_back(
          {MakeContext(doc, match.start, match.end), labels.name(match.vote), std::move(gold)});
    }
  }

  const auto stats = PreviewStats(lf);
  report.dev_precision = stats.dev_precision;
  report.dev_votes = stats.dev_votes;
  report.train_coverage = stats.coverage;
  for (std::size_t index : corpus_->split(Split::kTrain)) {
    if (report.train_sample.size() >= kTrainSampleSize) break;
    const auto& doc = corpus_->document(index);
    for (const auto& match : ApplyFunction(lf, doc, *corpus_)) {
      if (report.train_sample.size() >= kTrainSampleSize) break;
      report.train_sample.push_back(MakeContext(doc, match.start, match.end));
    }
  }
  return report;
}

std::vector<std::string> Project::Export(Split split, bool force) const {
  if (!snapshot_) throw SessionError("NO_SNAPSHOT", "retrain before exporting labels");
  if (status() == SnapshotStatus::kStale && !force) {
    throw SessionError("STALE_SNAPSHOT",
                       "the selection changed since the last retrain; retrain or force");
  }
  PosteriorMatrix p;
  if (split == Split::kTrain) {
    p = snapshot_->train.matrix();
  } else if (split == Split::kDev && snapshot_->dev) {
    p = snapshot_->dev->matrix();
  } else {
    p = snapshot_->Infer(*corpus_, split);
  }
  std::vector<std::string> lines;
  std::size_t offset = 0;
  for (std::size_t index : corpus_->split(split)) {
    const auto& doc = corpus_->document(index);
    lines.push_back(ExportRecord(doc, p, offset, corpus_->labels()));
    offset += doc.size();
  }
  return lines;
}

// ---------------------------------------------------------------------------
// Persistence

void Project::Save(const std::filesystem::path& path) const {
  json j;
  j["version"] = kProjectVersion;
  j["labels"] = labels().classes();
  j["model"] = ModelKindName(model_);
  j["tau_default"] = tau_;
  j["corpus_paths"] = {{"corpus", paths_.corpus.string()},
                       {"emb_a", paths_.emb_a.string()},
                       {"emb_b", paths_.emb_b.string()},
                       {"sent", paths_.sent.string()},
                       {"labels", paths_.labels.string()}};
  json annotations = json::array();
  for (const auto& a : annotations_) annotations.push_back(json_io::ToJson(a));
  j["annotations"] = std::move(annotations);
  json suggested = json::array();
  for (const auto& lf : suggested_) suggested.push_back(json_io::ToJson(lf));
  j["lfs"] = {{"suggested", std::move(suggested)}, {"selected", selected_}};
  j["sampler"] = {{"parity", sampler_.parity},
                  {"served", sampler_.served},
                  {"seed", sampler_.seed}};
  if (snapshot_) {
    json ids = json::array();
    for (const auto& lf : snapshot_->functions) ids.push_back(lf.id);
    json functions = json::array();
    for (const auto& lf : snapshot_->functions) functions.push_back(json_io::ToJson(lf));
    j["snapshot"] = {{"selected_hash", snapshot_->selected_hash},
                     {"model", ModelKindName(snapshot_->model->kind())},
                     {"functions", std::move(functions)},
                     {"params", json_io::ParamsToJson(*snapshot_->model)}};
  }

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << j.dump(2) << '\n';
    if (!out) throw std::runtime_error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Project Project::Load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SessionError("CORRUPT_PROJECT", "cannot open project file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw SessionError("CORRUPT_PROJECT", std::string("project file is not JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("version")) {
    throw SessionError("CORRUPT_PROJECT", "project file has no version");
  }
  if (j["version"] != kProjectVersion) {
    throw SessionError("VERSION_MISMATCH", "project schema version " + j["version"].dump() +
                                               " is not supported (expected " +
                                               std::to_string(kProjectVersion) + ")");
  }
  try {
    const auto& cp = j.at("corpus_paths");
    CorpusPaths paths{cp.at("corpus").get<std::string>(), cp.at("emb_a").get<std::string>(),
                      cp.at("emb_b").get<std::string>(), cp.at("sent").get<std::string>(),
                      cp.at("labels").get<std::string>()};
    const auto model = ParseModelKind(j.at("model").get<std::string>());
    if (!model) throw std::invalid_argument("unknown model " + j["model"].dump());

    LabelSet labels(j.at("labels").get<std::vector<std::string>>());
    auto corpus = std::make_shared<const Corpus>(Ingest(paths, labels));
    if (!(LoadLabelSet(paths.labels) == labels)) {
      throw std::invalid_argument("label set differs from " + paths.labels.string());
    }
    Project project(corpus, paths, *model, j.at("tau_default").get<double>(),
                    j.at("sampler").at("seed").get<std::uint64_t>());

    for (const auto& a : j.at("annotations")) {
      project.annotations_.push_back(json_io::AnnotationFromJson(a));
    }
    for (const auto& lf : j.at("lfs").at("suggested")) {
      project.Register(json_io::FunctionFromJson(lf));
    }
    for (const auto& id : j.at("lfs").at("selected")) {
      project.SetSelected(id.get<std::string>(), true);
    }
    project.sampler_.parity = j.at("sampler").at("parity").get<std::uint64_t>();
    for (const auto& id : j.at("sampler").at("served")) {
      project.sampler_.served.insert(id.get<std::string>());
    }

    if (j.contains("snapshot") && !j["snapshot"].is_null()) {
      const auto& s = j["snapshot"];
      const auto kind = ParseModelKind(s.at("model").get<std::string>());
      if (!kind) throw std::invalid_argument("unknown snapshot model");
      std::vector<LabelingFunction> functions;
      for (const auto& lf : s.at("functions")) functions.push_back(json_io::FunctionFromJson(lf));
      std::shared_ptr<const LabelModel> fitted = json_io::ModelFromJson(*kind, s.at("params"));
      project.snapshot_ = RestoreSnapshot(*corpus, std::move(functions), std::move(fitted),
                                          s.at("selected_hash").get<std::string>());
    }
    return project;
  } catch (const SessionError& e) {
    throw SessionError("CORRUPT_PROJECT", e.what());
  } catch (const IngestError&) {
    throw;
  } catch (const std::exception& e) {
    throw SessionError("CORRUPT_PROJECT", std::string("corrupt project file: ") + e.what());
  }
}

}  // namespace spanlab

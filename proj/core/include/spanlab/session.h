#ifndef SPANLAB_SESSION_H_
#define SPANLAB_SESSION_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "spanlab/corpus.h"
#include "spanlab/label_model.h"
#include "spanlab/rules.h"
#include "spanlab/sampler.h"

namespace spanlab {

inline constexpr int kProjectVersion = 1;

// State errors carry a stable code string that the HTTP layer forwards.
class SessionError : public std::runtime_error {
 public:
  SessionError(std::string code, const std::string& what)
      : std::runtime_error(what), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

// A fitted model published by retraining. Immutable once published.
struct ModelSnapshot {
  std::string selected_hash;
  // The selection the model was fit on, ordered by id.
  std::vector<LabelingFunction> functions;
  std::shared_ptr<const LabelModel> model;
  SplitPosteriors train;
  std::optional<SplitPosteriors> dev;
  std::optional<ModelMetrics> dev_metrics;
  // Aligned with functions.
  std::vector<LFStats> lf_stats;
  double fit_seconds = 0.0;

  SamplerModel sampler_view() const { return {&train, dev ? &*dev : nullptr}; }
  // Applies the snapshot's functions and parameters to any split.
  PosteriorMatrix Infer(const Corpus& corpus, Split split) const;
  const LFStats* stats_for(std::string_view lf_id) const;
};

struct Suggestion {
  LabelingFunction lf;
  std::size_t doc_coverage = 0;
  LFStats preview;
  bool selected = false;
};

struct ContextSpan {
  std::string doc_id;
  std::size_t start = 0;
  std::size_t end = 0;
  // Tokens of [context_start, context_start + context.size()), at most five
  // tokens either side of the span.
  std::size_t context_start = 0;
  std::vector<std::string> context;
};

struct FalsePositive {
  ContextSpan span;
  std::string vote;
  std::vector<std::string> gold;
};

struct FPReport {
  std::string lf_id;
  std::string name;
  std::vector<FalsePositive> false_positives;
  std::optional<double> dev_precision;
  std::size_t dev_votes = 0;
  double train_coverage = 0.0;
  std::vector<ContextSpan> train_sample;
};

// Everything a fit needs, captured so it can run off the mutation path.
struct RetrainJob {
  std::shared_ptr<const Corpus> corpus;
  std::vector<LabelingFunction> functions;
  ModelKind kind = ModelKind::kGenerative;
  FitConfig config;
  std::string selected_hash;
};

enum class SnapshotStatus { kNone, kFresh, kStale };
const char* SnapshotStatusName(SnapshotStatus status);

class Project {
 public:
  Project(std::shared_ptr<const Corpus> corpus, CorpusPaths paths, ModelKind model,
          double tau_default = kDefaultTau, std::uint64_t seed = 0);

  // Ingests the corpus from paths (stored absolute) and starts a project.
  static Project Create(const CorpusPaths& paths, ModelKind model,
                        double tau_default = kDefaultTau, std::uint64_t seed = 0);
  // Throws SessionError with code VERSION_MISMATCH or CORRUPT_PROJECT, and
  // IngestError when the referenced corpus is unreadable.
  static Project Load(const std::filesystem::path& path);
  void Save(const std::filesystem::path& path) const;

  const Corpus& corpus() const { return *corpus_; }
  std::shared_ptr<const Corpus> corpus_ptr() const { return corpus_; }
  const CorpusPaths& corpus_paths() const { return paths_; }
  const LabelSet& labels() const { return corpus_->labels(); }
  ModelKind model_kind() const { return model_; }
  // Changing the model drops the current snapshot.
  void set_model_kind(ModelKind kind);
  double tau_default() const { return tau_; }
  const FitConfig& fit_config() const { return config_; }

  const std::vector<SpanAnnotation>& annotations() const { return annotations_; }
  // Suggestions in the order they were first produced.
  const std::vector<LabelingFunction>& suggested() const { return suggested_; }
  const std::set<std::string>& selected() const { return selected_; }
  const LabelingFunction* find_function(std::string_view id) const;
  const SamplerState& sampler_state() const { return sampler_; }
  void set_sampler_seed(std::uint64_t seed) { sampler_.seed = seed; }

  // Appends to the log, synthesizes candidates and registers them as
  // suggestions. Throws AnnotationError.
  std::vector<Suggestion> SubmitAnnotation(const SpanAnnotation& ann);
  bool last_annotation_off_train() const { return last_off_train_; }

  // Throws SessionError UNKNOWN_LF.
  void SetSelected(const std::string& lf_id, bool selected);
  // Registers a copy of a suggestion with one condition's negation flipped
  // and returns it.
  const LabelingFunction& DeriveNegated(const std::string& lf_id, std::size_t position,
                                        std::size_t condition);
  // Removes an unselected suggestion. Throws SessionError.
  void PruneSuggestion(const std::string& lf_id);

  LFStats PreviewStats(const LabelingFunction& lf) const;
  std::size_t PreviewDocCoverage(const LabelingFunction& lf) const;

  std::string selected_hash() const;
  RetrainJob PrepareRetrain() const;
  static std::shared_ptr<const ModelSnapshot> RunRetrain(const RetrainJob& job);
  void Publish(std::shared_ptr<const ModelSnapshot> snapshot);
  // PrepareRetrain + RunRetrain + Publish. Throws SessionError
  // EMPTY_SELECTION; a failed fit leaves the previous snapshot in place.
  std::shared_ptr<const ModelSnapshot> Retrain();

  std::shared_ptr<const ModelSnapshot> snapshot() const { return snapshot_; }
  SnapshotStatus status() const;

  Pick NextDocument();
  FPReport FalsePositiveFeedback(const std::string& lf_id) const;
  // One JSON record per document of the split. Throws SessionError
  // NO_SNAPSHOT, or STALE_SNAPSHOT unless force is set.
  std::vector<std::string> Export(Split split, bool force = false) const;

 private:
  std::shared_ptr<const Corpus> corpus_;
  CorpusPaths paths_;
  ModelKind model_;
  double tau_;
  FitConfig config_;
  std::vector<SpanAnnotation> annotations_;
  std::vector<LabelingFunction> suggested_;
  std::map<std::string, std::size_t> suggested_index_;
  std::set<std::string> selected_;
  SamplerState sampler_;
  std::shared_ptr<const ModelSnapshot> snapshot_;
  bool last_off_train_ = false;

  const LabelingFunction& Require(const std::string& lf_id) const;
  const LabelingFunction& Register(LabelingFunction lf);
};

// Rebuilds a snapshot from stored parameters without refitting.
std::shared_ptr<const ModelSnapshot> RestoreSnapshot(const Corpus& corpus,
                                                     std::vector<LabelingFunction> functions,
                                                     std::shared_ptr<const LabelModel> model,
                                                     std::string selected_hash);

std::string SelectedSetHash(const std::set<std::string>& ids);

}  // namespace spanlab

#endif  // SPANLAB_SESSION_H_

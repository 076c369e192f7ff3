#ifndef SPANLAB_LABEL_MODEL_H_
#define SPANLAB_LABEL_MODEL_H_

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spanlab/corpus.h"
#include "spanlab/rules.h"

namespace spanlab {

// A contiguous block of matrix rows belonging to one document.
struct Segment {
  std::string doc_id;
  std::size_t offset = 0;
  std::size_t length = 0;
  bool operator==(const Segment&) const = default;
};

// Tokens x functions vote matrix. Entries are kAbstain, a class code in
// [0, C), or the background code C. Column j may only hold kAbstain or the
// fixed vote lf_votes[j] of its function.
class LabelMatrix {
 public:
  LabelMatrix() = default;
  // Throws std::invalid_argument when entries, votes, or segments are
  // inconsistent with each other.
  LabelMatrix(int num_classes, std::vector<int> lf_votes, std::size_t rows,
              std::vector<int> entries, std::vector<Segment> segments);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return lf_votes_.size(); }
  int num_classes() const { return num_classes_; }
  int num_outputs() const { return num_classes_ + 1; }
  int at(std::size_t i, std::size_t j) const { return entries_[i * cols() + j]; }
  std::span<const int> row(std::size_t i) const {
    return {entries_.data() + i * cols(), cols()};
  }
  int lf_vote(std::size_t j) const { return lf_votes_[j]; }
  const std::vector<int>& lf_votes() const { return lf_votes_; }
  const std::vector<Segment>& segments() const { return segments_; }

  bool operator==(const LabelMatrix&) const = default;

 private:
  int num_classes_ = 0;
  std::size_t rows_ = 0;
  std::vector<int> lf_votes_;
  std::vector<int> entries_;
  std::vector<Segment> segments_;
};

// Row-stochastic n x (C+1) matrix; the last column is the background class.
class PosteriorMatrix {
 public:
  PosteriorMatrix() = default;
  PosteriorMatrix(std::size_t rows, int width)
      : rows_(rows), width_(width), data_(rows * static_cast<std::size_t>(width), 0.0) {}

  std::size_t rows() const { return rows_; }
  int width() const { return width_; }
  double& at(std::size_t i, int k) { return data_[i * width_ + k]; }
  double at(std::size_t i, int k) const { return data_[i * width_ + k]; }
  std::span<double> row(std::size_t i) { return {data_.data() + i * width_, static_cast<std::size_t>(width_)}; }
  std::span<const double> row(std::size_t i) const {
    return {data_.data() + i * width_, static_cast<std::size_t>(width_)};
  }
  const std::vector<double>& data() const { return data_; }

  bool operator==(const PosteriorMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

struct FitConfig {
  int max_iterations = 100;
  double tolerance = 1e-6;
  double init_hit_rate = 0.7;
  double init_false_rate = 0.05;
  double init_self_transition = 0.9;
};

// Conditionally independent function model. hit_rate[j] = P(fire | Y = c_j),
// false_rate[j] = P(fire | Y != c_j), prior over the C+1 outputs.
struct GenerativeParams {
  std::vector<double> hit_rate;
  std::vector<double> false_rate;
  std::vector<double> prior;
  // Penalized log-likelihood (log-likelihood plus the smoothing log-prior)
  // before each M-step and after the last one.
  std::vector<double> trace;
  int iterations = 0;
};

struct HmmParams {
  std::vector<double> initial;
  // Row-major (C+1) x (C+1).
  std::vector<double> transition;
  std::vector<double> hit_rate;
  std::vector<double> false_rate;
  std::vector<double> trace;
  int iterations = 0;
};

enum class ModelKind { kMajority, kGenerative, kHmm };

const char* ModelKindName(ModelKind kind);
std::optional<ModelKind> ParseModelKind(std::string_view name);

// Aggregator interface. New aggregators implement Fit/Infer and register in
// MakeLabelModel.
class LabelModel {
 public:
  virtual ~LabelModel() = default;
  virtual ModelKind kind() const = 0;
  // Fits on m and returns the posterior over m's rows.
  virtual PosteriorMatrix Fit(const LabelMatrix& m, const FitConfig& config) = 0;
  // Posterior for another matrix over the same functions, using fitted
  // parameters.
  virtual PosteriorMatrix Infer(const LabelMatrix& m) const = 0;
  virtual std::unique_ptr<LabelModel> Clone() const = 0;
};

class MajorityVoter final : public LabelModel {
 public:
  ModelKind kind() const override { return ModelKind::kMajority; }
  PosteriorMatrix Fit(const LabelMatrix& m, const FitConfig& config) override;
  PosteriorMatrix Infer(const LabelMatrix& m) const override;
  std::unique_ptr<LabelModel> Clone() const override {
    return std::make_unique<MajorityVoter>(*this);
  }
};

class GenerativeModel final : public LabelModel {
 public:
  GenerativeModel() = default;
  explicit GenerativeModel(GenerativeParams params) : params_(std::move(params)) {}
  ModelKind kind() const override { return ModelKind::kGenerative; }
  PosteriorMatrix Fit(const LabelMatrix& m, const FitConfig& config) override;
  PosteriorMatrix Infer(const LabelMatrix& m) const override;
  std::unique_ptr<LabelModel> Clone() const override {
    return std::make_unique<GenerativeModel>(*this);
  }
  const GenerativeParams& params() const { return params_; }

 private:
  GenerativeParams params_;
};

class HmmModel final : public LabelModel {
 public:
  HmmModel() = default;
  explicit HmmModel(HmmParams params) : params_(std::move(params)) {}
  ModelKind kind() const override { return ModelKind::kHmm; }
  PosteriorMatrix Fit(const LabelMatrix& m, const FitConfig& config) override;
  PosteriorMatrix Infer(const LabelMatrix& m) const override;
  std::unique_ptr<LabelModel> Clone() const override {
    return std::make_unique<HmmModel>(*this);
  }
  const HmmParams& params() const { return params_; }

 private:
  HmmParams params_;
};

std::unique_ptr<LabelModel> MakeLabelModel(ModelKind kind);

PosteriorMatrix FitMajority(const LabelMatrix& m);

struct GenerativeFit {
  GenerativeParams params;
  PosteriorMatrix posterior;
};
GenerativeFit FitGenerative(const LabelMatrix& m, const FitConfig& config = {});

struct HmmFit {
  HmmParams params;
  PosteriorMatrix posterior;
};
// Uses m.segments() as the independent chains.
HmmFit FitHmm(const LabelMatrix& m, const FitConfig& config = {});

// Posterior under fixed parameters. log_likelihood, when given, receives the
// (unpenalized) data log-likelihood.
PosteriorMatrix GenerativePosterior(const LabelMatrix& m, const GenerativeParams& params,
                                    double* log_likelihood = nullptr);
PosteriorMatrix HmmPosterior(const LabelMatrix& m, const HmmParams& params,
                             double* log_likelihood = nullptr);

// Applies every function to the documents of one split. Row order follows
// document order, then token order; column order follows lfs.
LabelMatrix BuildMatrix(const Corpus& corpus, std::span<const LabelingFunction> lfs,
                        Split split);

// Concatenated gold codes for a split, aligned with BuildMatrix rows. Throws
// std::invalid_argument if a document has no gold.
std::vector<int> SplitGold(const Corpus& corpus, Split split);

// Argmax per row. Ties that include the background resolve to background;
// ties among classes resolve to the lowest class index.
std::vector<int> HardLabels(const PosteriorMatrix& p);

struct ClassMetrics {
  std::string label;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Token-level scores over entity classes. A ratio with an empty denominator
// is reported as 0.
struct ModelMetrics {
  std::vector<ClassMetrics> per_class;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  double micro_precision = 0.0;
  double micro_recall = 0.0;
  double micro_f1 = 0.0;
  std::size_t tokens = 0;
};

ModelMetrics Evaluate(std::span<const int> predicted, std::span<const int> gold,
                      const LabelSet& labels);
std::string FormatMetrics(const ModelMetrics& metrics);

struct LFStats {
  double coverage = 0.0;
  std::size_t dev_votes = 0;
  std::size_t dev_correct = 0;
  // Unset when the function has no dev votes.
  std::optional<double> dev_precision;
  double conflict_rate = 0.0;
};

// Per-column statistics. dev may be null (no dev split); otherwise dev_gold
// must align with its rows.
std::vector<LFStats> ComputeLFStats(const LabelMatrix& train, const LabelMatrix* dev,
                                    std::span<const int> dev_gold);

// B-/I- prefixes over maximal runs of one class; background stays "O".
std::vector<std::string> ToBio(std::span<const int> hard, const LabelSet& labels);
// One export record: {"id","tokens","p","hard","bio"}.
std::string ExportRecord(const Document& doc, const PosteriorMatrix& p, std::size_t offset,
                         const LabelSet& labels);

}  // namespace spanlab

#endif  // SPANLAB_LABEL_MODEL_H_

#include "spanlab/label_model.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace spanlab {

LabelMatrix::LabelMatrix(int num_classes, std::vector<int> lf_votes, std::size_t rows,
                         std::vector<int> entries, std::vector<Segment> segments)
    : num_classes_(num_classes),
      rows_(rows),
      lf_votes_(std::move(lf_votes)),
      entries_(std::move(entries)),
      segments_(std::move(segments)) {
  if (num_classes_ < 1) throw std::invalid_argument("label matrix needs >= 1 class");
  if (entries_.size() != rows_ * lf_votes_.size()) {
    throw std::invalid_argument("label matrix entry count does not match its shape");
  }
  for (int v : lf_votes_) {
    if (v < 0 || v > num_classes_) throw std::invalid_argument("function vote out of range");
  }
  for (std::size_t i = 0; i < rows_; ++i) {
    for (std::size_t j = 0; j < cols(); ++j) {
      const int e = at(i, j);
      if (e != kAbstain && e != lf_votes_[j]) {
        throw std::invalid_argument("entry (" + std::to_string(i) + ", " + std::to_string(j) +
                                    ") differs from its function's vote");
      }
    }
  }
  if (segments_.empty() && rows_ > 0) {
    segments_.push_back({"", 0, rows_});
  }
  std::size_t next = 0;
  for (const auto& s : segments_) {
    if (s.offset != next || s.length == 0) {
      throw std::invalid_argument("segments must partition the rows into non-empty blocks");
    }
    next += s.length;
  }
  if (next != rows_) throw std::invalid_argument("segments do not cover every row");
}

const char* ModelKindName(ModelKind kind) {
  switch (kind) {
    case ModelKind::kMajority: return "majority";
    case ModelKind::kGenerative: return "generative";
    case ModelKind::kHmm: return "hmm";
  }
  return "majority";
}

std::optional<ModelKind> ParseModelKind(std::string_view name) {
  if (name == "majority") return ModelKind::kMajority;
  if (name == "generative") return ModelKind::kGenerative;
  if (name == "hmm") return ModelKind::kHmm;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Majority vote

PosteriorMatrix FitMajority(const LabelMatrix& m) {
  const int width = m.num_outputs();
  PosteriorMatrix p(m.rows(), width);
  std::vector<int> counts(width);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    std::fill(counts.begin(), counts.end(), 0);
    int total = 0;
    for (int v : m.row(i)) {
      if (v == kAbstain) continue;
      ++counts[v];
      ++total;
    }
    if (total == 0) {
      p.at(i, width - 1) = 1.0;
      continue;
    }
    for (int k = 0; k < width; ++k) {
      p.at(i, k) = static_cast<double>(counts[k]) / total;
    }
  }
  return p;
}

PosteriorMatrix MajorityVoter::Fit(const LabelMatrix& m, const FitConfig&) {
  return FitMajority(m);
}

PosteriorMatrix MajorityVoter::Infer(const LabelMatrix& m) const { return FitMajority(m); }

// ---------------------------------------------------------------------------
// Shared emission model

namespace {

void CheckColumns(const LabelMatrix& m, std::size_t want) {
  if (m.cols() != want) {
    throw std::invalid_argument("matrix has " + std::to_string(m.cols()) +
                                " functions, parameters have " + std::to_string(want));
  }
}

// Per-token log emission likelihood log P(row_i | Y = y) for every y,
// written to out (width K).
class Emission {
 public:
  Emission(const LabelMatrix& m, const std::vector<double>& hit,
           const std::vector<double>& false_rate)
      : m_(m), width_(m.num_outputs()), base_(width_, 0.0) {
    const std::size_t l = m.cols();
    fire_own_.resize(l);
    fire_other_.resize(l);
    for (std::size_t j = 0; j < l; ++j) {
      const double miss_own = std::log1p(-hit[j]);
      const double miss_other = std::log1p(-false_rate[j]);
      fire_own_[j] = std::log(hit[j]) - miss_own;
      fire_other_[j] = std::log(false_rate[j]) - miss_other;
      const int c = m.lf_vote(j);
      for (int y = 0; y < width_; ++y) base_[y] += y == c ? miss_own : miss_other;
    }
  }

  void operator()(std::size_t i, std::span<double> out) const {
    std::copy(base_.begin(), base_.end(), out.begin());
    const auto row = m_.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (row[j] == kAbstain) continue;
      const int c = m_.lf_vote(j);
      for (int y = 0; y < width_; ++y) out[y] += y == c ? fire_own_[j] : fire_other_[j];
    }
  }

 private:
  const LabelMatrix& m_;
  int width_;
  std::vector<double> base_;
  std::vector<double> fire_own_;
  std::vector<double> fire_other_;
};

// Beta(2,2) log-density of the emission parameters, up to a constant.
double EmissionLogPrior(const std::vector<double>& hit, const std::vector<double>& false_rate) {
  double lp = 0.0;
  for (std::size_t j = 0; j < hit.size(); ++j) {
    lp += std::log(hit[j]) + std::log1p(-hit[j]);
    lp += std::log(false_rate[j]) + std::log1p(-false_rate[j]);
  }
  return lp;
}

// Dirichlet(2) log-density of a distribution, up to a constant.
double DirichletLogPrior(std::span<const double> dist) {
  double lp = 0.0;
  for (double d : dist) lp += std::log(d);
  return lp;
}

// Smoothed hit/false-fire update from token responsibilities gamma.
void UpdateEmissions(const LabelMatrix& m, const PosteriorMatrix& gamma,
                     std::vector<double>& hit, std::vector<double>& false_rate) {
  const std::size_t l = m.cols();
  std::vector<double> own_mass(l, 0.0), own_fire(l, 0.0), other_mass(l, 0.0),
      other_fire(l, 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto row = m.row(i);
    for (std::size_t j = 0; j < l; ++j) {
      const double g = gamma.at(i, m.lf_vote(j));
      own_mass[j] += g;
      other_mass[j] += 1.0 - g;
      if (row[j] != kAbstain) {
        own_fire[j] += g;
        other_fire[j] += 1.0 - g;
      }
    }
  }
  for (std::size_t j = 0; j < l; ++j) {
    hit[j] = (1.0 + own_fire[j]) / (2.0 + own_mass[j]);
    false_rate[j] = (1.0 + other_fire[j]) / (2.0 + other_mass[j]);
  }
}

double LogSumExp(std::span<const double> v) {
  const double mx = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

bool Converged(const std::vector<double>& trace, double tolerance) {
  const std::size_t n = trace.size();
  return n >= 2 && std::abs(trace[n - 1] - trace[n - 2]) < tolerance;
}

}  // namespace

// ---------------------------------------------------------------------------
// Token-independent generative model

PosteriorMatrix GenerativePosterior(const LabelMatrix& m, const GenerativeParams& params,
                                    double* log_likelihood) {
  CheckColumns(m, params.hit_rate.size());
  const int width = m.num_outputs();
  if (static_cast<int>(params.prior.size()) != width) {
    throw std::invalid_argument("prior width does not match the label set");
  }
  Emission emission(m, params.hit_rate, params.false_rate);
  std::vector<double> log_prior(width);
  for (int y = 0; y < width; ++y) log_prior[y] = std::log(params.prior[y]);

  PosteriorMatrix p(m.rows(), width);
  double ll = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto row = p.row(i);
    emission(i, row);
    for (int y = 0; y < width; ++y) row[y] += log_prior[y];
    const double z = LogSumExp(row);
    ll += z;
    for (int y = 0; y < width; ++y) row[y] = std::exp(row[y] - z);
  }
  if (log_likelihood) *log_likelihood = ll;
  return p;
}

GenerativeFit FitGenerative(const LabelMatrix& m, const FitConfig& config) {
  const int width = m.num_outputs();
  const std::size_t l = m.cols();
  GenerativeParams params;
  params.hit_rate.assign(l, config.init_hit_rate);
  params.false_rate.assign(l, config.init_false_rate);
  params.prior.assign(width, 1.0 / width);

  PosteriorMatrix gamma;
  for (int iter = 0;; ++iter) {
    double ll = 0.0;
    gamma = GenerativePosterior(m, params, &ll);
    params.trace.push_back(ll + EmissionLogPrior(params.hit_rate, params.false_rate) +
                           DirichletLogPrior(params.prior));
    if (Converged(params.trace, config.tolerance) || iter >= config.max_iterations) break;

    UpdateEmissions(m, gamma, params.hit_rate, params.false_rate);
    std::vector<double> mass(width, 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
      for (int y = 0; y < width; ++y) mass[y] += gamma.at(i, y);
    }
    const double denom = width + static_cast<double>(m.rows());
    for (int y = 0; y < width; ++y) params.prior[y] = (1.0 + mass[y]) / denom;
    params.iterations = iter + 1;
  }
  return {std::move(params), std::move(gamma)};
}

PosteriorMatrix GenerativeModel::Fit(const LabelMatrix& m, const FitConfig& config) {
  auto fit = FitGenerative(m, config);
  params_ = std::move(fit.params);
  return std::move(fit.posterior);
}

PosteriorMatrix GenerativeModel::Infer(const LabelMatrix& m) const {
  return GenerativePosterior(m, params_);
}

// ---------------------------------------------------------------------------
// Sequential model: one hidden chain per segment, scaled forward-backward.

namespace {

struct ForwardBackward {
  PosteriorMatrix gamma;
  // Expected transition counts, row-major K x K; filled only when requested.
  std::vector<double> xi;
  std::vector<double> first;  // summed posterior of each chain's first token
  double log_likelihood = 0.0;
};

ForwardBackward RunForwardBackward(const LabelMatrix& m, const HmmParams& params,
                                   bool want_counts) {
  CheckColumns(m, params.hit_rate.size());
  const int K = m.num_outputs();
  if (static_cast<int>(params.initial.size()) != K ||
      params.transition.size() != static_cast<std::size_t>(K) * K) {
    throw std::invalid_argument("HMM parameters do not match the label set");
  }
  Emission emission(m, params.hit_rate, params.false_rate);

  ForwardBackward out;
  out.gamma = PosteriorMatrix(m.rows(), K);
  if (want_counts) {
    out.xi.assign(static_cast<std::size_t>(K) * K, 0.0);
    out.first.assign(K, 0.0);
  }
  const auto& T = params.transition;

  std::vector<double> log_e(K);
  for (const auto& seg : m.segments()) {
    const std::size_t len = seg.length;
    // Emissions rescaled per token; the shift is added back to the
    // log-likelihood.
    std::vector<double> e(len * K), alpha(len * K), beta(len * K), scale(len);
    for (std::size_t t = 0; t < len; ++t) {
      emission(seg.offset + t, log_e);
      const double mx = *std::max_element(log_e.begin(), log_e.end());
      out.log_likelihood += mx;
      for (int y = 0; y < K; ++y) e[t * K + y] = std::exp(log_e[y] - mx);
    }

    for (std::size_t t = 0; t < len; ++t) {
      double c = 0.0;
      for (int y = 0; y < K; ++y) {
        double a;
        if (t == 0) {
          a = params.initial[y];
        } else {
          a = 0.0;
          for (int x = 0; x < K; ++x) a += alpha[(t - 1) * K + x] * T[x * K + y];
        }
        a *= e[t * K + y];
        alpha[t * K + y] = a;
        c += a;
      }
      scale[t] = c;
      for (int y = 0; y < K; ++y) alpha[t * K + y] /= c;
      out.log_likelihood += std::log(c);
    }

    for (int y = 0; y < K; ++y) beta[(len - 1) * K + y] = 1.0;
    for (std::size_t t = len - 1; t-- > 0;) {
      for (int x = 0; x < K; ++x) {
        double b = 0.0;
        for (int y = 0; y < K; ++y) {
          b += T[x * K + y] * e[(t + 1) * K + y] * beta[(t + 1) * K + y];
        }
        beta[t * K + x] = b / scale[t + 1];
      }
    }

    for (std::size_t t = 0; t < len; ++t) {
      double z = 0.0;
      for (int y = 0; y < K; ++y) z += alpha[t * K + y] * beta[t * K + y];
      for (int y = 0; y < K; ++y) {
        out.gamma.at(seg.offset + t, y) = alpha[t * K + y] * beta[t * K + y] / z;
      }
    }

    if (!want_counts) continue;
    for (int y = 0; y < K; ++y) out.first[y] += out.gamma.at(seg.offset, y);
    for (std::size_t t = 0; t + 1 < len; ++t) {
      const double inv = 1.0 / scale[t + 1];
      for (int x = 0; x < K; ++x) {
        const double a = alpha[t * K + x];
        for (int y = 0; y < K; ++y) {
          out.xi[x * K + y] +=
              a * T[x * K + y] * e[(t + 1) * K + y] * beta[(t + 1) * K + y] * inv;
        }
      }
    }
  }
  return out;
}

double HmmLogPrior(const HmmParams& p, int K) {
  double lp = EmissionLogPrior(p.hit_rate, p.false_rate) + DirichletLogPrior(p.initial);
  for (int x = 0; x < K; ++x) {
    lp += DirichletLogPrior(std::span<const double>(p.transition).subspan(x * K, K));
  }
  return lp;
}

}  // namespace

PosteriorMatrix HmmPosterior(const LabelMatrix& m, const HmmParams& params,
                             double* log_likelihood) {
  auto fb = RunForwardBackward(m, params, false);
  if (log_likelihood) *log_likelihood = fb.log_likelihood;
  return std::move(fb.gamma);
}

HmmFit FitHmm(const LabelMatrix& m, const FitConfig& config) {
  const int K = m.num_outputs();
  const std::size_t l = m.cols();
  HmmParams params;
  params.hit_rate.assign(l, config.init_hit_rate);
  params.false_rate.assign(l, config.init_false_rate);
  params.initial.assign(K, 1.0 / K);
  params.transition.assign(static_cast<std::size_t>(K) * K,
                           K > 1 ? (1.0 - config.init_self_transition) / (K - 1) : 1.0);
  if (K > 1) {
    for (int x = 0; x < K; ++x) params.transition[x * K + x] = config.init_self_transition;
  }

  PosteriorMatrix gamma;
  for (int iter = 0;; ++iter) {
    auto fb = RunForwardBackward(m, params, true);
    params.trace.push_back(fb.log_likelihood + HmmLogPrior(params, K));
    gamma = std::move(fb.gamma);
    if (Converged(params.trace, config.tolerance) || iter >= config.max_iterations) break;

    UpdateEmissions(m, gamma, params.hit_rate, params.false_rate);
    const double chains = static_cast<double>(m.segments().size());
    for (int y = 0; y < K; ++y) params.initial[y] = (1.0 + fb.first[y]) / (K + chains);
    for (int x = 0; x < K; ++x) {
      double row_mass = 0.0;
      for (int y = 0; y < K; ++y) row_mass += fb.xi[x * K + y];
      for (int y = 0; y < K; ++y) {
        params.transition[x * K + y] = (1.0 + fb.xi[x * K + y]) / (K + row_mass);
      }
    }
    params.iterations = iter + 1;
  }
  return {std::move(params), std::move(gamma)};
}

PosteriorMatrix HmmModel::Fit(const LabelMatrix& m, const FitConfig& config) {
  auto fit = FitHmm(m, config);
  params_ = std::move(fit.params);
  return std::move(fit.posterior);
}

PosteriorMatrix HmmModel::Infer(const LabelMatrix& m) const { return HmmPosterior(m, params_); }

std::unique_ptr<LabelModel> MakeLabelModel(ModelKind kind) {
  switch (kind) {
    case ModelKind::kMajority: return std::make_unique<MajorityVoter>();
    case ModelKind::kGenerative: return std::make_unique<GenerativeModel>();
    case ModelKind::kHmm: return std::make_unique<HmmModel>();
  }
  return std::make_unique<MajorityVoter>();
}

// ---------------------------------------------------------------------------
// Matrix construction, decoding, metrics

LabelMatrix BuildMatrix(const Corpus& corpus, std::span<const LabelingFunction> lfs,
                        Split split) {
  if (lfs.empty()) throw std::invalid_argument("no labeling functions selected");
  const auto& labels = corpus.labels();
  std::vector<int> votes;
  for (const auto& lf : lfs) votes.push_back(lf.vote(labels));

  std::vector<Segment> segments;
  std::size_t rows = 0;
  for (std::size_t index : corpus.split(split)) {
    const auto& doc = corpus.document(index);
    segments.push_back({doc.id, rows, doc.size()});
    rows += doc.size();
  }
  const std::size_t l = lfs.size();
  std::vector<int> entries(rows * l, kAbstain);
  std::size_t s = 0;
  for (std::size_t index : corpus.split(split)) {
    const auto& doc = corpus.document(index);
    const std::size_t offset = segments[s++].offset;
    for (std::size_t j = 0; j < l; ++j) {
      for (const auto& match : ApplyFunction(lfs[j], doc, corpus)) {
        for (std::size_t t = match.start; t < match.end; ++t) {
          entries[(offset + t) * l + j] = match.vote;
        }
      }
    }
  }
  return LabelMatrix(labels.num_classes(), std::move(votes), rows, std::move(entries),
                     std::move(segments));
}

std::vector<int> SplitGold(const Corpus& corpus, Split split) {
  std::vector<int> gold;
  for (std::size_t index : corpus.split(split)) {
    const auto& doc = corpus.document(index);
    if (!doc.has_gold()) {
      throw std::invalid_argument("document " + doc.id + " has no gold labels");
    }
    gold.insert(gold.end(), doc.gold.begin(), doc.gold.end());
  }
  return gold;
}

std::vector<int> HardLabels(const PosteriorMatrix& p) {
  const int background = p.width() - 1;
  std::vector<int> out(p.rows(), background);
  for (std::size_t i = 0; i < p.rows(); ++i) {
    const auto row = p.row(i);
    int best = background;
    double best_p = row[background];
    for (int k = 0; k < background; ++k) {
      if (row[k] > best_p) {
        best = k;
        best_p = row[k];
      }
    }
    out[i] = best;
  }
  return out;
}

namespace {
double Ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}
double F1(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }
}  // namespace

ModelMetrics Evaluate(std::span<const int> predicted, std::span<const int> gold,
                      const LabelSet& labels) {
  if (predicted.size() != gold.size()) {
    throw std::invalid_argument("prediction and gold lengths differ (" +
                                std::to_string(predicted.size()) + " vs " +
                                std::to_string(gold.size()) + ")");
  }
  const int C = labels.num_classes();
  ModelMetrics m;
  m.tokens = gold.size();
  m.per_class.resize(C);
  for (int c = 0; c < C; ++c) m.per_class[c].label = labels.name(c);
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const int p = predicted[i];
    const int g = gold[i];
    if (p == g) {
      if (p < C) ++m.per_class[p].tp;
      continue;
    }
    if (p < C) ++m.per_class[p].fp;
    if (g < C) ++m.per_class[g].fn;
  }
  for (auto& c : m.per_class) {
    c.precision = Ratio(c.tp, c.tp + c.fp);
    c.recall = Ratio(c.tp, c.tp + c.fn);
    c.f1 = F1(c.precision, c.recall);
    m.tp += c.tp;
    m.fp += c.fp;
    m.fn += c.fn;
  }
  m.micro_precision = Ratio(m.tp, m.tp + m.fp);
  m.micro_recall = Ratio(m.tp, m.tp + m.fn);
  m.micro_f1 = F1(m.micro_precision, m.micro_recall);
  return m;
}

std::string FormatMetrics(const ModelMetrics& metrics) {
  std::ostringstream out;
  out << std::left << std::setw(14) << "class" << std::right << std::setw(8) << "tp"
      << std::setw(8) << "fp" << std::setw(8) << "fn" << std::setw(11) << "precision"
      << std::setw(9) << "recall" << std::setw(9) << "f1" << '\n';
  out << std::fixed << std::setprecision(4);
  const auto row = [&](const std::string& name, std::size_t tp, std::size_t fp,
                       std::size_t fn, double p, double r, double f) {
    out << std::left << std::setw(14) << name << std::right << std::setw(8) << tp
        << std::setw(8) << fp << std::setw(8) << fn << std::setw(11) << p << std::setw(9)
        << r << std::setw(9) << f << '\n';
  };
  for (const auto& c : metrics.per_class) {
    row(c.label, c.tp, c.fp, c.fn, c.precision, c.recall, c.f1);
  }
  row("micro", metrics.tp, metrics.fp, metrics.fn, metrics.micro_precision,
      metrics.micro_recall, metrics.micro_f1);
  return out.str();
}

std::vector<LFStats> ComputeLFStats(const LabelMatrix& train, const LabelMatrix* dev,
                                    std::span<const int> dev_gold) {
  const std::size_t l = train.cols();
  if (dev) {
    CheckColumns(*dev, l);
    if (dev_gold.size() != dev->rows()) {
      throw std::invalid_argument("dev gold does not align with the dev matrix");
    }
  }
  std::vector<LFStats> stats(l);
  std::vector<std::size_t> votes(l, 0), conflicts(l, 0);
  for (std::size_t i = 0; i < train.rows(); ++i) {
    const auto row = train.row(i);
    for (std::size_t j = 0; j < l; ++j) {
      if (row[j] == kAbstain) continue;
      ++votes[j];
      for (std::size_t k = 0; k < l; ++k) {
        if (k != j && row[k] != kAbstain && row[k] != row[j]) {
          ++conflicts[j];
          break;
        }
      }
    }
  }
  for (std::size_t j = 0; j < l; ++j) {
    stats[j].coverage = Ratio(votes[j], train.rows());
    stats[j].conflict_rate = Ratio(conflicts[j], votes[j]);
  }
  if (dev) {
    for (std::size_t i = 0; i < dev->rows(); ++i) {
      for (std::size_t j = 0; j < l; ++j) {
        const int v = dev->at(i, j);
        if (v == kAbstain) continue;
        ++stats[j].dev_votes;
        if (v == dev_gold[i]) ++stats[j].dev_correct;
      }
    }
    for (auto& s : stats) {
      if (s.dev_votes > 0) s.dev_precision = Ratio(s.dev_correct, s.dev_votes);
    }
  }
  return stats;
}

std::vector<std::string> ToBio(std::span<const int> hard, const LabelSet& labels) {
  std::vector<std::string> out;
  out.reserve(hard.size());
  for (std::size_t i = 0; i < hard.size(); ++i) {
    const int c = hard[i];
    if (c == labels.background()) {
      out.emplace_back(kBackground);
    } else {
      const bool inside = i > 0 && hard[i - 1] == c;
      out.push_back((inside ? "I-" : "B-") + labels.name(c));
    }
  }
  return out;
}

std::string ExportRecord(const Document& doc, const PosteriorMatrix& p, std::size_t offset,
                         const LabelSet& labels) {
  using nlohmann::json;
  json tokens = json::array(), rows = json::array(), hard_names = json::array();
  std::vector<int> hard;
  const int background = labels.background();
  for (std::size_t t = 0; t < doc.size(); ++t) {
    tokens.push_back(doc.tokens[t].text);
    const auto row = p.row(offset + t);
    rows.push_back(std::vector<double>(row.begin(), row.end()));
    int best = background;
    for (int k = 0; k < background; ++k) {
      if (row[k] > row[best]) best = k;
    }
    hard.push_back(best);
    hard_names.push_back(labels.name(best));
  }
  json j;
  j["id"] = doc.id;
  j["tokens"] = std::move(tokens);
  j["p"] = std::move(rows);
  j["hard"] = std::move(hard_names);
  j["bio"] = ToBio(hard, labels);
  return j.dump();
}

}  // namespace spanlab

#include "commands.h"

#include <signal.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <iterator>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "spanlab/planted_corpus.h"
#include "spanlab/service.h"

namespace spanlab::cli {

namespace {

using nlohmann::json;

// Input errors map to 2, state errors to 3.
int ReportSessionError(const SessionError& e, std::ostream& err) {
  err << "error: " << e.code() << ": " << e.what() << '\n';
  if (e.code() == "VERSION_MISMATCH" || e.code() == "CORRUPT_PROJECT") return kInputError;
  return kStateError;
}

template <typename F>
int Guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const SessionError& e) {
    return ReportSessionError(e, err);
  } catch (const IngestError& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const json::exception& e) {
    err << "error: malformed JSON: " << e.what() << '\n';
    return kInputError;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kStateError;
  }
}

std::vector<std::string> ReadLines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") != std::string::npos) lines.push_back(line);
  }
  return lines;
}

void WriteOutput(const std::filesystem::path& path, const std::string& text, std::ostream& out) {
  if (path.empty()) {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::invalid_argument("cannot write " + path.string());
  f << text;
  if (!f) throw std::invalid_argument("failed writing " + path.string());
}

ModelKind RequireModel(const std::string& name) {
  auto kind = ParseModelKind(name);
  if (!kind) throw std::invalid_argument("unknown model " + name);
  return *kind;
}

Split RequireSplit(const std::string& name) {
  auto split = ParseSplit(name);
  if (!split) throw std::invalid_argument("unknown split " + name);
  return *split;
}

bool BetterSuggestion(const Suggestion& a, const Suggestion& b) {
  if (*a.preview.dev_precision != *b.preview.dev_precision) {
    return *a.preview.dev_precision > *b.preview.dev_precision;
  }
  if (a.doc_coverage != b.doc_coverage) return a.doc_coverage > b.doc_coverage;
  return a.lf.id < b.lf.id;
}

// Train rows each selected function votes on, grouped by vote.
class SelectionFootprint {
 public:
  explicit SelectionFootprint(const Corpus& corpus) : corpus_(corpus) {}

  std::vector<std::size_t> Rows(const LabelingFunction& lf) const {
    const LabelMatrix m = BuildMatrix(corpus_, std::span(&lf, 1), Split::kTrain);
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < m.rows(); ++i) {
      if (m.at(i, 0) != kAbstain) rows.push_back(i);
    }
    return rows;
  }

  // True when the rows nearly coincide with those of a selected function
  // that casts the same vote.
  bool NearDuplicate(int vote, const std::vector<std::size_t>& rows) const {
    auto it = by_vote_.find(vote);
    if (it == by_vote_.end()) return false;
    for (const auto& other : it->second) {
      std::vector<std::size_t> common;
      std::set_intersection(rows.begin(), rows.end(), other.begin(), other.end(),
                            std::back_inserter(common));
      const std::size_t joined = rows.size() + other.size() - common.size();
      if (joined == 0 || static_cast<double>(common.size()) >= kNearDuplicate * joined) {
        return true;
      }
    }
    return false;
  }

  void Add(int vote, std::vector<std::size_t> rows) { by_vote_[vote].push_back(std::move(rows)); }

 private:
  static constexpr double kNearDuplicate = 0.9;
  const Corpus& corpus_;
  std::map<int, std::vector<std::vector<std::size_t>>> by_vote_;
};

constexpr double kAutoSelectFloor = 0.5;
constexpr std::size_t kSpansPerDocument = 3;

}  // namespace

void DictionaryTagger::Add(const std::vector<std::string>& tokens, int label) {
  if (tokens.empty()) return;
  std::vector<std::string> key;
  key.reserve(tokens.size());
  for (const auto& t : tokens) key.push_back(CaseFold(t));
  entries_.emplace(std::move(key), label);
  longest_ = std::max(longest_, tokens.size());
}

std::vector<int> DictionaryTagger::Tag(const Document& doc, int background) const {
  std::vector<int> out(doc.size(), background);
  std::vector<std::string> folded;
  folded.reserve(doc.size());
  for (const auto& t : doc.tokens) folded.push_back(CaseFold(t.text));
  std::size_t i = 0;
  while (i < folded.size()) {
    std::size_t matched = 0;
    for (std::size_t len = std::min(longest_, folded.size() - i); len > 0; --len) {
      std::vector<std::string> key(folded.begin() + i, folded.begin() + i + len);
      auto it = entries_.find(key);
      if (it != entries_.end()) {
        std::fill(out.begin() + i, out.begin() + i + len, it->second);
        matched = len;
        break;
      }
    }
    i += matched ? matched : 1;
  }
  return out;
}

std::vector<SpanAnnotation> GoldSpans(const Document& doc, const LabelSet& labels) {
  std::vector<SpanAnnotation> spans;
  std::size_t i = 0;
  while (i < doc.gold.size()) {
    const int g = doc.gold[i];
    std::size_t j = i + 1;
    while (j < doc.gold.size() && doc.gold[j] == g) ++j;
    if (g != labels.background()) {
      spans.push_back({doc.id, i, j, labels.name(g), Polarity::kPositive});
    }
    i = j;
  }
  std::stable_sort(spans.begin(), spans.end(), [](const auto& a, const auto& b) {
    return a.end - a.start > b.end - b.start;
  });
  return spans;
}

std::vector<CurveRow> Simulate(Project& project, std::size_t budget, std::ostream& log) {
  const Corpus& corpus = project.corpus();
  const LabelSet& labels = corpus.labels();
  if (corpus.split(Split::kDev).empty()) {
    throw std::invalid_argument("simulation needs a dev split with gold");
  }
  if (corpus.split(Split::kTest).empty()) {
    throw std::invalid_argument("simulation needs a test split with gold");
  }
  for (std::size_t d : corpus.split(Split::kTrain)) {
    if (!corpus.document(d).has_gold()) {
      throw std::invalid_argument("train document " + corpus.document(d).id +
                                  " has no gold for the scripted annotator");
    }
  }
  const std::size_t available =
      corpus.split(Split::kTrain).size() - project.sampler_state().served.size();
  if (budget > available) {
    log << "warning: budget " << budget << " exceeds the " << available
        << " unserved train documents; truncating\n";
    budget = available;
  }

  // Test gold is read for reporting only.
  const auto test_gold = SplitGold(corpus, Split::kTest);
  DictionaryTagger dictionary;
  SelectionFootprint footprint(corpus);
  for (const auto& id : project.selected()) {
    const auto& lf = *project.find_function(id);
    footprint.Add(lf.vote(labels), footprint.Rows(lf));
  }
  std::vector<CurveRow> rows;
  std::size_t elapsed = 0;
  for (std::size_t interaction = 1; interaction <= budget; ++interaction) {
    const Pick pick = project.NextDocument();
    const Document& doc = *corpus.find(pick.doc_id);
    elapsed += doc.size();

    auto spans = GoldSpans(doc, labels);
    for (const auto& span : spans) {
      std::vector<std::string> surface;
      for (std::size_t t = span.start; t < span.end; ++t) surface.push_back(doc.tokens[t].text);
      dictionary.Add(surface, *labels.code(span.label));
    }
    std::erase_if(spans, [](const auto& s) { return s.end - s.start > kMaxSpanLength; });
    if (spans.size() > kSpansPerDocument) spans.resize(kSpansPerDocument);

    for (const auto& span : spans) {
      const auto suggestions = project.SubmitAnnotation(span);
      const Suggestion* best = nullptr;
      std::vector<std::size_t> best_rows;
      for (const auto& s : suggestions) {
        if (project.selected().count(s.lf.id)) continue;
        if (!s.preview.dev_precision || *s.preview.dev_precision < kAutoSelectFloor) continue;
        if (best && !BetterSuggestion(s, *best)) continue;
        // An annotator passes on a rule that nearly copies one already chosen.
        auto rows = footprint.Rows(s.lf);
        if (footprint.NearDuplicate(s.lf.vote(labels), rows)) continue;
        best = &s;
        best_rows = std::move(rows);
      }
      if (best) {
        project.SetSelected(best->lf.id, true);
        footprint.Add(best->lf.vote(labels), std::move(best_rows));
      }
    }

    CurveRow row;
    row.interaction = interaction;
    row.elapsed_proxy = elapsed;
    row.n_lfs = project.selected().size();
    if (!project.selected().empty()) {
      auto snapshot =
          project.status() == SnapshotStatus::kFresh ? project.snapshot() : project.Retrain();
      if (snapshot->dev_metrics) row.dev_f1 = snapshot->dev_metrics->micro_f1;
      const auto p = snapshot->Infer(corpus, Split::kTest);
      row.test_f1 = Evaluate(HardLabels(p), test_gold, labels).micro_f1;
    }
    std::vector<int> baseline;
    baseline.reserve(test_gold.size());
    for (std::size_t d : corpus.split(Split::kTest)) {
      const auto tags = dictionary.Tag(corpus.document(d), labels.background());
      baseline.insert(baseline.end(), tags.begin(), tags.end());
    }
    row.baseline_f1 = Evaluate(baseline, test_gold, labels).micro_f1;
    rows.push_back(row);

    char note[160];
    std::snprintf(note, sizeof(note),
                  "[%zu/%zu] %s via %s: lfs=%zu dev_f1=%.3f test_f1=%.3f baseline=%.3f\n",
                  interaction, budget, doc.id.c_str(), StrategyName(pick.strategy), row.n_lfs,
                  row.dev_f1, row.test_f1, row.baseline_f1);
    log << note;
  }
  return rows;
}

std::string FormatCurve(const std::vector<CurveRow>& rows) {
  std::string out = std::string(kCurveHeader) + "\n";
  char line[160];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%zu,%zu,%zu,%.6f,%.6f,%.6f\n", r.interaction,
                  r.elapsed_proxy, r.n_lfs, r.dev_f1, r.test_f1, r.baseline_f1);
    out += line;
  }
  return out;
}

int CmdIngest(const IngestArgs& args, std::ostream& out, std::ostream& err) {
  return Guarded(err, [&] {
    const ModelKind kind = RequireModel(args.model);
    Project project = Project::Create(args.paths, kind, args.tau, args.seed);
    out << FormatStats(ComputeStats(project.corpus()), project.labels());
    if (!args.out.empty()) {
      project.Save(args.out);
      out << "project written to " << args.out.string() << '\n';
    }
    return static_cast<int>(kOk);
  });
}

int CmdApply(const ApplyArgs& args, std::ostream& out, std::ostream& err) {
  return Guarded(err, [&] {
    const Split split = RequireSplit(args.split);
    const Project project = Project::Load(args.project);
    std::string text;
    for (const auto& line : project.Export(split, args.force)) text += line + "\n";
    WriteOutput(args.out, text, out);
    return static_cast<int>(kOk);
  });
}

int CmdEvaluate(const EvaluateArgs& args, std::ostream& out, std::ostream& err) {
  return Guarded(err, [&] {
    std::map<std::string, std::vector<std::string>> gold_by_id;
    for (const auto& line : ReadLines(args.gold)) {
      const json j = json::parse(line);
      auto g = j.find("gold");
      if (g == j.end() || g->is_null()) continue;
      gold_by_id[j.at("id").get<std::string>()] = g->get<std::vector<std::string>>();
    }
    std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>> aligned;
    std::set<std::string> names;
    for (const auto& line : ReadLines(args.pred)) {
      const json j = json::parse(line);
      const auto id = j.at("id").get<std::string>();
      auto hard = j.at("hard").get<std::vector<std::string>>();
      auto it = gold_by_id.find(id);
      if (it == gold_by_id.end()) throw std::invalid_argument("no gold for document " + id);
      if (it->second.size() != hard.size()) {
        throw std::invalid_argument("length mismatch for document " + id + ": " +
                                    std::to_string(hard.size()) + " predicted vs " +
                                    std::to_string(it->second.size()) + " gold");
      }
      for (const auto& n : hard) names.insert(n);
      for (const auto& n : it->second) names.insert(n);
      aligned.emplace_back(std::move(hard), it->second);
    }
    names.erase("O");
    std::vector<std::string> classes = args.classes;
    if (classes.empty()) classes.assign(names.begin(), names.end());
    const LabelSet labels(classes);
    std::vector<int> pred, gold;
    auto encode = [&](const std::string& name) {
      if (name == "O") return labels.background();
      auto code = labels.code(name);
      if (!code) throw std::invalid_argument("label " + name + " is not in the class list");
      return *code;
    };
    for (const auto& [p, g] : aligned) {
      for (const auto& n : p) pred.push_back(encode(n));
      for (const auto& n : g) gold.push_back(encode(n));
    }
    out << FormatMetrics(Evaluate(pred, gold, labels));
    return static_cast<int>(kOk);
  });
}

int CmdSimulate(const SimulateArgs& args, std::ostream& out, std::ostream& err) {
  return Guarded(err, [&] {
    const ModelKind kind = RequireModel(args.model);
    Project project = Project::Load(args.project);
    project.set_model_kind(kind);
    project.set_sampler_seed(args.seed);
    const auto rows = Simulate(project, args.budget, err);
    WriteOutput(args.out, FormatCurve(rows), out);
    return static_cast<int>(kOk);
  });
}

int CmdSynth(const SynthArgs& args, std::ostream& out, std::ostream& err) {
  return Guarded(err, [&] {
    PlantedCorpusOptions options;
    options.seed = args.seed;
    options.train_docs = args.train;
    options.dev_docs = args.dev;
    options.test_docs = args.test;
    options.noise = args.noise;
    const auto planted = GeneratePlantedCorpus(options);
    const auto paths = WritePlantedCorpus(planted, args.out);
    out << "wrote " << planted.documents.size() << " documents to "
        << paths.corpus.parent_path().string() << '\n';
    return static_cast<int>(kOk);
  });
}

int CmdServe(const ServeArgs& args, std::ostream& out, std::ostream& err) {
  return Guarded(err, [&] {
    // Block the shutdown signals before any server thread exists so that
    // only sigwait below receives them.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    Service service(Project::Load(args.project), ServiceOptions{args.project});
    const int port = service.Bind(args.host, args.port);
    service.Start();
    out << "listening on http://" << args.host << ':' << port << std::endl;
    int received = 0;
    sigwait(&signals, &received);
    out << "shutting down" << std::endl;
    service.Stop();
    return static_cast<int>(kOk);
  });
}

int Run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Interactive weak-supervision span annotation"};
  app.require_subcommand(1);

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Validate a corpus and write a project file");
  c_ingest->add_option("--corpus", ingest.paths.corpus)->required();
  c_ingest->add_option("--emb-a", ingest.paths.emb_a)->required();
  c_ingest->add_option("--emb-b", ingest.paths.emb_b)->required();
  c_ingest->add_option("--sent", ingest.paths.sent)->required();
  c_ingest->add_option("--labels", ingest.paths.labels)->required();
  c_ingest->add_option("--out", ingest.out, "Project file to write");
  c_ingest->add_option("--model", ingest.model, "majority, generative or hmm");
  c_ingest->add_option("--tau", ingest.tau, "Default similarity threshold");
  c_ingest->add_option("--seed", ingest.seed, "Sampler seed");

  ApplyArgs apply;
  auto* c_apply = app.add_subcommand("apply", "Export posteriors and hard labels for a split");
  c_apply->add_option("--project", apply.project)->required();
  c_apply->add_option("--split", apply.split);
  c_apply->add_option("--out", apply.out, "Output file; stdout when omitted");
  c_apply->add_flag("--force", apply.force, "Export even if the model is stale");

  EvaluateArgs evaluate;
  auto* c_eval = app.add_subcommand("evaluate", "Score exported predictions against gold");
  c_eval->add_option("--pred", evaluate.pred)->required();
  c_eval->add_option("--gold", evaluate.gold)->required();
  c_eval->add_option("--classes", evaluate.classes, "Class order")->delimiter(',');

  SimulateArgs simulate;
  auto* c_sim = app.add_subcommand("simulate", "Run a scripted annotation session");
  c_sim->add_option("--project", simulate.project)->required();
  c_sim->add_option("--budget", simulate.budget);
  c_sim->add_option("--seed", simulate.seed);
  c_sim->add_option("--model", simulate.model)
      ->check(CLI::IsMember({"majority", "generative", "hmm"}));
  c_sim->add_option("--out", simulate.out, "CSV file; stdout when omitted");

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Write the planted synthetic corpus");
  c_synth->add_option("--out", synth.out)->required();
  c_synth->add_option("--seed", synth.seed);
  c_synth->add_option("--train", synth.train);
  c_synth->add_option("--dev", synth.dev);
  c_synth->add_option("--test", synth.test);
  c_synth->add_option("--noise", synth.noise);

  ServeArgs serve;
  auto* c_serve = app.add_subcommand("serve", "Serve a project over HTTP");
  c_serve->add_option("--project", serve.project)->required();
  c_serve->add_option("--host", serve.host);
  c_serve->add_option("--port", serve.port);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInputError;
  }

  if (c_ingest->parsed()) return CmdIngest(ingest, out, err);
  if (c_apply->parsed()) return CmdApply(apply, out, err);
  if (c_eval->parsed()) return CmdEvaluate(evaluate, out, err);
  if (c_sim->parsed()) return CmdSimulate(simulate, out, err);
  if (c_synth->parsed()) return CmdSynth(synth, out, err);
  if (c_serve->parsed()) return CmdServe(serve, out, err);
  return kInputError;
}

}  // namespace spanlab::cli

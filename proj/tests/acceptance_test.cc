// Acceptance runner. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails. Every tolerance and time limit is a constant below.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "commands.h"
#include "httplib.h"
#include "json.hpp"
#include "oracles.h"
#include "rule_oracle.h"
#include "spanlab/planted_corpus.h"
#include "spanlab/rules.h"
#include "spanlab/service.h"
#include "spanlab/session.h"
#include "table_shaped_corpus.h"
#include "test_util.h"

namespace spanlab {
namespace {

using nlohmann::json;
using testing::TempDir;

constexpr double kMajorityMaxSeconds = 5.0;
constexpr double kHmmTolerance = 1e-8;
constexpr double kHmmMaxSeconds = 30.0;
constexpr double kMonotoneSlack = 1e-9;
constexpr double kRecoveryTolerance = 0.05;
constexpr double kTargetF1 = 0.85;
constexpr double kSimulationMaxSeconds = 120.0;
constexpr std::size_t kBaselineFrom = 10;

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Records the first failure; later checks keep running so the detail
// names the earliest problem.
class Check {
 public:
  void Expect(bool ok, const std::string& what) {
    if (!ok && out_.pass) {
      out_.pass = false;
      out_.detail = what;
    }
  }
  Outcome Done(std::string detail) {
    if (out_.pass) out_.detail = std::move(detail);
    return out_;
  }

 private:
  Outcome out_;
};

double Seconds(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

std::string Sci(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2e", x);
  return buf;
}

std::string Fmt(double x, int digits = 4) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(digits);
  s << x;
  return s.str();
}

Outcome MajorityOracle() {
  Check c;
  std::mt19937_64 rng(1001);
  const auto t0 = std::chrono::steady_clock::now();
  for (int trial = 0; trial < 1000; ++trial) {
    const int classes = 1 + static_cast<int>(rng() % 3);
    const auto m = testing::RandomMatrix(rng, 1 + rng() % 50, 1 + rng() % 8, classes);
    const auto p = FitMajority(m);
    const auto want = testing::MajorityOracle(m);
    for (std::size_t i = 0; i < m.rows(); ++i) {
      for (int k = 0; k < m.num_outputs(); ++k) {
        c.Expect(p.at(i, k) == want[i][k], "matrix " + std::to_string(trial) + " row " +
                                               std::to_string(i) + " differs");
      }
    }
  }
  const double s = Seconds(t0);
  c.Expect(s < kMajorityMaxSeconds, "took " + Fmt(s, 2) + " s");
  return c.Done("1000 matrices exact in " + Fmt(s, 2) + " s");
}

Outcome HmmExactness() {
  Check c;
  std::mt19937_64 rng(1002);
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (int trial = 0; trial < 500; ++trial) {
    // |S| = classes + 1 <= 3; documents of length <= 8.
    const int classes = 1 + static_cast<int>(rng() % 2);
    const auto m = testing::RandomMatrix(rng, 1 + rng() % 16, 1 + rng() % 4, classes, 0.4, 8);
    const auto params = testing::RandomHmmParams(rng, m.num_outputs(), m.cols());
    const auto p = HmmPosterior(m, params);
    const auto want = testing::EnumerationMarginals(m, params, nullptr);
    for (std::size_t i = 0; i < m.rows(); ++i) {
      for (int k = 0; k < m.num_outputs(); ++k) {
        worst = std::max(worst, std::abs(p.at(i, k) - want[i][k]));
      }
    }
  }
  const double s = Seconds(t0);
  c.Expect(worst <= kHmmTolerance, "max deviation " + Sci(worst));
  c.Expect(s < kHmmMaxSeconds, "took " + Fmt(s, 2) + " s");
  return c.Done("500 instances, max deviation " + Sci(worst) + " in " + Fmt(s, 2) +
                " s");
}

Outcome EmMonotonicity() {
  Check c;
  std::mt19937_64 rng(1003);
  double worst = 0.0;
  const auto scan = [&](const std::vector<double>& trace, const std::string& what) {
    for (std::size_t t = 1; t < trace.size(); ++t) {
      const double drop = trace[t - 1] - trace[t];
      worst = std::max(worst, drop);
      c.Expect(drop <= kMonotoneSlack, what + " drops by " + Sci(drop));
    }
  };
  for (int trial = 0; trial < 100; ++trial) {
    const auto m = testing::RandomMatrix(rng, 1 + rng() % 80, 1 + rng() % 6, 1 + rng() % 3);
    scan(FitGenerative(m).params.trace, "generative fit " + std::to_string(trial));
  }
  for (int trial = 0; trial < 100; ++trial) {
    const auto m =
        testing::RandomMatrix(rng, 1 + rng() % 80, 1 + rng() % 6, 1 + rng() % 3, 0.4, 12);
    scan(FitHmm(m).params.trace, "hmm fit " + std::to_string(trial));
  }
  return c.Done("200 fits, largest decrease " + Sci(std::max(0.0, worst)));
}

Outcome ParameterRecovery() {
  Check c;
  std::mt19937_64 rng(2024);
  const auto s = testing::SampleGenerative(rng, 10000, 1, {0, 0, 0, 0, 0}, 0.8, 0.1);
  const auto fit = FitGenerative(s.matrix);
  double worst = 0.0;
  for (std::size_t j = 0; j < 5; ++j) {
    worst = std::max({worst, std::abs(fit.params.hit_rate[j] - 0.8),
                      std::abs(fit.params.false_rate[j] - 0.1)});
  }
  c.Expect(worst <= kRecoveryTolerance, "max error " + Fmt(worst));
  return c.Done("max parameter error " + Fmt(worst));
}

Outcome SynthesizerSoundness() {
  Check c;
  std::size_t annotations = 0, candidates = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    testing::RandomCorpusOptions o;
    o.seed = seed;
    const Corpus corpus = testing::RandomCorpus(o);
    std::mt19937_64 rng(seed * 7919);
    for (int a = 0; a < 10; ++a) {
      const auto& doc = corpus.document(rng() % corpus.documents().size());
      const std::size_t k = 1 + rng() % std::min<std::size_t>(kMaxSpanLength, doc.size());
      const std::size_t start = rng() % (doc.size() - k + 1);
      const SpanAnnotation ann{doc.id, start, start + k, "C" + std::to_string(rng() % 2),
                               rng() % 4 == 0 ? Polarity::kNegative : Polarity::kPositive};
      const auto r = Synthesize(ann, corpus);
      ++annotations;
      c.Expect(!r.candidates.empty(), "no candidates for " + doc.id);
      for (std::size_t i = 0; i < r.candidates.size(); ++i) {
        const auto& lf = r.candidates[i];
        ++candidates;
        const auto own = testing::OracleMatches(lf, doc, corpus);
        c.Expect(std::find(own.begin(), own.end(), std::make_pair(ann.start, ann.end)) !=
                     own.end(),
                 Describe(lf) + " misses its source span");
        std::size_t hit = 0;
        for (auto d : corpus.split(Split::kTrain)) {
          hit += !testing::OracleMatches(lf, corpus.document(d), corpus).empty();
        }
        c.Expect(r.doc_coverage[i] == hit, Describe(lf) + " coverage " +
                                               std::to_string(r.doc_coverage[i]) + " vs " +
                                               std::to_string(hit));
      }
    }
  }
  return c.Done(std::to_string(annotations) + " annotations, " + std::to_string(candidates) +
                " candidates sound");
}

CorpusPaths SmallPlanted(const std::filesystem::path& dir) {
  PlantedCorpusOptions o;
  o.train_docs = 60;
  o.dev_docs = 30;
  o.test_docs = 30;
  return WritePlantedCorpus(GeneratePlantedCorpus(o), dir);
}

// Serves every train document once; returns the ids and strategies.
std::vector<Pick> Drain(Project& project) {
  std::vector<Pick> picks;
  while (true) {
    try {
      picks.push_back(project.NextDocument());
    } catch (const SessionComplete&) {
      return picks;
    }
  }
}

Project FittedProject(const CorpusPaths& paths, std::uint64_t seed) {
  auto project = Project::Create(paths, ModelKind::kGenerative, kDefaultTau, seed);
  const auto& doc = project.corpus().document(project.corpus().split(Split::kTrain)[0]);
  for (const auto& span : cli::GoldSpans(doc, project.labels())) {
    const auto s = project.SubmitAnnotation(span);
    if (!s.empty()) project.SetSelected(s.front().lf.id, true);
  }
  project.Retrain();
  return project;
}

Outcome SamplerContracts() {
  Check c;
  TempDir dir;
  const auto paths = SmallPlanted(dir / "corpus");
  const std::size_t train = 60;
  for (bool fitted : {false, true}) {
    const std::string mode = fitted ? "fitted" : "cold-start";
    auto a = fitted ? FittedProject(paths, 11) : Project::Create(paths, ModelKind::kGenerative,
                                                                 kDefaultTau, 11);
    auto b = fitted ? FittedProject(paths, 11) : Project::Create(paths, ModelKind::kGenerative,
                                                                 kDefaultTau, 11);
    const auto pa = Drain(a), pb = Drain(b);
    c.Expect(pa.size() == train, mode + ": served " + std::to_string(pa.size()));
    std::set<std::string> ids;
    std::string seq_a, seq_b;
    for (const auto& p : pa) {
      ids.insert(p.doc_id);
      seq_a += p.doc_id + ':' + StrategyName(p.strategy) + '\n';
    }
    for (const auto& p : pb) seq_b += p.doc_id + ':' + StrategyName(p.strategy) + '\n';
    c.Expect(ids.size() == pa.size(), mode + ": a document was served twice");
    c.Expect(seq_a == seq_b, mode + ": sequences differ under one seed");
    if (fitted) {
      c.Expect(a.snapshot() && a.snapshot()->dev, "fitted project has no dev posterior");
      for (std::size_t i = 0; i < pa.size(); ++i) {
        const Strategy want = i % 2 == 0 ? Strategy::kFalsePositiveGuided : Strategy::kUncertainty;
        c.Expect(pa[i].strategy == want, "pick " + std::to_string(i) + " used " +
                                             StrategyName(pa[i].strategy));
      }
    }
  }
  return c.Done("60 picks per session, no repeats, strict alternation, identical replays");
}

struct CurveCsv {
  std::vector<cli::CurveRow> rows;
  std::string header;
};

CurveCsv ReadCurve(const std::filesystem::path& path) {
  std::ifstream in(path);
  CurveCsv csv;
  std::getline(in, csv.header);
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6) continue;
    csv.rows.push_back({std::stoul(cells[0]), std::stoul(cells[1]), std::stoul(cells[2]),
                        std::stod(cells[3]), std::stod(cells[4]), std::stod(cells[5])});
  }
  return csv;
}

int RunCli(const std::vector<std::string>& args, std::string* err = nullptr) {
  std::ostringstream out, e;
  const int code = cli::Run(args, out, e);
  if (err) *err = e.str();
  return code;
}

std::vector<std::string> IngestArgs(const CorpusPaths& p, const std::filesystem::path& out) {
  return {"ingest", "--corpus", p.corpus.string(), "--emb-a", p.emb_a.string(), "--emb-b",
          p.emb_b.string(), "--sent", p.sent.string(), "--labels", p.labels.string(), "--out",
          out.string()};
}

Outcome EndToEndSimulation() {
  Check c;
  TempDir dir;
  std::string err;
  c.Expect(RunCli({"synth", "--out", (dir / "corpus").string(), "--seed", "7"}, &err) == 0,
           "synth failed: " + err);
  const auto corpus_dir = dir / "corpus";
  const CorpusPaths paths{corpus_dir / "corpus.jsonl", corpus_dir / "emb_a.bin",
                          corpus_dir / "emb_b.bin", corpus_dir / "sent.bin",
                          corpus_dir / "labels.json"};
  const auto project = dir / "project.json";
  c.Expect(RunCli(IngestArgs(paths, project), &err) == 0, "ingest failed: " + err);
  const auto csv = dir / "curve.csv";
  const auto t0 = std::chrono::steady_clock::now();
  c.Expect(RunCli({"simulate", "--project", project.string(), "--budget", "30", "--seed", "7",
                   "--model", "generative", "--out", csv.string()},
                  &err) == 0,
           "simulate failed: " + err);
  const double s = Seconds(t0);
  const auto curve = ReadCurve(csv);
  c.Expect(curve.header == cli::kCurveHeader, "unexpected header " + curve.header);
  c.Expect(curve.rows.size() == 30, "rows: " + std::to_string(curve.rows.size()));
  if (curve.rows.empty()) return c.Done("");
  const double final_f1 = curve.rows.back().test_f1;
  c.Expect(final_f1 >= kTargetF1, "final test F1 " + Fmt(final_f1));
  double margin = 1.0;
  for (const auto& row : curve.rows) {
    if (row.interaction < kBaselineFrom) continue;
    margin = std::min(margin, row.test_f1 - row.baseline_f1);
    c.Expect(row.test_f1 > row.baseline_f1,
             "interaction " + std::to_string(row.interaction) + ": " + Fmt(row.test_f1) +
                 " vs baseline " + Fmt(row.baseline_f1));
  }
  c.Expect(s < kSimulationMaxSeconds, "took " + Fmt(s, 1) + " s");
  return c.Done("final test F1 " + Fmt(final_f1) + ", baseline " +
                Fmt(curve.rows.back().baseline_f1) + ", min margin from interaction 10 " +
                Fmt(margin) + ", " + Fmt(s, 1) + " s");
}

Outcome IngestFidelity() {
  Check c;
  TempDir dir;
  const auto paths = testing::WriteShapedCorpus(testing::ChemDiseaseShape(), dir / "cdr");
  std::ostringstream out, err;
  cli::IngestArgs args;
  args.paths = paths;
  args.out = dir / "project.json";
  c.Expect(cli::CmdIngest(args, out, err) == 0, "ingest failed: " + err.str());
  const std::string report = out.str();
  const auto stats = ComputeStats(Ingest(paths));
  c.Expect(stats.all.documents == 866, "documents " + std::to_string(stats.all.documents));
  for (const char* needle : {"Chemical:   0.063", "Disease:    0.079", "Other:      0.858"}) {
    c.Expect(report.find(needle) != std::string::npos,
             std::string("report lacks \"") + needle + "\"");
  }
  return c.Done("866 documents, frequencies 0.063/0.079/0.858");
}

Outcome CliAndServiceContracts() {
  Check c;
  TempDir dir;
  const auto paths = SmallPlanted(dir / "corpus");
  const auto project_file = dir / "project.json";
  std::string err;
  c.Expect(RunCli(IngestArgs(paths, project_file), &err) == 0, "ingest: " + err);
  c.Expect(RunCli({"apply", "--project", project_file.string()}, &err) == 3,
           "apply without a snapshot should exit 3");
  c.Expect(RunCli({"evaluate", "--pred", (dir / "missing.jsonl").string(), "--gold",
                   paths.corpus.string()}) == 2,
           "evaluate on a missing file should exit 2");

  Service service(Project::Load(project_file),
                  ServiceOptions{project_file, std::chrono::milliseconds(50)});
  const int port = service.Bind("127.0.0.1", 0);
  service.Start();
  httplib::Client client("127.0.0.1", port);
  const auto call = [&](const std::string& method, const std::string& path,
                        const json& body = nullptr) -> std::pair<int, json> {
    auto res = method == "GET" ? client.Get(path)
                               : client.Post(path, body.is_null() ? "" : body.dump(),
                                             "application/json");
    if (!res) return {0, nullptr};
    return {res->status, json::parse(res->body, nullptr, false)};
  };

  auto [status, body] = call("GET", "/health");
  c.Expect(status == 200 && body == json{{"status", "ok"}}, "/health");
  std::tie(status, body) = call("GET", "/next_doc");
  c.Expect(status == 200 && body["payload"]["strategy"] == "uncertainty-cold-start", "/next_doc");
  const std::string doc_id = body["payload"].value("doc_id", "");

  const Corpus corpus = Ingest(paths);
  std::size_t selected = 0;
  for (const auto& span : cli::GoldSpans(*corpus.find(doc_id), corpus.labels())) {
    std::tie(status, body) = call("POST", "/annotations",
                                  {{"doc_id", span.doc_id}, {"start", span.start},
                                   {"end", span.end}, {"label", span.label},
                                   {"polarity", "positive"}});
    c.Expect(status == 200, "/annotations status " + std::to_string(status));
    const auto& suggestions = body["payload"]["suggestions"];
    if (status == 200 && !suggestions.empty()) {
      const std::string id = suggestions[0]["id"];
      std::tie(status, body) = call("POST", "/lfs/" + id + "/select");
      c.Expect(status == 200, "/select status " + std::to_string(status));
      ++selected;
    }
  }
  c.Expect(selected > 0, "no function selected");
  std::tie(status, body) = call("POST", "/annotations",
                                {{"doc_id", doc_id}, {"start", 3}, {"end", 2},
                                 {"label", "Chemical"}, {"polarity", "positive"}});
  c.Expect(status == 400 && body["error"]["code"] == "INVALID_SPAN", "reversed span accepted");

  bool fresh = false;
  for (int i = 0; i < 200 && !fresh; ++i) {
    std::tie(status, body) = call("GET", "/model");
    fresh = status == 200 && body["payload"]["status"] == "fresh";
    if (!fresh) std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  c.Expect(fresh, "model never became fresh");
  std::tie(status, body) = call("GET", "/export?split=test");
  c.Expect(status == 200 && body["payload"]["records"].size() == 30, "/export");
  std::tie(status, body) = call("POST", "/save");
  c.Expect(status == 200, "/save");
  service.Stop();

  const auto pred = dir / "test.jsonl";
  c.Expect(RunCli({"apply", "--project", project_file.string(), "--out", pred.string()}, &err) ==
               0,
           "apply after service save: " + err);
  c.Expect(RunCli({"evaluate", "--pred", pred.string(), "--gold", paths.corpus.string()},
                  &err) == 0,
           "evaluate: " + err);
  return c.Done("CLI exit codes and HTTP contract hold without any UI component");
}

}  // namespace
}  // namespace spanlab

int main() {
  using spanlab::Outcome;
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"majority-voter oracle", spanlab::MajorityOracle},
      {"hmm forward-backward exactness", spanlab::HmmExactness},
      {"em monotonicity", spanlab::EmMonotonicity},
      {"parameter recovery", spanlab::ParameterRecovery},
      {"synthesizer soundness", spanlab::SynthesizerSoundness},
      {"sampler contracts", spanlab::SamplerContracts},
      {"end-to-end simulation", spanlab::EndToEndSimulation},
      {"ingest fidelity", spanlab::IngestFidelity},
      {"cli and service over http", spanlab::CliAndServiceContracts},
  };
  int failures = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
